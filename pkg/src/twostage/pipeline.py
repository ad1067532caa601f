"""End-to-end channel estimators: sequential AoA-then-AoD SOMP, the single-shot
OMP baseline and the known-angle oracle."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from .channel import AngleDictionary, ArrayGeometry, ChannelRealization, response_matrix
from .errors import DegenerateEstimate, MemoryBudgetExceeded
from .recovery import MeasurementProblem, least_squares, somp
from .sounding import (
    SounderSet,
    observe,
    one_stage_sounders,
    stage1_sounders,
    stage2_sounders,
)

COND_LIMIT = 1e12
DEFAULT_ELEMENT_BUDGET = 5 * 10**7


@dataclass
class ChannelEstimate:
    """Common output of every estimator: paired angle lists plus the channel matrix."""

    aoa_freqs: np.ndarray
    aod_freqs: np.ndarray
    gains: np.ndarray
    h_hat: np.ndarray
    aoa_support: Optional[np.ndarray] = None
    aod_support: Optional[np.ndarray] = None
    mults: int = 0
    diagnostics: dict = field(default_factory=dict)


@dataclass
class TwoStageResult(ChannelEstimate):
    est_aoa_responses: Optional[np.ndarray] = None
    est_aod_responses: Optional[np.ndarray] = None
    r_hat: Optional[np.ndarray] = None
    pairing: Optional[list] = None


@dataclass
class StageOutput:
    support: np.ndarray
    responses: np.ndarray
    observations: np.ndarray
    sounders: SounderSet
    mults: int
    residual_norms: np.ndarray


def estimate_aoa(
    channel: ChannelRealization,
    geometry: ArrayGeometry,
    dict_r: AngleDictionary,
    bt1: int,
    p1: float,
    noise_std: float,
    rng: Optional[np.random.Generator] = None,
    num_paths: Optional[int] = None,
) -> StageOutput:
    """First stage: DFT combining over all receive antennas, SOMP over the AoA grid."""
    L = channel.num_paths if num_paths is None else num_paths
    snd = stage1_sounders(geometry, bt1, p1)
    y1 = observe(channel, snd, noise_std, rng)
    phi1 = snd.rsb.conj().T @ dict_r.response_matrix
    est = somp(MeasurementProblem(y1, phi1, L))
    return StageOutput(est.support, dict_r.columns(est.support), y1, snd, est.mults, est.residual_norms)


def estimate_aod(
    channel: ChannelRealization,
    geometry: ArrayGeometry,
    dict_t: AngleDictionary,
    est_aoa_responses: np.ndarray,
    bt2: int,
    p2: float,
    noise_std: float,
    rng: Optional[np.random.Generator] = None,
) -> StageOutput:
    """Second stage: combine onto range(A_r_hat), SOMP on Y2^H over the AoD grid."""
    snd = stage2_sounders(geometry, est_aoa_responses, bt2, p2)
    y2 = observe(channel, snd, noise_std, rng)
    phi2 = snd.tsb.conj().T @ dict_t.response_matrix
    L = est_aoa_responses.shape[1]
    est = somp(MeasurementProblem(y2.conj().T, phi2, L))
    return StageOutput(est.support, dict_t.columns(est.support), y2, snd, est.mults, est.residual_norms)


def _block_operator(snd: SounderSet, a_r: np.ndarray, a_t: np.ndarray) -> np.ndarray:
    # vec(W^H A_r R A_t^H F) = ((A_t^H F)^T kron W^H A_r) vec(R), column-major vec
    return np.kron((a_t.conj().T @ snd.tsb).T, snd.rsb.conj().T @ a_r)


def _vec(y: np.ndarray) -> np.ndarray:
    return y.reshape(-1, order="F")


def solve_normal(blocks, rhs) -> Tuple[np.ndarray, bool]:
    """(sum A_i^H A_i)^{-1} sum A_i^H b_i with a ridge fallback when ill conditioned."""
    gram = sum(a.conj().T @ a for a in blocks)
    vec = sum(a.conj().T @ b for a, b in zip(blocks, rhs))
    if np.linalg.cond(gram) > COND_LIMIT:
        warnings.warn("ill-conditioned reconstruction system, ridge applied", RuntimeWarning, stacklevel=3)
        gram = gram + 1e-12 * np.trace(gram).real / gram.shape[0] * np.eye(gram.shape[0])
        return np.linalg.solve(gram, vec), True
    return np.linalg.solve(gram, vec), False


def reconstruct_rhat(y1, y2, sounders1: SounderSet, sounders2: SounderSet, a_r, a_t):
    """Least-squares L x L coupling matrix from both stages' observations.

    Returns ``(R_hat, H_hat)`` with ``H_hat = A_r R_hat A_t^H``.
    """
    L = a_r.shape[1]
    a1 = _block_operator(sounders1, a_r, a_t)
    a2 = _block_operator(sounders2, a_r, a_t)
    if a1.shape[0] + a2.shape[0] < L * L:
        raise DegenerateEstimate("fewer observations than unknowns in the coupling matrix")
    r, _ = solve_normal([a1, a2], [_vec(y1), _vec(y2)])
    r_hat = r.reshape(L, L, order="F")
    return r_hat, a_r @ r_hat @ a_t.conj().T


def pair_paths(r_hat: np.ndarray):
    """Greedy matching of AoA (rows) to AoD (columns) by decreasing |R_hat| entry."""
    r_hat = np.asarray(r_hat)
    n = min(r_hat.shape)
    mag = np.abs(r_hat).astype(float)
    # stable sort: equal magnitudes resolved in row-major order
    order = np.argsort(-mag, axis=None, kind="stable")
    rows_used, cols_used, pairs = set(), set(), []
    for flat in order:
        i, j = divmod(int(flat), r_hat.shape[1])
        if i in rows_used or j in cols_used:
            continue
        rows_used.add(i)
        cols_used.add(j)
        pairs.append((i, j, complex(r_hat[i, j])))
        if len(pairs) == n:
            break
    return pairs


def path_regressors(snd: SounderSet, a_r: np.ndarray, a_t: np.ndarray) -> np.ndarray:
    """Columns vec(W^H a_r,l a_t,l^H F), one per path."""
    wa = snd.rsb.conj().T @ a_r
    af = a_t.conj().T @ snd.tsb
    return np.stack([_vec(np.outer(wa[:, l], af[l])) for l in range(a_r.shape[1])], axis=1)


def fit_gains(blocks: Sequence[Tuple[SounderSet, np.ndarray]], a_r, a_t, strict: bool = False) -> np.ndarray:
    """Least-squares path gains given paired responses, stacking every observation block."""
    x = np.concatenate([path_regressors(s, a_r, a_t) for s, _ in blocks], axis=0)
    y = np.concatenate([_vec(obs) for _, obs in blocks])
    gram = x.conj().T @ x
    if strict and np.linalg.cond(gram) > COND_LIMIT:
        raise DegenerateEstimate("path regressors are linearly dependent")
    h, _ = least_squares(x, y)
    return h


def two_stage_estimate(
    channel: ChannelRealization,
    geometry: ArrayGeometry,
    dict_r: AngleDictionary,
    dict_t: AngleDictionary,
    bt1: int,
    bt2: int,
    p1: float,
    p2: float,
    noise_std: float,
    rng: Optional[np.random.Generator] = None,
    refit: bool = True,
) -> TwoStageResult:
    """Full sequential estimator.

    With ``refit`` the final gains are re-estimated on the L paired atoms only, so
    the returned R_hat is a permuted diagonal; the unrestricted L x L solution is
    kept in ``diagnostics['r_hat_ls']``.
    """
    rng = np.random.default_rng() if rng is None else rng
    s1 = estimate_aoa(channel, geometry, dict_r, bt1, p1, noise_std, rng)
    s2 = estimate_aod(channel, geometry, dict_t, s1.responses, bt2, p2, noise_std, rng)
    a_r, a_t = s1.responses, s2.responses
    L = a_r.shape[1]
    r_ls, h_ls = reconstruct_rhat(s1.observations, s2.observations, s1.sounders, s2.sounders, a_r, a_t)
    pairs = pair_paths(r_ls)
    rows = np.array([p[0] for p in pairs])
    cols = np.array([p[1] for p in pairs])
    # support-recovery multiplies; the small L^2-unknown solve is tallied apart
    mults = s1.mults + s2.mults
    recon_mults = (s1.observations.size + s2.observations.size) * L**4
    if refit:
        gains = fit_gains([(s1.sounders, s1.observations), (s2.sounders, s2.observations)],
                          a_r[:, rows], a_t[:, cols])
        r_hat = np.zeros((L, L), dtype=complex)
        r_hat[rows, cols] = gains
        pairs = [(int(i), int(j), complex(g)) for i, j, g in zip(rows, cols, gains)]
        h_hat = a_r @ r_hat @ a_t.conj().T
    else:
        r_hat, h_hat = r_ls, h_ls
        gains = np.array([p[2] for p in pairs])
    return TwoStageResult(
        aoa_freqs=dict_r.grid_freqs[s1.support[rows]],
        aod_freqs=dict_t.grid_freqs[s2.support[cols]],
        gains=np.asarray(gains),
        h_hat=h_hat,
        aoa_support=s1.support,
        aod_support=s2.support,
        mults=int(mults),
        diagnostics={
            "r_hat_ls": r_ls,
            "stage1_residuals": s1.residual_norms,
            "stage2_residuals": s2.residual_norms,
            "stage_mults": (s1.mults, s2.mults),
            "recon_mults": recon_mults,
            "sounders": (s1.sounders, s2.sounders),
            "observations": (s1.observations, s2.observations),
        },
        est_aoa_responses=a_r,
        est_aod_responses=a_t,
        r_hat=r_hat,
        pairing=pairs,
    )


def one_stage_dictionary(snd: SounderSet, dict_r: AngleDictionary, dict_t: AngleDictionary) -> np.ndarray:
    """D = (F^T conj(A_t_bar)) kron (W^H A_r_bar); flat column q <-> (q mod G_r, q // G_r)."""
    return np.kron(snd.tsb.T @ dict_t.response_matrix.conj(), snd.rsb.conj().T @ dict_r.response_matrix)


def flat_to_pair(q, g_r: int):
    q = np.asarray(q)
    return q % g_r, q // g_r


def one_stage_omp(
    channel: ChannelRealization,
    geometry: ArrayGeometry,
    dict_r: AngleDictionary,
    dict_t: AngleDictionary,
    br: int,
    bt: int,
    p: float,
    noise_std: float,
    rng: Optional[np.random.Generator] = None,
    mode: str = "random_phase",
    element_budget: int = DEFAULT_ELEMENT_BUDGET,
) -> ChannelEstimate:
    """Single-shot baseline: OMP on the vectorized observation over the joint AoA/AoD grid."""
    rng = np.random.default_rng() if rng is None else rng
    g_r, g_t = dict_r.grid_size, dict_t.grid_size
    if g_r * g_t * br * bt > element_budget:
        raise MemoryBudgetExceeded(f"joint dictionary needs {g_r * g_t * br * bt} elements")
    snd = one_stage_sounders(geometry, br, bt, p, mode, rng)
    y = observe(channel, snd, noise_std, rng)
    d = one_stage_dictionary(snd, dict_r, dict_t)
    L = channel.num_paths
    est = somp(MeasurementProblem(_vec(y)[:, None], d, L))
    ir, it = flat_to_pair(est.support, g_r)
    gains = est.coefficients[:, 0]
    h_hat = (dict_r.columns(ir) * gains[None, :]) @ dict_t.columns(it).conj().T
    return ChannelEstimate(
        aoa_freqs=dict_r.grid_freqs[ir],
        aod_freqs=dict_t.grid_freqs[it],
        gains=gains,
        h_hat=h_hat,
        aoa_support=ir,
        aod_support=it,
        mults=est.mults,
        diagnostics={"flat_support": est.support, "sounders": snd},
    )


def oracle_sounders(channel: ChannelRealization, geometry: ArrayGeometry, bt1, bt2, p1, p2):
    """Both stages' sounders with the second-stage combiner built from the true AoAs."""
    return [stage1_sounders(geometry, bt1, p1),
            stage2_sounders(geometry, channel.rx_responses, bt2, p2)]


def oracle_estimate(
    channel: ChannelRealization,
    sounders: Union[SounderSet, Sequence[SounderSet]],
    observations=None,
    noise_std: float = 0.0,
    rng: Optional[np.random.Generator] = None,
) -> ChannelEstimate:
    """Gains by least squares with the true angles known.

    ``observations`` may be supplied (one array per sounder set); otherwise they are
    drawn with ``noise_std``.
    """
    sounders = [sounders] if isinstance(sounders, SounderSet) else list(sounders)
    if observations is None:
        observations = [observe(channel, s, noise_std, rng) for s in sounders]
    elif isinstance(observations, np.ndarray):
        observations = [observations]
    a_r, a_t = channel.rx_responses, channel.tx_responses
    gains = fit_gains(list(zip(sounders, observations)), a_r, a_t, strict=True)
    return ChannelEstimate(
        aoa_freqs=channel.aoa_freqs.copy(),
        aod_freqs=channel.aod_freqs.copy(),
        gains=gains,
        h_hat=(a_r * gains[None, :]) @ a_t.conj().T,
    )


def responses_from_freqs(n: int, freqs) -> np.ndarray:
    return response_matrix(n, freqs)
