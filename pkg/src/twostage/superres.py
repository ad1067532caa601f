"""Gridless angle estimation by atomic-norm denoising.

The problem ``min tr T(u) + tr Z + lam ||Y - R||_F^2`` subject to
``X = [[T(u), R], [R^H, Z]] >= 0`` is solved by ADMM; the frequencies are read off
the Toeplitz block with ESPRIT. Atoms are unit-norm array responses, and
``T(u)`` is the Hermitian Toeplitz matrix whose first column is ``u``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import linalg, optimize

from .channel import response_matrix, wrap_freq


@dataclass
class AdmmResult:
    u: np.ndarray
    R: np.ndarray
    X: np.ndarray
    trace_log: np.ndarray
    residual_log: np.ndarray
    converged: bool
    iterations: int
    scale: float = 1.0


@dataclass(frozen=True)
class FrequencyEstimate:
    freqs: np.ndarray
    powers: np.ndarray
    toeplitz_rank_gap: float
    low_confidence: bool = False
    diagnostics: dict = field(default_factory=dict)


def toeplitz_hermitian(u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=complex).copy()
    u[0] = u[0].real
    return linalg.toeplitz(u)


def _lower_diagonal_index(m: int):
    rows, cols = np.tril_indices(m)
    return rows, cols, rows - cols


def diagonal_sums(a: np.ndarray, m: int, index=None) -> np.ndarray:
    """s[t] = sum_k a[k + t, k] over the leading m x m block, t = 0..m-1."""
    rows, cols, off = _lower_diagonal_index(m) if index is None else index
    vals = a[rows, cols]
    return np.bincount(off, vals.real, m) + 1j * np.bincount(off, vals.imag, m)


def objective(u, Z, R, Y, lam) -> float:
    m = len(u)
    return float(m * u[0].real + np.trace(Z).real + lam * np.linalg.norm(Y - R) ** 2)


def max_objective_increase(trace_log, after: int = 10) -> float:
    """Largest step-to-step rise of the logged objective past iteration ``after``,
    relative to max(1, |objective|). Zero for a non-increasing log."""
    tl = np.asarray(trace_log, dtype=float)
    if len(tl) <= after + 1:
        return 0.0
    rise = np.diff(tl[after:]) / np.maximum(1.0, np.abs(tl[after + 1:]))
    return float(max(rise.max(), 0.0))


# noiseless data: penalty on the unit-norm scale, lam ||Y|| = NOISELESS_PENALTY;
# the fitted frequencies are biased by roughly 2e-3 / (lam ||Y||) for close paths
NOISELESS_PENALTY = 100.0


def default_penalty(noise_std: float, m: int, d: int, factor: float = 1.0, data_norm: float = 1.0) -> float:
    """lam = 1 / tau with tau ~ noise_std (sqrt(d) + sqrt(2 log m)), the expected
    largest correlation of the noise with any unit-norm atom.

    Without noise the program has no natural scale, so the penalty is fixed
    relative to the data norm instead.
    """
    if noise_std <= 0:
        return NOISELESS_PENALTY / max(data_norm, 1e-300)
    tau = noise_std * (math.sqrt(d) + math.sqrt(2 * math.log(max(m, 2))))
    return 1.0 / (factor * tau)


def atomic_admm(
    Y: np.ndarray,
    lam: float,
    rho: Optional[float] = None,
    max_iter: int = 10_000,
    tol: float = 1e-5,
    u_update: str = "exact",
    normalize: bool = True,
    min_iter: int = 20,
    rho_factor: float = 10.0,
) -> AdmmResult:
    """ADMM on the Toeplitz-lifted program.

    ``u_update="exact"`` uses the minimizer of the augmented Lagrangian for the
    diagonal entry, (V_1 + rho S_1 - m)/(m rho); ``"printed"`` uses
    (V_1 + rho S_1)/(m rho + m). Off-diagonal entries use (V_i + rho S_i)/((m - t) rho)
    with t the diagonal offset in both cases.

    With ``normalize`` the data are divided by their Frobenius norm c and the
    penalty multiplied by c, an equivalent problem with unit-scale data; outputs
    are mapped back to the original scale. ``rho=None`` sets rho to ``rho_factor``
    times that rescaled penalty. Iteration stops once both the primal residual ||X - B|| / ||X|| and
    the dual residual rho ||B_new - B_old|| / ||Lam|| fall below ``tol``.
    """
    if lam <= 0 or (rho is not None and rho <= 0):
        raise ValueError("lam and rho must be positive")
    Y = np.atleast_2d(np.asarray(Y, dtype=complex))
    if Y.shape[0] == 1 and Y.shape[1] > 1:
        Y = Y.T
    m, d = Y.shape
    c = float(np.linalg.norm(Y)) if normalize else 1.0
    if c == 0.0:
        c = 1.0
    Yn = Y / c
    lam_n = lam * c
    rho = rho_factor * lam_n if rho is None else float(rho)
    n = m + d
    X = np.zeros((n, n), dtype=complex)
    Lam = np.zeros((n, n), dtype=complex)
    counts = m - np.arange(m)
    eye_d = np.eye(d)
    trace_log, res_log = [], []
    converged = False
    u = np.zeros(m, dtype=complex)
    Z = np.zeros((d, d), dtype=complex)
    R = np.zeros((m, d), dtype=complex)
    B_old = np.zeros((n, n), dtype=complex)
    index = _lower_diagonal_index(m)
    it = 0
    for it in range(1, max_iter + 1):
        V = diagonal_sums(Lam, m, index)
        S = diagonal_sums(X, m, index)
        u = (V + rho * S) / (counts * rho)
        if u_update == "exact":
            u[0] = (V[0] + rho * S[0] - m).real / (m * rho)
        elif u_update == "printed":
            u[0] = (V[0] + rho * S[0]).real / (m * rho + m)
        else:
            raise ValueError(f"unknown u_update {u_update!r}")
        R = (lam_n * Yn + rho * X[:m, m:] + Lam[:m, m:]) / (lam_n + rho)
        Z = (Lam[m:, m:] + rho * X[m:, m:] - eye_d) / rho
        Z = 0.5 * (Z + Z.conj().T)
        B = np.empty((n, n), dtype=complex)
        B[:m, :m] = toeplitz_hermitian(u)
        B[:m, m:] = R
        B[m:, :m] = R.conj().T
        B[m:, m:] = Z
        Xt = B - Lam / rho
        Xt = 0.5 * (Xt + Xt.conj().T)
        # only the positive part of the spectrum survives the projection
        w, vec = linalg.eigh(Xt, driver="evx", subset_by_value=(0.0, np.inf), check_finite=False)
        X = (vec * w) @ vec.conj().T
        X = 0.5 * (X + X.conj().T)
        Lam = Lam + rho * (X - B)
        Lam = 0.5 * (Lam + Lam.conj().T)
        trace_log.append(objective(u, Z, R, Yn, lam_n))
        res = np.linalg.norm(X - B) / max(np.linalg.norm(X), 1e-300)
        dual = rho * np.linalg.norm(B - B_old) / max(np.linalg.norm(Lam), 1e-300)
        B_old = B
        res_log.append(res)
        if it >= min_iter and res < tol and dual < tol:
            converged = True
            break
    return AdmmResult(
        u=u * c,
        R=R * c,
        X=X * c,
        trace_log=np.array(trace_log) * c,
        residual_log=np.array(res_log),
        converged=converged,
        iterations=it,
        scale=c,
    )


def esprit(subspace: np.ndarray) -> np.ndarray:
    """Frequencies from a Vandermonde-structured signal subspace (shift invariance)."""
    top, bot = subspace[:-1], subspace[1:]
    psi = np.linalg.lstsq(top, bot, rcond=None)[0]
    ev = np.linalg.eigvals(psi)
    return np.mod(np.angle(ev) / (2 * np.pi), 1.0)


def extract_frequencies(u: np.ndarray, L: int, num_antennas: Optional[int] = None) -> FrequencyEstimate:
    """ESPRIT on the top-L eigenvectors of T(u), then nonnegative powers by NNLS.

    The powers d_l satisfy T(u) ~ sum_l d_l a(f_l) a(f_l)^H with unit-norm a.
    """
    u = np.asarray(u, dtype=complex)
    m = len(u) if num_antennas is None else num_antennas
    if not 1 <= L < len(u):
        raise ValueError("need 1 <= L < len(u)")
    T = toeplitz_hermitian(u)
    w, vec = np.linalg.eigh(T)
    w, vec = w[::-1], vec[:, ::-1]
    gap = float(w[L - 1] / w[L]) if w[L] > 0 else float("inf")
    freqs = np.sort(wrap_freq(esprit(vec[:, :L])))
    k = np.arange(len(u))[:, None]
    atoms = np.exp(2j * np.pi * k * freqs[None, :]) / m
    A = np.vstack([atoms.real, atoms.imag])
    b = np.concatenate([u.real, u.imag])
    powers, _ = optimize.nnls(A, b)
    return FrequencyEstimate(freqs, powers, gap, bool(gap < 1.5), {"eigenvalues": w})


def project_observations_stage1(Y1: np.ndarray, W1: np.ndarray, atol: float = 1e-10) -> np.ndarray:
    """Undo the unitary receive combining: W1 Y1 = A_r C_r + N."""
    if not np.allclose(W1.conj().T @ W1, np.eye(W1.shape[1]), atol=atol) or W1.shape[0] != W1.shape[1]:
        raise ValueError("stage-1 combiner must be square unitary")
    return W1 @ Y1


@dataclass(frozen=True)
class SuperresConfig:
    rho: Optional[float] = None
    rho_factor: float = 10.0
    max_iter: int = 10_000
    tol: float = 1e-5
    lam_factor: float = 1.0
    u_update: str = "exact"
    lam: Optional[float] = None


def _solve(Yt, L, noise_std, cfg: SuperresConfig):
    m, d = Yt.shape
    lam = cfg.lam if cfg.lam is not None else default_penalty(noise_std, m, d, cfg.lam_factor,
                                                             float(np.linalg.norm(Yt)))
    res = atomic_admm(Yt, lam, cfg.rho, cfg.max_iter, cfg.tol, cfg.u_update, rho_factor=cfg.rho_factor)
    est = extract_frequencies(res.u, L)
    est.diagnostics.update(admm=res, lam=lam)
    return est


def superres_aoa(Y1, W1, L: int, noise_std: float, cfg: SuperresConfig = SuperresConfig()):
    """AoAs from stage-1 observations; returns (FrequencyEstimate, A_r_hat)."""
    Yt = project_observations_stage1(Y1, W1)
    est = _solve(Yt, L, noise_std, cfg)
    return est, response_matrix(W1.shape[0], est.freqs)


def superres_aod(Y2, F2, L: int, noise_std: float, num_tx: int, cfg: SuperresConfig = SuperresConfig()):
    """AoDs from stage-2 observations; returns (FrequencyEstimate, A_t_hat).

    F2 = sqrt(p2) [e_1 .. e_B], so Y2^H / sqrt(p2) holds the leading B entries of the
    transmit responses (scaled by 1/sqrt(N_t)) plus noise of std noise_std / sqrt(p2).
    """
    bt2 = F2.shape[1]
    if bt2 <= L:
        raise ValueError(f"B_t2={bt2} must exceed L={L}")
    p2 = float(np.sum(np.abs(F2[:, 0]) ** 2))
    Yt = Y2.conj().T / math.sqrt(p2)
    est = _solve(Yt, L, noise_std / math.sqrt(p2), cfg)
    return est, response_matrix(num_tx, est.freqs)


def one_stage_atomic_stub(channel, geometry, k: int, p: float, noise_std: float, rng,
                          cfg: SuperresConfig = SuperresConfig(), refine_grid: int = 4):
    """Gridless single-shot baseline (simplified stand-in, not a faithful reproduction).

    Full DFT combining (B_r = N_r) with K N / N_r random-phase transmit beams, all
    sent in one sounding. AoAs come from the atomic-norm solver on W Y; each path's
    AoD is then found by a 1-D search matching the projected row of that path.
    """
    from .pipeline import ChannelEstimate, fit_gains
    from .sounding import SounderSet, dft_matrix, observe

    nr, nt, n = geometry.nr, geometry.nt, geometry.n_rf
    if (k * n) % nr:
        raise ValueError("K N must be a multiple of N_r for full receive combining")
    bt = k * n // nr
    w = dft_matrix(nr)
    f = np.exp(2j * np.pi * rng.random((nt, bt))) * math.sqrt(p / nt)
    snd = SounderSet(w, f, float(p))
    y = observe(channel, snd, noise_std, rng)
    L = channel.num_paths
    est_r = _solve(w @ y, L, noise_std, cfg)
    a_r = response_matrix(nr, est_r.freqs)
    rows = np.linalg.lstsq(a_r, w @ y, rcond=None)[0]
    grid = np.arange(refine_grid * nt) / (refine_grid * nt)
    fa = f.conj().T @ response_matrix(nt, grid)

    def score(freq, z):
        v = f.conj().T @ response_matrix(nt, [freq])[:, 0]
        return -abs(np.vdot(v, z)) ** 2 / max(np.vdot(v, v).real, 1e-300)

    aod = np.empty(L)
    for l in range(L):
        z = rows[l].conj()
        coarse = np.abs(fa.conj().T @ z) ** 2 / np.maximum(np.sum(np.abs(fa) ** 2, axis=0), 1e-300)
        g0 = grid[int(np.argmax(coarse))]
        step = 1.0 / (refine_grid * nt)
        res = optimize.minimize_scalar(score, bounds=(g0 - step, g0 + step), args=(z,), method="bounded",
                                       options={"xatol": 1e-9})
        aod[l] = wrap_freq(res.x)
    a_t = response_matrix(nt, aod)
    gains = fit_gains([(snd, y)], a_r, a_t)
    iters = est_r.diagnostics["admm"].iterations
    return ChannelEstimate(est_r.freqs, aod, gains, (a_r * gains[None, :]) @ a_t.conj().T,
                           mults=int(iters * (nr + bt) ** 3))
