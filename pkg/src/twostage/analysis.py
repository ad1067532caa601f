"""Recovery-probability lower bounds for SOMP and the two estimation stages, and the
energy / channel-use allocation that meets target recovery probabilities.

Every bound has the form F2(arg) with F2 the Tracy-Widom (beta = 2) CDF and
``arg`` built from the largest-singular-value centring ``mu_{M,d}`` and scale
``sigma_{M,d}`` of an M x d complex Gaussian noise matrix.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .channel import build_dictionary
from .errors import BoundInvalid, InfeasibleAllocation
from .recovery import mip_constant
from .sounding import dft_matrix
from .tracy_widom import tw_cdf, tw_inverse


def tw_center(m: float, d: float) -> float:
    return (math.sqrt(m) + math.sqrt(d)) ** 2


def tw_scale(m: float, d: float) -> float:
    return (math.sqrt(m) + math.sqrt(d)) * (1 / math.sqrt(m) + 1 / math.sqrt(d)) ** (1 / 3)


def _check_mu(mu: float, L: int) -> float:
    if not mu < 1.0 / (2 * L - 1):
        raise BoundInvalid(f"coherence {mu:.4g} violates mu < 1/(2L-1) = {1 / (2 * L - 1):.4g}")
    return 1.0 - (2 * L - 1) * mu


def _f2_ratio(signal: float, noise_var: float, m: float, d: float) -> float:
    """F2((signal - 4 v mu_md) / (4 v sigma_md)) with the v -> 0 limit handled."""
    if noise_var <= 0:
        return 1.0 if signal > 0 else 0.0
    return tw_cdf((signal - 4 * noise_var * tw_center(m, d)) / (4 * noise_var * tw_scale(m, d)))


def srp_bound_somp(c_min: float, mu: float, L: int, sigma: float, m: int, d: int) -> float:
    """Lower bound on the probability that SOMP returns the exact support."""
    factor = _check_mu(mu, L)
    return _f2_ratio(factor**2 * c_min**2, sigma**2, m, d)


def srp_bound_somp_quantized(c_min, mu, L, sigma, m, d, quant_err_norm) -> float:
    """As ``srp_bound_somp`` with a deterministic model error of spectral norm ``quant_err_norm``."""
    if quant_err_norm < 0:
        raise ValueError("quant_err_norm must be nonnegative")
    factor = _check_mu(mu, L)
    eff = factor * c_min - 2 * quant_err_norm
    # once the model error swallows the signal the bound is at its floor
    eff = max(eff, 0.0)
    return _f2_ratio(eff**2, sigma**2, m, d)


def mmv_count_effect(m: int, d_range: Sequence[int], c_min, mu, L, sigma) -> np.ndarray:
    """SOMP bound across numbers of measurement vectors; never increases with d."""
    vals = np.array([srp_bound_somp(c_min, mu, L, sigma, m, d) for d in d_range])
    order = np.argsort(np.asarray(d_range))
    if np.any(np.diff(vals[order]) > 1e-15):
        raise AssertionError("bound increased with the number of measurement vectors")
    return vals


@dataclass(frozen=True)
class SrpQuery:
    num_paths: int
    h_min: float
    noise_std: float
    num_rx: int
    num_tx: int
    p1: float = 1.0
    bt1: int = 1
    p2: float = 1.0
    bt2: int = 1
    mu1: float = 0.0
    mu2: float = 0.0


def srp_bound_aoa(q: SrpQuery, squared: bool = False) -> float:
    """Stage-1 bound with the quantization term dropped.

    The default keeps the coherence factor linear; ``squared=True`` uses the form
    obtained by substituting C_min = h_min sqrt(p1 B_t1 / N_t) into the SOMP bound.
    """
    factor = _check_mu(q.mu1, q.num_paths)
    f = factor**2 if squared else factor
    signal = f * q.h_min**2 * q.p1 * q.bt1 / q.num_tx
    return _f2_ratio(signal, q.noise_std**2, q.num_rx, q.bt1)


def srp_bound_aod(q: SrpQuery, variant: str = "consistent") -> float:
    """Stage-2 bound given perfect AoA knowledge.

    ``consistent`` normalizes the stage-2 measurement matrix to unit columns,
    giving effective noise variance sigma^2 N_t / (p2 B_t2); this is the form whose
    inversion yields the stage-2 energy budget. ``printed`` carries an extra N_t
    in both the centring and scale terms.
    """
    factor = _check_mu(q.mu2, q.num_paths)
    v = q.noise_std**2 * q.num_tx / (q.p2 * q.bt2)
    signal = factor**2 * q.h_min**2
    if variant == "consistent":
        return _f2_ratio(signal, v, q.bt2, q.num_paths)
    if variant == "printed":
        return _f2_ratio(signal, v * q.num_tx, q.bt2, q.num_paths)
    raise ValueError(f"unknown variant {variant!r}")


def stage1_coherence(nr: int, oversampling: float) -> float:
    """Coherence of W1^H A_r_bar (DFT combiner, unit-norm columns)."""
    dic = build_dictionary(nr, oversampling)
    return mip_constant(dft_matrix(nr).conj().T @ dic.response_matrix)


def stage2_coherence(nt: int, bt2: int, oversampling: float) -> float:
    """Coherence of the first B_t2 rows of the transmit dictionary, columns normalized."""
    dic = build_dictionary(nt, oversampling)
    return mip_constant(dic.response_matrix[:bt2])


@dataclass(frozen=True)
class AllocationResult:
    e1: float
    e2: float
    p1: float
    p2: float
    bt1: int
    bt2: int
    mu1: float
    mu2: float
    achieved_bounds: tuple

    @property
    def total_energy(self) -> float:
        return self.e1 + self.e2


def allocate(
    k: int,
    n_rf: int,
    nr: int,
    nt: int,
    L: int,
    h_min: float,
    sigma: float,
    eta1: float,
    eta2: float,
    bt1_tilde: int = 1,
    mu1: Optional[float] = None,
    mu2: Optional[float] = None,
    oversampling: float = 1.0,
) -> AllocationResult:
    """Smallest stage energies whose bounds reach (eta1, eta2) at K channel uses.

    Coherences not supplied are computed from the dictionaries at ``oversampling``;
    mu2 uses B_t2 = K - B_t1 N_r / N rows.
    """
    for eta in (eta1, eta2):
        if not 0 < eta < 1:
            raise InfeasibleAllocation("targets must lie in (0, 1)")
    if (bt1_tilde * nr) % n_rf:
        raise InfeasibleAllocation("B_t1 * N_r must be divisible by N")
    bt2 = k - bt1_tilde * nr // n_rf
    if bt2 < 1:
        raise InfeasibleAllocation(f"K={k} leaves no channel uses for the second stage")
    if bt2 > nt:
        raise InfeasibleAllocation(f"B_t2={bt2} exceeds N_t={nt}")
    if h_min <= 0:
        raise InfeasibleAllocation("h_min must be positive")
    mu1 = stage1_coherence(nr, oversampling) if mu1 is None else mu1
    mu2 = stage2_coherence(nt, bt2, oversampling) if mu2 is None else mu2
    try:
        f1 = _check_mu(mu1, L)
        f2 = _check_mu(mu2, L)
    except BoundInvalid as exc:
        raise InfeasibleAllocation(str(exc)) from exc

    e1 = (4 * sigma**2 * nt * nr * (tw_inverse(eta1) * tw_scale(nr, bt1_tilde) + tw_center(nr, bt1_tilde))
          / (h_min**2 * f1**2 * n_rf))
    e2 = 4 * sigma**2 * nt * (tw_inverse(eta2) * tw_scale(bt2, L) + tw_center(bt2, L)) / (h_min**2 * f2**2)
    if e1 <= 0 or e2 <= 0:
        raise InfeasibleAllocation("non-positive energy budget")
    p1 = e1 * n_rf / (bt1_tilde * nr)
    p2 = e2 / bt2
    q = SrpQuery(L, h_min, sigma, nr, nt, p1, bt1_tilde, p2, bt2, mu1, mu2)
    achieved = (srp_bound_aoa(q), srp_bound_aod(q))
    return AllocationResult(e1, e2, p1, p2, bt1_tilde, bt2, mu1, mu2, achieved)


def allocate_for_energy(total_energy: float, **kwargs) -> AllocationResult:
    """Split ``total_energy`` between stages in the ratio the allocation rule prescribes.

    E1 and E2 both scale as sigma^2 / h_min^2, so their ratio is fixed; this solves
    for the design h_min at which E1 + E2 equals the available energy.
    """
    kwargs = dict(kwargs)
    kwargs.pop("h_min", None)
    ref = allocate(h_min=1.0, **kwargs)
    h_design = math.sqrt(ref.total_energy / total_energy)
    return allocate(h_min=h_design, **kwargs)
