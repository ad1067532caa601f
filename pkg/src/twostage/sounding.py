"""Sounding beams for both estimation stages and the one-stage baseline.

Receive beams are columns of ``W`` (N_r x B_r), transmit beams columns of ``F``
(N_t x B_t); one observation block is ``Y = W^H H F + W^H N``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .channel import ArrayGeometry, ChannelRealization, complex_gaussian
from .errors import ConfigurationError, DegenerateEstimate


@dataclass(frozen=True)
class SounderSet:
    rsb: np.ndarray
    tsb: np.ndarray
    power_per_beam: float
    # (analog N_t x N, digital N) pairs, one per TSB column
    analog_factors: Optional[List[Tuple[np.ndarray, np.ndarray]]] = None

    @property
    def br(self) -> int:
        return self.rsb.shape[1]

    @property
    def bt(self) -> int:
        return self.tsb.shape[1]

    def check(self, atol: float = 1e-12) -> None:
        """Raise AssertionError if the power or phase-shifter constraints fail."""
        norms = np.sum(np.abs(self.tsb) ** 2, axis=0)
        assert np.allclose(norms, self.power_per_beam, rtol=1e-12, atol=atol), "TSB power"
        if self.analog_factors is not None:
            nt = self.tsb.shape[0]
            for j, (fa, fd) in enumerate(self.analog_factors):
                assert np.allclose(np.abs(fa), 1 / np.sqrt(nt), atol=atol), "analog modulus"
                assert np.allclose(fa @ fd, self.tsb[:, j], atol=atol), "factorization"


@dataclass(frozen=True)
class StagePlan:
    bt1: int
    bt2: int
    br1: int
    br2: int
    p1: float
    p2: float
    num_rf_chains: int

    def __post_init__(self):
        if (self.bt1 * self.br1) % self.num_rf_chains:
            raise ConfigurationError("B_t1 * N_r must be divisible by N")
        if min(self.bt1, self.bt2, self.br1, self.br2) < 1 or min(self.p1, self.p2) <= 0:
            raise ConfigurationError("beam counts and powers must be positive")

    @property
    def channel_uses(self) -> int:
        return self.bt1 * self.br1 // self.num_rf_chains + self.bt2

    @property
    def energies(self) -> Tuple[float, float]:
        return (self.p1 * self.bt1 * self.br1 / self.num_rf_chains, self.p2 * self.bt2)


def channel_uses(bt1: int, nr: int, n: int, bt2: int) -> int:
    if (bt1 * nr) % n:
        raise ConfigurationError("B_t1 * N_r must be divisible by N")
    return bt1 * nr // n + bt2


def basis_factors(nt: int, n_rf: int, j: int, power: float) -> Tuple[np.ndarray, np.ndarray]:
    """Phase-shifter/digital pair whose product is sqrt(power) * e_j.

    Two analog columns (all ones, and all ones with entry j negated) differ only at
    j; the digital weights (1, -1)/2 take the half-difference.
    """
    fa = np.ones((nt, n_rf), dtype=complex) / np.sqrt(nt)
    fa[j, 1] = -fa[j, 1]
    fd = np.zeros(n_rf, dtype=complex)
    fd[0], fd[1] = 1.0, -1.0
    fd *= np.sqrt(nt) / 2 * np.sqrt(power)
    return fa, fd


def _basis_tsb(geometry: ArrayGeometry, bt: int, power: float) -> Tuple[np.ndarray, list]:
    nt = geometry.nt
    if not 1 <= bt <= nt:
        raise ConfigurationError(f"B_t={bt} must lie in [1, N_t={nt}]")
    if power <= 0:
        raise ConfigurationError("power must be positive")
    tsb = np.sqrt(power) * np.eye(nt, bt, dtype=complex)
    factors = [basis_factors(nt, geometry.n_rf, j, power) for j in range(bt)]
    return tsb, factors


def stage1_tsb(geometry: ArrayGeometry, bt1: int, p1: float):
    return _basis_tsb(geometry, bt1, p1)


def stage2_tsb(geometry: ArrayGeometry, bt2: int, p2: float):
    return _basis_tsb(geometry, bt2, p2)


def dft_matrix(n: int) -> np.ndarray:
    """Unitary DFT with [S]_{m,n} = exp(-2j*pi*m*n/N)/sqrt(N), 0-based."""
    k = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(k, k) / n) / np.sqrt(n)


def stage1_rsb(geometry: ArrayGeometry) -> np.ndarray:
    return dft_matrix(geometry.nr)


def stage2_rsb(est_aoa_responses: np.ndarray, rank_tol: float = 1e-10) -> np.ndarray:
    """Orthonormal basis of range(A_hat) via QR with a nonnegative R diagonal."""
    a = np.atleast_2d(np.asarray(est_aoa_responses, dtype=complex))
    if a.shape[0] < a.shape[1]:
        raise DegenerateEstimate("more columns than rows")
    q, r = np.linalg.qr(a)
    d = np.diag(r)
    if np.min(np.abs(d)) <= rank_tol * max(np.max(np.abs(d)), 1e-300):
        raise DegenerateEstimate("estimated AoA responses are rank deficient")
    phase = d / np.abs(d)
    return q * phase[None, :]


def stage1_sounders(geometry: ArrayGeometry, bt1: int, p1: float) -> SounderSet:
    tsb, factors = stage1_tsb(geometry, bt1, p1)
    return SounderSet(stage1_rsb(geometry), tsb, float(p1), factors)


def stage2_sounders(geometry: ArrayGeometry, est_aoa_responses, bt2: int, p2: float) -> SounderSet:
    tsb, factors = stage2_tsb(geometry, bt2, p2)
    return SounderSet(stage2_rsb(est_aoa_responses), tsb, float(p2), factors)


def one_stage_sounders(
    geometry: ArrayGeometry,
    br: int,
    bt: int,
    p: float,
    mode: str = "random_phase",
    rng: Optional[np.random.Generator] = None,
) -> SounderSet:
    """Sounders for the single-shot baseline.

    ``random_phase`` draws unit-modulus entries with uniform phases (columns scaled to
    unit norm for W and to power p for F); ``partial_dft`` picks distinct random DFT
    columns for both sides.
    """
    rng = np.random.default_rng() if rng is None else rng
    nr, nt, n = geometry.nr, geometry.nt, geometry.n_rf
    if br % n or not 1 <= br <= nr:
        raise ConfigurationError(f"B_r={br} must be a multiple of N={n} and at most N_r={nr}")
    if not 1 <= bt <= nt:
        raise ConfigurationError(f"B_t={bt} must lie in [1, N_t={nt}]")
    if mode == "random_phase":
        rsb = np.exp(2j * np.pi * rng.random((nr, br))) / np.sqrt(nr)
        tsb = np.exp(2j * np.pi * rng.random((nt, bt))) * np.sqrt(p / nt)
    elif mode == "partial_dft":
        rsb = dft_matrix(nr)[:, np.sort(rng.choice(nr, br, replace=False))]
        tsb = np.sqrt(p) * dft_matrix(nt)[:, np.sort(rng.choice(nt, bt, replace=False))]
    else:
        raise ConfigurationError(f"unknown sounder mode {mode!r}")
    return SounderSet(rsb, tsb, float(p))


def observe(
    channel: ChannelRealization,
    sounders: SounderSet,
    noise_std: float,
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """Y = W^H H F + W^H N with N iid CN(0, noise_std^2)."""
    h = channel.matrix if isinstance(channel, ChannelRealization) else np.asarray(channel)
    w, f = sounders.rsb, sounders.tsb
    if w.shape[0] != h.shape[0] or f.shape[0] != h.shape[1]:
        raise ConfigurationError("sounder dimensions do not match the channel")
    y = w.conj().T @ h @ f
    if noise_std > 0:
        rng = np.random.default_rng() if rng is None else rng
        noise = complex_gaussian(rng, (h.shape[0], f.shape[1]), noise_std**2)
        y = y + w.conj().T @ noise
    return y
