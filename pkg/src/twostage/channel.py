"""Sparse ULA channel model, array responses and quantized angle dictionaries.

Angles are normalized spatial frequencies ``f`` in ``[0, 1)``; the response of an
``n``-element array is ``a(f)[k] = exp(2j*pi*k*f) / sqrt(n)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .errors import InfeasibleDraw


@dataclass(frozen=True)
class ArrayGeometry:
    num_rx_antennas: int
    num_tx_antennas: int
    num_rf_chains: int

    def __post_init__(self):
        if min(self.num_rx_antennas, self.num_tx_antennas) < 1:
            raise ValueError("antenna counts must be positive")
        if self.num_rf_chains < 2:
            raise ValueError("hybrid construction needs at least 2 RF chains")
        if self.num_rf_chains > min(self.num_rx_antennas, self.num_tx_antennas):
            raise ValueError("more RF chains than antennas")

    @property
    def nr(self) -> int:
        return self.num_rx_antennas

    @property
    def nt(self) -> int:
        return self.num_tx_antennas

    @property
    def n_rf(self) -> int:
        return self.num_rf_chains


@dataclass(frozen=True)
class AngleDictionary:
    response_matrix: np.ndarray
    grid_freqs: np.ndarray
    oversampling: float
    grid_size: int

    @property
    def num_antennas(self) -> int:
        return self.response_matrix.shape[0]

    def columns(self, idx) -> np.ndarray:
        return self.response_matrix[:, np.asarray(idx, dtype=int)]


@dataclass(frozen=True)
class ChannelRealization:
    aoa_freqs: np.ndarray
    aod_freqs: np.ndarray
    gains: np.ndarray
    matrix: np.ndarray
    # grid indices when the angles were drawn on dictionary grids
    aoa_grid: Optional[np.ndarray] = None
    aod_grid: Optional[np.ndarray] = None
    grid_sizes: Optional[tuple] = field(default=None)

    @property
    def num_paths(self) -> int:
        return len(self.gains)

    @property
    def rx_responses(self) -> np.ndarray:
        return response_matrix(self.matrix.shape[0], self.aoa_freqs)

    @property
    def tx_responses(self) -> np.ndarray:
        return response_matrix(self.matrix.shape[1], self.aod_freqs)

    @property
    def h_min(self) -> float:
        return float(np.min(np.abs(self.gains)))


def wrap_freq(freq):
    """Map any real frequency onto [0, 1)."""
    f = np.mod(freq, 1.0)
    # np.mod can return exactly 1.0 for tiny negative inputs
    return np.where(f >= 1.0, 0.0, f) if isinstance(f, np.ndarray) else (0.0 if f >= 1.0 else float(f))


def array_response(num_antennas: int, freq: float) -> np.ndarray:
    if num_antennas < 1:
        raise ValueError("num_antennas must be >= 1")
    if not 0.0 <= freq < 1.0:
        raise ValueError(f"frequency {freq} outside [0, 1)")
    k = np.arange(num_antennas)
    return np.exp(2j * np.pi * k * freq) / np.sqrt(num_antennas)


def response_matrix(num_antennas: int, freqs: Sequence[float]) -> np.ndarray:
    """Stack array responses column-wise (no domain check, frequencies taken mod 1)."""
    freqs = np.asarray(freqs, dtype=float).reshape(-1)
    k = np.arange(num_antennas)[:, None]
    return np.exp(2j * np.pi * k * freqs[None, :]) / np.sqrt(num_antennas)


def build_dictionary(num_antennas: int, oversampling: float = 1.0) -> AngleDictionary:
    if oversampling < 1:
        raise ValueError("oversampling must be >= 1")
    # guard against 2.0000000001 * n style float noise before the ceiling
    grid_size = int(math.ceil(round(oversampling * num_antennas, 9)))
    grid = np.arange(grid_size) / grid_size
    return AngleDictionary(
        response_matrix=response_matrix(num_antennas, grid),
        grid_freqs=grid,
        oversampling=float(oversampling),
        grid_size=grid_size,
    )


def complex_gaussian(rng: np.random.Generator, shape, variance=1.0) -> np.ndarray:
    """CN(0, variance) samples: independent real/imag parts with variance/2 each."""
    scale = np.sqrt(np.asarray(variance, dtype=float) / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def assemble_channel(nr: int, nt: int, aoa, aod, gains) -> np.ndarray:
    ar = response_matrix(nr, aoa)
    at = response_matrix(nt, aod)
    return (ar * np.asarray(gains)[None, :]) @ at.conj().T


OnGrid = tuple  # (G_r, G_t)


def sample_channel(
    geometry: ArrayGeometry,
    num_paths: int,
    angle_mode: Union[str, OnGrid] = "continuous",
    gain_variances: Optional[Sequence[float]] = None,
    rng: Optional[np.random.Generator] = None,
) -> ChannelRealization:
    """Draw one L-path channel.

    ``angle_mode`` is ``"continuous"`` or a ``(G_r, G_t)`` tuple for on-grid draws.
    On-grid indices are drawn without replacement so paths stay separable.
    """
    rng = np.random.default_rng() if rng is None else rng
    nr, nt = geometry.nr, geometry.nt
    L = int(num_paths)
    if L < 1 or L > min(nr, nt):
        raise ValueError(f"num_paths={L} must lie in [1, min(N_r, N_t)]")
    var = np.ones(L) if gain_variances is None else np.asarray(gain_variances, dtype=float)
    if var.shape != (L,) or np.any(var <= 0):
        raise ValueError("gain_variances must be L positive values")

    aoa_grid = aod_grid = grid_sizes = None
    if isinstance(angle_mode, str):
        if angle_mode != "continuous":
            raise ValueError(f"unknown angle mode {angle_mode!r}")
        aoa = rng.random(L)
        aod = rng.random(L)
    else:
        g_r, g_t = (int(g) for g in angle_mode)
        if L > g_r or L > g_t:
            raise InfeasibleDraw(f"cannot draw {L} distinct angles from grids of size {g_r}, {g_t}")
        aoa_grid = rng.choice(g_r, size=L, replace=False)
        aod_grid = rng.choice(g_t, size=L, replace=False)
        aoa = aoa_grid / g_r
        aod = aod_grid / g_t
        grid_sizes = (g_r, g_t)

    alpha = complex_gaussian(rng, L, var)
    gains = np.sqrt(nr * nt / L) * alpha
    return ChannelRealization(
        aoa_freqs=np.asarray(aoa, dtype=float),
        aod_freqs=np.asarray(aod, dtype=float),
        gains=gains,
        matrix=assemble_channel(nr, nt, aoa, aod, gains),
        aoa_grid=aoa_grid,
        aod_grid=aod_grid,
        grid_sizes=grid_sizes,
    )


def make_channel(geometry: ArrayGeometry, aoa, aod, gains, grid_sizes=None) -> ChannelRealization:
    """Deterministic constructor, handy for tests and planted cases."""
    aoa = np.atleast_1d(np.asarray(aoa, dtype=float))
    aod = np.atleast_1d(np.asarray(aod, dtype=float))
    gains = np.atleast_1d(np.asarray(gains, dtype=complex))
    if np.any((aoa < 0) | (aoa >= 1)) or np.any((aod < 0) | (aod >= 1)):
        raise ValueError("frequencies must lie in [0, 1)")
    aoa_grid = aod_grid = None
    if grid_sizes is not None:
        aoa_grid = np.rint(aoa * grid_sizes[0]).astype(int)
        aod_grid = np.rint(aod * grid_sizes[1]).astype(int)
    return ChannelRealization(
        aoa_freqs=aoa,
        aod_freqs=aod,
        gains=gains,
        matrix=assemble_channel(geometry.nr, geometry.nt, aoa, aod, gains),
        aoa_grid=aoa_grid,
        aod_grid=aod_grid,
        grid_sizes=grid_sizes,
    )


def clamp_gains(channel: ChannelRealization, h_min: float, geometry: ArrayGeometry) -> ChannelRealization:
    """Raise every |h_l| below ``h_min`` up to ``h_min`` (phase kept)."""
    g = channel.gains.copy()
    mag = np.abs(g)
    small = mag < h_min
    g[small] = np.where(mag[small] > 0, g[small] / np.maximum(mag[small], 1e-300), 1.0) * h_min
    return make_channel(geometry, channel.aoa_freqs, channel.aod_freqs, g, channel.grid_sizes)
