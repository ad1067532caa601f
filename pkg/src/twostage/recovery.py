"""Greedy row-sparse recovery (SOMP / OMP), coherence and an exhaustive oracle."""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

RIDGE = 1e-12


@dataclass(frozen=True)
class MeasurementProblem:
    observations: np.ndarray
    measurement_matrix: np.ndarray
    sparsity: int

    def __post_init__(self):
        y = np.asarray(self.observations)
        if y.ndim == 1:
            object.__setattr__(self, "observations", y[:, None])
        phi = np.asarray(self.measurement_matrix)
        m, g = phi.shape
        if self.observations.shape[0] != m:
            raise ValueError("observations and measurement matrix row counts differ")
        if not 1 <= self.sparsity <= min(m, g):
            raise ValueError(f"sparsity {self.sparsity} must lie in [1, min(M, G)]")
        if g < m:
            warnings.warn("measurement matrix is not overcomplete", stacklevel=2)


@dataclass(frozen=True)
class SupportEstimate:
    support: np.ndarray
    coefficients: np.ndarray
    residual_norms: np.ndarray
    ridge_used: bool = False
    mults: int = 0

    @property
    def residual(self) -> float:
        return float(self.residual_norms[-1])


def least_squares(a: np.ndarray, y: np.ndarray):
    """Solve min ||a x - y||_F by QR; ridge fallback if a is numerically rank deficient.

    Returns ``(x, ridge_used)``.
    """
    q, r = np.linalg.qr(a)
    d = np.abs(np.diag(r))
    if d.size and d.min() > 1e-10 * max(d.max(), 1e-300):
        return np.linalg.solve(r, q.conj().T @ y), False
    gram = a.conj().T @ a
    x = np.linalg.solve(gram + RIDGE * np.eye(gram.shape[0]), a.conj().T @ y)
    return x, True


def _ls_mults(m: int, k: int, d: int) -> int:
    # QR of m x k plus Q^H Y and the triangular solve
    return m * k * k + m * k * d + k * k * d


def somp(problem: MeasurementProblem, stop_threshold: Optional[float] = None) -> SupportEstimate:
    """Simultaneous orthogonal matching pursuit.

    Runs exactly ``sparsity`` iterations. With ``stop_threshold`` set, the number
    of paths is treated as unknown: iterations continue until the residual
    Frobenius norm drops to the threshold (at most ``min(M, G)`` atoms).
    """
    y = np.asarray(problem.observations, dtype=complex)
    phi = np.asarray(problem.measurement_matrix, dtype=complex)
    m, g = phi.shape
    d = y.shape[1]
    max_iter = problem.sparsity if stop_threshold is None else min(m, g)
    phi_h = phi.conj().T
    resid = y
    support = []
    norms = [float(np.linalg.norm(resid))]
    coef = np.zeros((0, d), dtype=complex)
    ridge = False
    mults = 0
    available = np.ones(g, dtype=bool)
    for _ in range(max_iter):
        if stop_threshold is not None and norms[-1] <= stop_threshold:
            break
        corr = phi_h @ resid
        mults += g * m * d
        score = np.sum(np.abs(corr) ** 2, axis=1)
        score[~available] = -np.inf
        k = int(np.argmax(score))  # first maximum, i.e. smallest index on ties
        support.append(k)
        available[k] = False
        sub = phi[:, support]
        coef, used = least_squares(sub, y)
        ridge |= used
        mults += _ls_mults(m, len(support), d)
        resid = y - sub @ coef
        mults += m * len(support) * d
        norms.append(float(np.linalg.norm(resid)))
    return SupportEstimate(np.array(support, dtype=int), coef, np.array(norms), ridge, mults)


def omp(phi: np.ndarray, y: np.ndarray, sparsity: int) -> SupportEstimate:
    """Single-vector special case."""
    return somp(MeasurementProblem(np.asarray(y).reshape(-1, 1), phi, sparsity))


def mip_constant(matrix: np.ndarray, normalize: bool = True) -> float:
    """Largest absolute inner product between two distinct columns."""
    a = np.asarray(matrix, dtype=complex)
    if a.shape[1] < 2:
        raise ValueError("need at least two columns")
    if normalize:
        n = np.linalg.norm(a, axis=0)
        if np.any(n == 0):
            raise ValueError("zero column cannot be normalized")
        a = a / n
    gram = np.abs(a.conj().T @ a)
    np.fill_diagonal(gram, 0.0)
    return float(gram.max())


def dirichlet_coherence(b: int, g: int) -> float:
    """|sin(pi b f) / (b sin(pi f))| at f = 1/g: coherence of adjacent grid atoms truncated to b rows."""
    f = 1.0 / g
    return abs(math.sin(math.pi * b * f) / (b * math.sin(math.pi * f)))


def brute_force_support(problem: MeasurementProblem, guard: int = 10**6) -> SupportEstimate:
    """Exhaustive minimum-residual support; ties go to the lexicographically first set."""
    y = np.asarray(problem.observations, dtype=complex)
    phi = np.asarray(problem.measurement_matrix, dtype=complex)
    g = phi.shape[1]
    L = problem.sparsity
    if math.comb(g, L) > guard:
        raise ValueError(f"C({g},{L}) supports exceed the search guard {guard}")
    scale = max(float(np.linalg.norm(y)), 1.0)
    best, best_res, best_coef = None, np.inf, None
    for cand in itertools.combinations(range(g), L):
        sub = phi[:, cand]
        coef, _ = least_squares(sub, y)
        res = float(np.linalg.norm(y - sub @ coef))
        if res < best_res - 1e-12 * scale:
            best, best_res, best_coef = cand, res, coef
    norms = np.array([float(np.linalg.norm(y)), best_res])
    return SupportEstimate(np.array(best, dtype=int), best_coef, norms)
