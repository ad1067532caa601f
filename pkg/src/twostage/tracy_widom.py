"""Tracy-Widom (beta = 2) CDF: shipped lookup table, interpolation, inversion and
two independent numerical generators.

``painleve_cdf`` integrates the Hastings-McLeod solution of Painleve II
(q'' = x q + 2 q^3, q ~ Ai at +inf) and evaluates
F2(s) = exp(-int_s^inf (x - s) q(x)^2 dx). ``fredholm_cdf`` evaluates
det(I - K_Airy) on L^2(s, inf) by Gauss-Legendre quadrature. The first produces
the table, the second cross-checks it.
"""
from __future__ import annotations

import functools
import hashlib
from dataclasses import dataclass
from importlib import resources
from typing import Optional

import numpy as np
from scipy import integrate, interpolate, special

TABLE_LO, TABLE_HI, TABLE_STEP = -10.0, 6.0, 0.005
START_X = 8.0
TABLE_FILE = "tracy_widom_f2.txt"


@dataclass(frozen=True)
class TracyWidomTable:
    abscissae: np.ndarray
    cdf_values: np.ndarray
    provenance: str

    def __post_init__(self):
        if np.any(np.diff(self.abscissae) <= 0):
            raise ValueError("abscissae must be strictly increasing")
        if np.any(np.diff(self.cdf_values) <= 0):
            raise ValueError("cdf values must be strictly increasing")

    @functools.cached_property
    def interpolant(self):
        return interpolate.PchipInterpolator(self.abscissae, self.cdf_values, extrapolate=False)


def table_grid(lo: float = TABLE_LO, hi: float = TABLE_HI, step: float = TABLE_STEP) -> np.ndarray:
    n = int(round((hi - lo) / step)) + 1
    return lo + step * np.arange(n)


def _painleve_rhs(x, y):
    q, dq, i1, i2 = y
    q2 = q * q
    return [dq, x * q + 2 * q2 * q, -q2, -x * q2]


def painleve_solution(lo: float = TABLE_LO, x0: float = START_X, rtol: float = 1e-13):
    """Dense solution of [q, q', int_x^inf q^2, int_x^inf t q^2] from x0 down to lo."""
    ai, aip, _, _ = special.airy(x0)
    # tail integrals of Ai^2 and t Ai^2 beyond x0 (closed form for the first)
    i1 = aip**2 - x0 * ai**2
    i2 = integrate.quad(lambda t: t * special.airy(t)[0] ** 2, x0, np.inf, epsabs=0, epsrel=1e-13)[0]
    return integrate.solve_ivp(
        _painleve_rhs, (x0, lo - 1e-9), [ai, aip, i1, i2],
        method="DOP853", rtol=rtol, atol=1e-30, dense_output=True,
    )


def painleve_cdf(s, solution=None) -> np.ndarray:
    s = np.atleast_1d(np.asarray(s, dtype=float))
    sol = painleve_solution(lo=min(s.min(), TABLE_LO)) if solution is None else solution
    out = np.empty_like(s)
    above = s >= START_X
    if np.any(above):
        # beyond the start point the Airy tail dominates; use the exact Airy-kernel value
        out[above] = fredholm_cdf(s[above])
    y = sol.sol(s[~above])
    out[~above] = np.exp(-(y[3] - s[~above] * y[2]))
    return out


def fredholm_cdf(s, nodes: int = 60) -> np.ndarray:
    """det(I - K_Airy) restricted to (s, inf), Gauss-Legendre on a tan map."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    t, w = np.polynomial.legendre.leggauss(nodes)
    u = (t + 1) / 2
    wu = w / 2
    out = np.empty_like(s)
    for k, sk in enumerate(s):
        x = sk + 10 * np.tan(np.pi * u / 2)
        wx = wu * 10 * (np.pi / 2) / np.cos(np.pi * u / 2) ** 2
        ai, aip, _, _ = special.airy(x)
        dx = x[:, None] - x[None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            kern = (ai[:, None] * aip[None, :] - aip[:, None] * ai[None, :]) / dx
        kern[np.diag_indices(nodes)] = aip**2 - x * ai**2
        sw = np.sqrt(wx)
        out[k] = np.linalg.det(np.eye(nodes) - sw[:, None] * kern * sw[None, :])
    return out


def build_table(lo=TABLE_LO, hi=TABLE_HI, step=TABLE_STEP) -> TracyWidomTable:
    s = table_grid(lo, hi, step)
    f = painleve_cdf(s)
    return TracyWidomTable(s, f, provenance_string(s, f))


def provenance_string(s, f) -> str:
    body = "".join(f"{a:.3f} {b:.15e}\n" for a, b in zip(s, f))
    digest = hashlib.sha256(body.encode()).hexdigest()
    return (
        f"painleve-ii hastings-mcleod, DOP853 rtol=1e-13 from x0={START_X}; "
        f"grid [{s[0]:.3f},{s[-1]:.3f}] step {TABLE_STEP}; sha256={digest}"
    )


def write_table(table: TracyWidomTable, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"# {table.provenance}\n")
        fh.write("# s F2\n")
        for a, b in zip(table.abscissae, table.cdf_values):
            fh.write(f"{a:.3f} {b:.15e}\n")


def read_table(path) -> TracyWidomTable:
    prov = ""
    with open(path) as fh:
        first = fh.readline()
    if first.startswith("#"):
        prov = first[1:].strip()
    data = np.loadtxt(path, comments="#")
    return TracyWidomTable(data[:, 0], data[:, 1], prov)


@functools.lru_cache(maxsize=1)
def default_table() -> TracyWidomTable:
    with resources.as_file(resources.files("twostage") / "data" / TABLE_FILE) as p:
        return read_table(p)


def tw_cdf(s, table: Optional[TracyWidomTable] = None):
    """F2(s) by monotone cubic interpolation; 0 below and 1 above the table range."""
    table = default_table() if table is None else table
    arr = np.asarray(s, dtype=float)
    val = table.interpolant(np.clip(arr, table.abscissae[0], table.abscissae[-1]))
    val = np.where(arr < table.abscissae[0], 0.0, np.where(arr > table.abscissae[-1], 1.0, val))
    return float(val) if np.ndim(s) == 0 else val


def tw_inverse(q: float, table: Optional[TracyWidomTable] = None, tol: float = 1e-10) -> float:
    """Quantile of F2 by bisection on the interpolant."""
    if not 0.0 < q < 1.0:
        raise ValueError("quantile must lie strictly inside (0, 1)")
    table = default_table() if table is None else table
    lo, hi = float(table.abscissae[0]), float(table.abscissae[-1])
    if q <= table.cdf_values[0]:
        return lo
    if q >= table.cdf_values[-1]:
        return hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if tw_cdf(mid, table) < q:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
