"""Monte Carlo driver: configuration, per-trial metrics, aggregation, CSV output and
multiply-count complexity reports.

Conventions: the noise standard deviation is 1 and the x-axis SNR is the total
sounding energy per channel use, so a run at SNR s (linear) spends K * s energy.
"""
from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import analysis
from .channel import ArrayGeometry, ChannelRealization, build_dictionary, sample_channel
from .pipeline import (
    ChannelEstimate,
    estimate_aoa,
    fit_gains,
    oracle_estimate,
    oracle_sounders,
    one_stage_omp,
    pair_paths,
    reconstruct_rhat,
    two_stage_estimate,
)
from .sounding import observe, stage1_sounders, stage2_sounders
from .superres import SuperresConfig, one_stage_atomic_stub, superres_aod, superres_aoa

ESTIMATORS = ("two_stage_somp", "one_stage_omp", "two_stage_superres", "one_stage_atomic_stub", "oracle")
# fixed per-estimator codes keep noise streams independent of which subset runs
ESTIMATOR_CODES = {name: i + 1 for i, name in enumerate(ESTIMATORS)}
TRIAL_COLUMNS = ["seed", "snr_db", "estimator", "eps", "aoa_support_exact", "aod_support_exact",
                 "nmse", "wall_ms", "mults"]
CURVE_COLUMNS = ["estimator", "snr_db", "srp", "srp_err", "mse", "nmse", "trials"]
SUPPORT_COLUMNS = ["estimator", "snr_db", "aoa_srp", "aod_srp", "joint_srp", "trials"]


@dataclass
class ExperimentConfig:
    nr: int = 20
    nt: int = 64
    n_rf: int = 4
    num_paths: int = 4
    oversampling: float = 1.0
    k: int = 50
    bt1: int = 1
    snr_grid_db: Tuple[float, ...] = (0.0, 5.0, 10.0, 15.0, 20.0)
    num_trials: int = 2000
    angle_mode: str = "on_grid"
    estimators: Tuple[str, ...] = ("two_stage_somp", "one_stage_omp", "oracle")
    allocation_mode: str = "paper_allocation"
    eta1: float = 0.95
    eta2: float = 0.95
    # explicit mode: per-beam powers relative to the linear SNR
    p1: float = 1.0
    p2: float = 1.0
    # coherences assumed by the allocation rule; "auto" computes them from the dictionaries
    plan_mu1: Optional[float] = 0.0
    plan_mu2: Optional[float] = 0.0
    one_stage_br: int = 20
    one_stage_bt: int = 10
    one_stage_mode: str = "random_phase"
    superres_lam_factor: float = 1.0
    superres_rho_factor: float = 10.0
    superres_max_iter: int = 10_000
    superres_tol: float = 1e-5
    superres_u_update: str = "exact"
    success_threshold: float = 1e-3
    seed: int = 0
    workers: int = 1
    timing: bool = False

    def __post_init__(self):
        self.snr_grid_db = tuple(float(s) for s in self.snr_grid_db)
        self.estimators = tuple(self.estimators)
        if self.num_trials < 1:
            raise ValueError("num_trials must be >= 1")
        if not self.snr_grid_db:
            raise ValueError("snr_grid_db must be non-empty")
        unknown = set(self.estimators) - set(ESTIMATORS)
        if unknown:
            raise ValueError(f"unknown estimators {sorted(unknown)}")
        if self.angle_mode not in ("on_grid", "continuous"):
            raise ValueError("angle_mode must be on_grid or continuous")
        if self.allocation_mode not in ("paper_allocation", "equal_power", "explicit"):
            raise ValueError(f"unknown allocation_mode {self.allocation_mode!r}")
        if (self.bt1 * self.nr) % self.n_rf:
            raise ValueError("bt1 * nr must be divisible by n_rf")
        if self.bt2 < 1:
            raise ValueError("K leaves no channel uses for the second stage")
        if self.one_stage_br * self.one_stage_bt != self.k * self.n_rf and "one_stage_omp" in self.estimators:
            raise ValueError("one-stage beams must satisfy br * bt = K * N")

    @property
    def geometry(self) -> ArrayGeometry:
        return ArrayGeometry(self.nr, self.nt, self.n_rf)

    @property
    def bt2(self) -> int:
        return self.k - self.bt1 * self.nr // self.n_rf


def _parse_value(kind, text: str):
    text = text.strip()
    if kind in ("Tuple[float, ...]",):
        return tuple(float(x) for x in text.replace(" ", "").split(",") if x)
    if kind in ("Tuple[str, ...]",):
        return tuple(x.strip() for x in text.split(",") if x.strip())
    if kind == "Optional[float]":
        return None if text.lower() in ("auto", "none") else float(text)
    if kind == "bool":
        return text.lower() in ("1", "true", "yes", "on")
    if kind == "int":
        return int(text)
    if kind == "float":
        return float(text)
    return text


def parse_config(text: str, **overrides) -> ExperimentConfig:
    """Flat ``key = value`` lines; '#' starts a comment; lists are comma separated."""
    kinds = {f.name: str(f.type) for f in fields(ExperimentConfig)}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in kinds:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        values[key] = _parse_value(kinds[key], val)
    values.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**values)


def load_config(path, **overrides) -> ExperimentConfig:
    return parse_config(Path(path).read_text(), **overrides)


def format_config(cfg: ExperimentConfig) -> str:
    lines = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, tuple):
            v = ",".join(str(x) for x in v)
        elif v is None:
            v = "auto"
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"


@dataclass
class TrialRecord:
    seed: int
    snr_db: float
    estimator: str
    eps: float
    aoa_support_exact: Optional[bool]
    aod_support_exact: Optional[bool]
    nmse: float
    wall_ms: Optional[float]
    mults: int
    error: str = ""


@dataclass
class Aggregate:
    estimator: str
    snr_db: float
    srp: float
    srp_err: float
    mse: float
    nmse: float
    trials: int
    aoa_srp: Optional[float] = None
    aod_srp: Optional[float] = None
    joint_srp: Optional[float] = None


@dataclass
class ExperimentResult:
    records: List[TrialRecord]
    aggregates: List[Aggregate]

    def curve(self, estimator: str, attr: str = "srp") -> np.ndarray:
        rows = [a for a in self.aggregates if a.estimator == estimator]
        return np.array([getattr(a, attr) for a in rows], dtype=float)


def wrapped_diff(a, b):
    d = np.abs(np.asarray(a) - np.asarray(b)) % 1.0
    return np.minimum(d, 1.0 - d)


def angle_error(est_aoa, est_aod, true_aoa, true_aod) -> float:
    """(1/2L) sum of squared wrapped AoA and AoD errors after optimal path matching."""
    dr = wrapped_diff(np.asarray(est_aoa)[:, None], np.asarray(true_aoa)[None, :])
    dt = wrapped_diff(np.asarray(est_aod)[:, None], np.asarray(true_aod)[None, :])
    cost = dr**2 + dt**2
    rows, cols = linear_sum_assignment(cost)
    L = len(true_aoa)
    # unmatched true paths (fewer estimates) count as the worst possible error
    missing = L - len(rows)
    return float((cost[rows, cols].sum() + missing * 0.5) / (2 * L))


def nmse(h, h_hat) -> float:
    return float(np.linalg.norm(h - h_hat) ** 2 / np.linalg.norm(h) ** 2)


def snr_linear(snr_db: float) -> float:
    return 1.0 if math.isinf(snr_db) else 10 ** (snr_db / 10)


def stage_powers(cfg: ExperimentConfig, snr_db: float) -> Tuple[float, float]:
    s = snr_linear(snr_db)
    if cfg.allocation_mode == "equal_power":
        return s, s
    if cfg.allocation_mode == "explicit":
        return cfg.p1 * s, cfg.p2 * s
    alloc = analysis.allocate_for_energy(
        cfg.k * s, k=cfg.k, n_rf=cfg.n_rf, nr=cfg.nr, nt=cfg.nt, L=cfg.num_paths, sigma=1.0,
        eta1=cfg.eta1, eta2=cfg.eta2, bt1_tilde=cfg.bt1, mu1=cfg.plan_mu1, mu2=cfg.plan_mu2,
        oversampling=cfg.oversampling,
    )
    return alloc.p1, alloc.p2


def _superres_cfg(cfg: ExperimentConfig) -> SuperresConfig:
    return SuperresConfig(
        rho_factor=cfg.superres_rho_factor, max_iter=cfg.superres_max_iter, tol=cfg.superres_tol,
        lam_factor=cfg.superres_lam_factor, u_update=cfg.superres_u_update,
    )


def two_stage_superres(channel, geometry, bt1, bt2, p1, p2, noise_std, rng, scfg: SuperresConfig):
    """Gridless variant: atomic-norm AoAs, stage-2 combiner on them, atomic-norm AoDs."""
    L = channel.num_paths
    snd1 = stage1_sounders(geometry, bt1, p1)
    y1 = observe(channel, snd1, noise_std, rng)
    est_r, a_r = superres_aoa(y1, snd1.rsb, L, noise_std, scfg)
    snd2 = stage2_sounders(geometry, a_r, bt2, p2)
    y2 = observe(channel, snd2, noise_std, rng)
    est_t, a_t = superres_aod(y2, snd2.tsb, L, noise_std, geometry.nt, scfg)
    r_ls, _ = reconstruct_rhat(y1, y2, snd1, snd2, a_r, a_t)
    pairs = pair_paths(r_ls)
    rows = np.array([p[0] for p in pairs])
    cols = np.array([p[1] for p in pairs])
    gains = fit_gains([(snd1, y1), (snd2, y2)], a_r[:, rows], a_t[:, cols])
    h_hat = (a_r[:, rows] * gains[None, :]) @ a_t[:, cols].conj().T
    admm = (est_r.diagnostics["admm"], est_t.diagnostics["admm"])
    m1, m2 = geometry.nr + y1.shape[1], bt2 + L
    mults = admm[0].iterations * m1**3 + admm[1].iterations * m2**3
    return ChannelEstimate(est_r.freqs[rows], est_t.freqs[cols], gains, h_hat, mults=int(mults),
                           diagnostics={"admm": admm})


def _support_exact(est: ChannelEstimate, channel: ChannelRealization, cfg: ExperimentConfig, dict_sizes):
    if channel.aoa_grid is None or est.aoa_support is None:
        return None, None
    if channel.grid_sizes != dict_sizes:
        return None, None
    aoa = set(map(int, est.aoa_support)) == set(map(int, channel.aoa_grid))
    aod = set(map(int, est.aod_support)) == set(map(int, channel.aod_grid))
    return aoa, aod


@dataclass
class TrialContext:
    cfg: ExperimentConfig
    dict_r: object
    dict_t: object


def trial_context(cfg: ExperimentConfig) -> TrialContext:
    """Dictionaries shared by every trial of one experiment."""
    return TrialContext(cfg, build_dictionary(cfg.nr, cfg.oversampling), build_dictionary(cfg.nt, cfg.oversampling))


def trial_channel(cfg: ExperimentConfig, ctx: TrialContext, trial: int) -> ChannelRealization:
    """Channel of one trial; it depends on (seed, trial) only, so every SNR sees it."""
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, trial]))
    mode = (ctx.dict_r.grid_size, ctx.dict_t.grid_size) if cfg.angle_mode == "on_grid" else "continuous"
    return sample_channel(cfg.geometry, cfg.num_paths, mode, rng=rng)


def run_estimator(name: str, channel, cfg: ExperimentConfig, ctx: TrialContext, p1, p2, noise_std, rng):
    g = cfg.geometry
    if name == "two_stage_somp":
        return two_stage_estimate(channel, g, ctx.dict_r, ctx.dict_t, cfg.bt1, cfg.bt2, p1, p2, noise_std, rng)
    if name == "one_stage_omp":
        # matched energy: every channel use carries the mean per-use energy of the two-stage run
        p = (p1 * cfg.bt1 * cfg.nr / cfg.n_rf + p2 * cfg.bt2) / cfg.k
        return one_stage_omp(channel, g, ctx.dict_r, ctx.dict_t, cfg.one_stage_br, cfg.one_stage_bt, p,
                             noise_std, rng, mode=cfg.one_stage_mode)
    if name == "two_stage_superres":
        return two_stage_superres(channel, g, cfg.bt1, cfg.bt2, p1, p2, noise_std, rng, _superres_cfg(cfg))
    if name == "one_stage_atomic_stub":
        p = (p1 * cfg.bt1 * cfg.nr / cfg.n_rf + p2 * cfg.bt2) / cfg.k
        return one_stage_atomic_stub(channel, g, cfg.k, p, noise_std, rng, _superres_cfg(cfg))
    if name == "oracle":
        snd = oracle_sounders(channel, g, cfg.bt1, cfg.bt2, p1, p2)
        return oracle_estimate(channel, snd, noise_std=noise_std, rng=rng)
    raise ValueError(name)


def noise_rng(cfg: ExperimentConfig, snr_idx: int, trial: int, name: str) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([cfg.seed, snr_idx, trial, ESTIMATOR_CODES[name]]))


def run_trial(cfg: ExperimentConfig, ctx: TrialContext, snr_idx: int, trial: int) -> List[TrialRecord]:
    snr_db = cfg.snr_grid_db[snr_idx]
    channel = trial_channel(cfg, ctx, trial)
    noise_std = 0.0 if math.isinf(snr_db) else 1.0
    p1, p2 = stage_powers(cfg, snr_db)
    sizes = (ctx.dict_r.grid_size, ctx.dict_t.grid_size)
    out = []
    for name in cfg.estimators:
        rng = noise_rng(cfg, snr_idx, trial, name)
        t0 = time.perf_counter()
        try:
            est = run_estimator(name, channel, cfg, ctx, p1, p2, noise_std, rng)
        except Exception as exc:  # recorded, not fatal
            out.append(TrialRecord(trial, snr_db, name, float("nan"), None, None, float("nan"), None, 0,
                                   f"{type(exc).__name__}: {exc}"))
            continue
        wall = (time.perf_counter() - t0) * 1e3 if cfg.timing else None
        eps = angle_error(est.aoa_freqs, est.aod_freqs, channel.aoa_freqs, channel.aod_freqs)
        aoa_ok, aod_ok = (None, None) if name == "oracle" else _support_exact(est, channel, cfg, sizes)
        out.append(TrialRecord(trial, snr_db, name, eps, aoa_ok, aod_ok, nmse(channel.matrix, est.h_hat),
                               wall, int(est.mults)))
    return out


def _run_chunk(args):
    cfg, jobs = args
    ctx = trial_context(cfg)
    recs = []
    for snr_idx, trial in jobs:
        recs.extend(run_trial(cfg, ctx, snr_idx, trial))
    return recs


def _nanmean(x) -> float:
    x = np.asarray(x, dtype=float)
    ok = ~np.isnan(x)
    return float(x[ok].mean()) if ok.any() else float("nan")


def aggregate(records: Sequence[TrialRecord], cfg: ExperimentConfig) -> List[Aggregate]:
    out = []
    for name in cfg.estimators:
        for snr in cfg.snr_grid_db:
            rs = [r for r in records if r.estimator == name and r.snr_db == snr]
            n = len(rs)
            eps = np.array([r.eps for r in rs])
            ok = np.nan_to_num(eps, nan=np.inf) <= cfg.success_threshold
            srp = float(ok.mean()) if n else float("nan")
            err = math.sqrt(srp * (1 - srp) / n) if n else float("nan")
            agg = Aggregate(name, snr, srp, err, _nanmean(2 * cfg.num_paths * eps),
                            _nanmean([r.nmse for r in rs]), n)
            if n and all(r.aoa_support_exact is not None for r in rs):
                a = np.array([r.aoa_support_exact for r in rs])
                d = np.array([r.aod_support_exact for r in rs])
                agg.aoa_srp, agg.aod_srp, agg.joint_srp = float(a.mean()), float(d.mean()), float((a & d).mean())
            out.append(agg)
    return out


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """All (SNR, trial) pairs; the channel depends only on the trial index, the noise
    on (SNR index, trial, estimator), so results are a pure function of the config."""
    jobs = [(i, t) for i in range(len(cfg.snr_grid_db)) for t in range(cfg.num_trials)]
    if cfg.workers > 1:
        chunks = [jobs[i::cfg.workers] for i in range(cfg.workers)]
        with ProcessPoolExecutor(cfg.workers) as pool:
            parts = list(pool.map(_run_chunk, [(cfg, c) for c in chunks]))
        records = [r for part in parts for r in part]
        order = {name: i for i, name in enumerate(cfg.estimators)}
        records.sort(key=lambda r: (cfg.snr_grid_db.index(r.snr_db), r.seed, order[r.estimator]))
    else:
        records = _run_chunk((cfg, jobs))
    return ExperimentResult(records, aggregate(records, cfg))


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool) or isinstance(v, np.bool_):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write(path, columns, rows) -> None:
    path = Path(path)
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(columns)
            for row in rows:
                w.writerow([_fmt(x) for x in row])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def emit_csv(records: Iterable[TrialRecord], path) -> None:
    _write(path, TRIAL_COLUMNS, ([getattr(r, c) for c in TRIAL_COLUMNS] for r in records))


def emit_curves(aggregates: Iterable[Aggregate], path) -> None:
    _write(path, CURVE_COLUMNS, ([getattr(a, c) for c in CURVE_COLUMNS] for a in aggregates))


def emit_support_curves(aggregates: Iterable[Aggregate], path) -> None:
    rows = [a for a in aggregates if a.joint_srp is not None]
    _write(path, SUPPORT_COLUMNS, ([getattr(a, c) for c in SUPPORT_COLUMNS] for a in rows))


def read_csv(path) -> List[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_outputs(result: ExperimentResult, cfg: ExperimentConfig, out_dir) -> Dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"trials": out / "trials.csv", "curves": out / "curves.csv",
             "support": out / "support_curves.csv", "config": out / "config.txt"}
    emit_csv(result.records, paths["trials"])
    emit_curves(result.aggregates, paths["curves"])
    emit_support_curves(result.aggregates, paths["support"])
    paths["config"].write_text(format_config(cfg))
    return paths


# ---------------------------------------------------------------- stage-1 studies

def stage1_srp(
    bt1: int,
    snr_db: float,
    num_trials: int,
    seed: int,
    energy: Optional[float] = None,
    p1: Optional[float] = None,
    nr: int = 20,
    nt: int = 64,
    n_rf: int = 4,
    num_paths: int = 4,
    oversampling: float = 1.0,
    h_min: Optional[float] = None,
) -> Tuple[int, int]:
    """Empirical AoA support-recovery count over ``num_trials`` on-grid channels.

    Noise variance is 10^(-snr/10); the per-beam power is ``p1`` or, with a fixed
    stage energy, ``energy * N / (bt1 * N_r)``. With ``h_min`` the path gains are
    raised to at least that modulus. Returns ``(successes, trials)``.
    """
    from .channel import clamp_gains

    geometry = ArrayGeometry(nr, nt, n_rf)
    dict_r = build_dictionary(nr, oversampling)
    if p1 is None:
        p1 = energy * n_rf / (bt1 * nr)
    sigma = math.sqrt(10 ** (-snr_db / 10))
    hits = 0
    for t in range(num_trials):
        rng = np.random.default_rng(np.random.SeedSequence([seed, t]))
        ch = sample_channel(geometry, num_paths, (dict_r.grid_size, nt), rng=rng)
        if h_min is not None:
            ch = clamp_gains(ch, h_min, geometry)
        noise_rng = np.random.default_rng(np.random.SeedSequence([seed, t, bt1, int(round(snr_db * 1000)) & 0xFFFFFFFF]))
        s1 = estimate_aoa(ch, geometry, dict_r, bt1, p1, sigma, noise_rng)
        hits += set(map(int, s1.support)) == set(map(int, ch.aoa_grid))
    return hits, num_trials


# ---------------------------------------------------------------- complexity

@dataclass
class ComplexityRow:
    nr: int
    nt: int
    n_rf: int
    oversampling: float
    bt1: int
    two_stage: int
    one_stage: int
    ratio: float
    normalized_ratio: float
    predicted_two_stage: float


def complexity_report(
    nr_values: Sequence[int] = (10, 20, 40),
    nt: int = 64,
    n_rf: int = 4,
    num_paths: int = 4,
    k: int = 50,
    oversampling: float = 1.0,
    seed: int = 0,
    check: bool = True,
) -> List[ComplexityRow]:
    """Measured support-recovery multiply counts of both estimators on one noiseless trial
    per receive-array size. ``normalized_ratio`` is ratio / (s N N_r).

    With ``check`` the log-log slope of the ratio against N_r must lie within a
    factor 3 of 1 and the normalized ratios within a factor 3 of each other.
    """
    rows = []
    for nr in nr_values:
        if nr <= 1 or n_rf <= 1 or n_rf > nr:
            continue
        bt1 = 1
        while (bt1 * nr) % n_rf:
            bt1 += 1
        geometry = ArrayGeometry(nr, nt, n_rf)
        dict_r, dict_t = build_dictionary(nr, oversampling), build_dictionary(nt, oversampling)
        bt2 = k - bt1 * nr // n_rf
        rng = np.random.default_rng(np.random.SeedSequence([seed, nr]))
        ch = sample_channel(geometry, num_paths, (dict_r.grid_size, dict_t.grid_size), rng=rng)
        two = two_stage_estimate(ch, geometry, dict_r, dict_t, bt1, bt2, 1.0, 1.0, 0.0, rng)
        # one-stage beams: largest multiple of N not above N_r that divides K N
        br = max(b for b in range(n_rf, nr + 1, n_rf) if (k * n_rf) % b == 0)
        one = one_stage_omp(ch, geometry, dict_r, dict_t, br, k * n_rf // br, 1.0, 0.0, rng)
        ratio = one.mults / two.mults
        rows.append(ComplexityRow(nr, nt, n_rf, oversampling, bt1, two.mults, one.mults, ratio,
                                  ratio / (oversampling * n_rf * nr),
                                  oversampling * num_paths * k * nt * num_paths))
    if check and len(rows) >= 2:
        norm = np.array([r.normalized_ratio for r in rows])
        if norm.max() / norm.min() > 3:
            raise AssertionError(f"normalized ratios spread {norm.max() / norm.min():.2f} > 3")
        slope = np.polyfit(np.log([r.nr for r in rows]), np.log([r.ratio for r in rows]), 1)[0]
        if not 1 / 3 <= slope <= 3:
            raise AssertionError(f"log-log slope {slope:.2f} not proportional to N_r")
    return rows


def complexity_slope(rows: Sequence[ComplexityRow]) -> float:
    return float(np.polyfit(np.log([r.nr for r in rows]), np.log([r.ratio for r in rows]), 1)[0])
