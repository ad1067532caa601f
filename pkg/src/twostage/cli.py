"""Command line entry point: ``twostage {simulate,bounds,allocate,tw}``."""
from __future__ import annotations

import argparse
import math
import sys

from . import analysis
from .errors import BoundInvalid, InfeasibleAllocation
from .harness import load_config, run_experiment, stage_powers, write_outputs
from .tracy_widom import tw_cdf, tw_inverse


def _simulate(args) -> int:
    cfg = load_config(args.config, seed=args.seed, num_trials=args.trials, workers=args.workers)
    result = run_experiment(cfg)
    paths = write_outputs(result, cfg, args.out)
    for agg in result.aggregates:
        joint = "" if agg.joint_srp is None else f" joint_support_srp={agg.joint_srp:.4f}"
        print(f"{agg.estimator:24s} snr={agg.snr_db:6.1f} srp={agg.srp:.4f} nmse={agg.nmse:.3e}{joint}")
    print(f"wrote {paths['trials']} and {paths['curves']}")
    return 0


def _bounds(args) -> int:
    cfg = load_config(args.config, seed=args.seed)
    mu1 = analysis.stage1_coherence(cfg.nr, cfg.oversampling)
    mu2 = analysis.stage2_coherence(cfg.nt, cfg.bt2, cfg.oversampling)
    print(f"dictionary coherences: mu1={mu1:.4f} mu2={mu2:.4f} (limit {1 / (2 * cfg.num_paths - 1):.4f})")
    h_min = args.h_min
    print("snr_db p1 p2 bound_aoa bound_aod")
    for snr in cfg.snr_grid_db:
        p1, p2 = stage_powers(cfg, snr)
        sigma = 0.0 if math.isinf(snr) else 1.0
        q = analysis.SrpQuery(cfg.num_paths, h_min, sigma, cfg.nr, cfg.nt, p1, cfg.bt1, p2, cfg.bt2,
                              cfg.plan_mu1 if cfg.plan_mu1 is not None else mu1,
                              cfg.plan_mu2 if cfg.plan_mu2 is not None else mu2)
        try:
            b1, b2 = analysis.srp_bound_aoa(q), analysis.srp_bound_aod(q)
            print(f"{snr:g} {p1:.6g} {p2:.6g} {b1:.6f} {b2:.6f}")
        except BoundInvalid as exc:
            print(f"{snr:g} {p1:.6g} {p2:.6g} invalid: {exc}")
    return 0


def _allocate(args) -> int:
    try:
        res = analysis.allocate(
            args.k, args.n_rf, args.nr, args.nt, args.paths, args.h_min, args.sigma, args.eta1, args.eta2,
            args.bt1, args.mu1, args.mu2, args.oversampling,
        )
    except InfeasibleAllocation as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return 2
    print(f"B_t1={res.bt1} B_t2={res.bt2}")
    print(f"E1={res.e1:.6g} E2={res.e2:.6g} total={res.total_energy:.6g}")
    print(f"p1={res.p1:.6g} p2={res.p2:.6g}")
    print(f"mu1={res.mu1:.4g} mu2={res.mu2:.4g}")
    print(f"bounds: aoa={res.achieved_bounds[0]:.6f} aod={res.achieved_bounds[1]:.6f}")
    return 0


def _tw(args) -> int:
    kind, _, value = args.query.partition("=")
    if not value:
        raise SystemExit("query must look like s=<real> or q=<quantile>")
    x = float(value)
    if kind == "s":
        print(f"{tw_cdf(x):.12g}")
    elif kind == "q":
        print(f"{tw_inverse(x):.12g}")
    else:
        raise SystemExit(f"unknown query kind {kind!r}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="twostage", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a Monte Carlo experiment")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--trials", type=int, help="override num_trials")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=_simulate)

    p = sub.add_parser("bounds", help="recovery-probability bounds along a config's SNR grid")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--h-min", type=float, default=1.0)
    p.set_defaults(func=_bounds)

    p = sub.add_parser("allocate", help="energy and channel-use allocation for target probabilities")
    p.add_argument("--k", type=int, default=50)
    p.add_argument("--eta1", type=float, default=0.95)
    p.add_argument("--eta2", type=float, default=0.95)
    p.add_argument("--nr", type=int, default=20)
    p.add_argument("--nt", type=int, default=64)
    p.add_argument("--n-rf", type=int, default=4)
    p.add_argument("--paths", type=int, default=4)
    p.add_argument("--bt1", type=int, default=1)
    p.add_argument("--h-min", type=float, default=1.0)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--mu1", type=float, help="default: computed from the dictionary")
    p.add_argument("--mu2", type=float, help="default: computed from the dictionary")
    p.add_argument("--oversampling", type=float, default=1.0)
    p.set_defaults(func=_allocate)

    p = sub.add_parser("tw", help="Tracy-Widom F2: s=<x> gives the CDF, q=<p> the quantile")
    p.add_argument("--query", required=True)
    p.set_defaults(func=_tw)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
