"""AoA recovery probability against SNR for several first-stage beam counts at a
fixed first-stage energy, with the matching analytic lower bound."""
import argparse
import csv
import math
from pathlib import Path

from twostage import analysis
from twostage.harness import stage1_srp


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=Path, default=Path("results/stage1_beams.csv"))
    parser.add_argument("--trials", type=int, default=2000)
    parser.add_argument("--energy", type=float, default=10.0)
    parser.add_argument("--bt1", default="1,3,5,9,11")
    parser.add_argument("--snr", default="-10,-5,0,5,10")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    nr, nt, n_rf, paths = 20, 64, 4, 4
    args.out.parent.mkdir(parents=True, exist_ok=True)
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["bt1", "snr_db", "srp", "srp_err", "bound_aoa", "trials"])
        for bt1 in (int(b) for b in args.bt1.split(",")):
            p1 = args.energy * n_rf / (bt1 * nr)
            for snr in (float(s) for s in args.snr.split(",")):
                hits, n = stage1_srp(bt1, snr, args.trials, args.seed, p1=p1)
                srp = hits / n
                q = analysis.SrpQuery(paths, 1.0, math.sqrt(10 ** (-snr / 10)), nr, nt, p1, bt1, 1.0, 1, 0.0, 0.0)
                bound = analysis.srp_bound_aoa(q)
                writer.writerow([bt1, repr(snr), repr(srp), repr(math.sqrt(srp * (1 - srp) / n)), repr(bound), n])
                print(f"bt1={bt1:2d} snr={snr:5.1f} srp={srp:.4f} bound={bound:.4f}", flush=True)


if __name__ == "__main__":
    main()
