"""Support-recovery multiply counts of the one- and two-stage estimators over a
sweep of receive-array sizes."""
import argparse

from twostage.harness import complexity_report, complexity_slope


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--nr", default="10,20,40")
    parser.add_argument("--oversampling", type=float, default=1.0)
    args = parser.parse_args()
    rows = complexity_report(tuple(int(x) for x in args.nr.split(",")), oversampling=args.oversampling)
    print("nr two_stage one_stage ratio ratio/(sNNr) two_stage/(sLKNtL)")
    for r in rows:
        print(f"{r.nr} {r.two_stage} {r.one_stage} {r.ratio:.1f} {r.normalized_ratio:.3f} "
              f"{r.two_stage / r.predicted_two_stage:.3f}")
    print(f"log-log slope of ratio against N_r: {complexity_slope(rows):.3f}")


if __name__ == "__main__":
    main()
