"""Regenerate the shipped Tracy-Widom F2 lookup table."""
import argparse
from pathlib import Path

import numpy as np

from twostage import tracy_widom as tw


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    default = Path(__file__).resolve().parents[1] / "src" / "twostage" / "data" / tw.TABLE_FILE
    parser.add_argument("--out", type=Path, default=default)
    args = parser.parse_args()
    table = tw.build_table()
    check = tw.fredholm_cdf(table.abscissae[::10])
    print(f"max |painleve - fredholm| on every 10th node: {np.abs(table.cdf_values[::10] - check).max():.2e}")
    tw.write_table(table, args.out)
    print(f"wrote {len(table.abscissae)} rows to {args.out}")


if __name__ == "__main__":
    main()
