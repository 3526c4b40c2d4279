"""Write the built-in clustered regression data to a CSV file (label column "y").

Usage: python3 scripts/write_synthetic.py out.csv --n 500 --seed 1
"""

import argparse
import csv

from dppens.bench import make_synthetic


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("path")
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--d", type=int, default=3)
    args = p.parse_args()
    ds = make_synthetic(args.n, seed=args.seed, d=args.d)
    with open(args.path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([*ds.feature_names, ds.label_name])
        for row, y in zip(ds.features, ds.labels):
            w.writerow([repr(float(v)) for v in row] + [repr(float(y))])


if __name__ == "__main__":
    main()
