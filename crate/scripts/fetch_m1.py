#!/usr/bin/env python3
"""Write M1 competition subsets as long CSV (unique_id,ds,y).

Series are the in-sample part followed by the holdout, so the last h
observations of each series are the competition test period.

    pip install fcompdata
    python3 scripts/fetch_m1.py quarterly data/m1_quarterly.csv
"""

import argparse
import csv
import json
from importlib import resources

PERIODS = {"monthly": "MONTHLY", "quarterly": "QUARTERLY", "yearly": "YEARLY"}


def load_raw():
    path = resources.files("fcompdata") / "data" / "m1_data.json"
    with path.open() as f:
        return json.load(f)


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("subset", choices=sorted(PERIODS))
    ap.add_argument("out")
    ap.add_argument("--in-sample-only", action="store_true", help="drop the holdout observations")
    args = ap.parse_args()

    raw = load_raw()
    n_series = n_obs = 0
    with open(args.out, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["unique_id", "ds", "y"])
        for sid, rec in raw.items():
            if rec["period"][0] != PERIODS[args.subset]:
                continue
            values = list(rec["x"]) if args.in_sample_only else list(rec["x"]) + list(rec["xx"])
            for i, y in enumerate(values, start=1):
                w.writerow([sid, i, repr(float(y))])
            n_series += 1
            n_obs += len(values)
    print(f"{args.out}: {n_series} series, {n_obs} observations")


if __name__ == "__main__":
    main()
