#!/usr/bin/env python3
"""Download the UCI Adult files into data/ and write data/census.csv.

census.csv keeps the four columns the census run uses (income, gender,
raw age, collapsed education) with a header row, so that
``privf solve --config configs/census.ini`` can read it.  Age is left
numeric; its bands come from ``bins.age`` in the config.

    python3 scripts/fetch_adult.py [--dest data] [--offline]

``--offline`` skips the download and only rebuilds census.csv from files
already in place.
"""

import argparse
import csv
import sys
import urllib.request
from pathlib import Path

from privf.datasets import ADULT_FILES, EDUCATION_MAP, _adult_rows, adult_files

BASE = "https://archive.ics.uci.edu/ml/machine-learning-databases/adult/"


def fetch(dest: Path) -> None:
    dest.mkdir(parents=True, exist_ok=True)
    for name in ADULT_FILES:
        target = dest / name
        if target.exists():
            print(f"{target} exists, skipping")
            continue
        print(f"downloading {BASE + name}")
        with urllib.request.urlopen(BASE + name, timeout=60) as resp:
            target.write_bytes(resp.read())


def write_census(dest: Path) -> int:
    paths = adult_files(dest)
    if not paths:
        raise SystemExit(f"no Adult files in {dest}")
    n = 0
    with open(dest / "census.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["income", "gender", "age", "education"])
        for row in _adult_rows(paths):
            w.writerow([row["income"].rstrip("."), row["sex"].lower(), row["age"], EDUCATION_MAP[row["education"]]])
            n += 1
    return n


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--dest", type=Path, default=Path(__file__).resolve().parents[1] / "data")
    ap.add_argument("--offline", action="store_true", help="do not download")
    args = ap.parse_args(argv)
    if not args.offline:
        fetch(args.dest)
    n = write_census(args.dest)
    print(f"wrote {args.dest / 'census.csv'} ({n} records)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
