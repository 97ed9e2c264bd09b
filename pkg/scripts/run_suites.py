"""Run the three comparison suites with default settings and write results/<suite>/."""

import argparse
import time
from pathlib import Path

from toptrack.experiments import SUITES, format_table, run_suite


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="results")
    ap.add_argument("--seeds", type=int, default=10, help="run seeds 0..N-1")
    ap.add_argument("--suite", action="append", choices=sorted(SUITES), help="default: all suites")
    args = ap.parse_args()

    for name in args.suite or list(SUITES):
        t0 = time.perf_counter()
        result = run_suite(name, seeds=list(range(args.seeds)), out_dir=Path(args.out) / name)
        print(format_table(result), end="")
        print(f"({time.perf_counter() - t0:.0f} s)\n")


if __name__ == "__main__":
    main()
