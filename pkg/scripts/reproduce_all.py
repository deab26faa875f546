"""Run every built-in experiment and write its CSV/JSON pair.

    python scripts/reproduce_all.py --out results --seed 0
"""

import argparse
import time
from pathlib import Path

from srlq.cli import TARGETS, reproduce


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="results")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--samples", type=int, default=100_000)
    args = parser.parse_args()
    out = Path(args.out)
    for target in TARGETS:
        start = time.perf_counter()
        res = reproduce(target, out, seed=args.seed, samples=args.samples)
        print(f"{target:<20} {len(res.rows):>5} rows  {time.perf_counter() - start:6.2f}s")


if __name__ == "__main__":
    main()
