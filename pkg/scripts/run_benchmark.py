"""Run CTRCBO and the naive CBO baseline on the three-cohort benchmark and compare.

    python scripts/run_benchmark.py --out results/benchmark --workers 4

Writes one run directory per algorithm plus a comparison directory with
plot-ready CSVs (step vs best feasible score).
"""

import argparse
import sys
from pathlib import Path

from ctrcbo.cli import main as cli


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--config", default="benchmark_3cohort.ini")
    p.add_argument("--seeds", default=None, help="default: the config's seed list")
    p.add_argument("--out", type=Path, default=Path("results/benchmark"))
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--with-random", action="store_true", help="also run the uniform random baseline")
    args = p.parse_args(argv)

    algos = ["ctrcbo", "cbo"] + (["random"] if args.with_random else [])
    dirs = []
    for algo in algos:
        out = args.out / algo
        cmd = ["run", "--config", args.config, "--algo", algo, "--out", str(out),
               "--workers", str(args.workers)]
        if args.seeds:
            cmd += ["--seeds", args.seeds]
        code = cli(cmd)
        if code != 0:
            return code
        dirs.append(str(out))
    return cli(["compare", *dirs, "--out", str(args.out / "comparison")])


if __name__ == "__main__":
    sys.exit(main())
