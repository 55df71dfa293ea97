"""Certify the benchmark target with an exhaustive 50^d lattice scan.

Writes the certificate next to the benchmark config so the test suite can
compare against the cached ground truth without rerunning the scan.
"""

import argparse
import sys
from pathlib import Path

from ctrcbo.config import load_config
from ctrcbo.gridscan import scan, write_certificate

DEFAULT_OUT = Path(__file__).resolve().parents[1] / "src" / "ctrcbo" / "data" / "benchmark_3cohort_gridscan.json"


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--config", default="benchmark_3cohort.ini")
    p.add_argument("--lattice", type=int, default=50)
    p.add_argument("--margin", type=float, default=0.2)
    p.add_argument("--out", type=Path, default=DEFAULT_OUT)
    args = p.parse_args(argv)

    cfg, env = load_config(args.config)
    cert = scan(env, cfg.lower, cfg.upper, args.lattice)
    write_certificate(cert, args.out)
    print(cert.to_json(), end="")
    if not cert.feasible(args.margin):
        print(f"margin {cert.margin:.3f} below required {args.margin}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
