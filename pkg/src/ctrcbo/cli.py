"""Command-line harness: ``ctrcbo run``, ``ctrcbo compare`` and ``ctrcbo accept``.

Every flag of ``run`` can also come from an environment variable named
``CTRCBO_<FLAG>`` (``CTRCBO_CONFIG``, ``CTRCBO_SEEDS``, ``CTRCBO_ALGO``,
``CTRCBO_OUT``, ``CTRCBO_FORMAT``, ``CTRCBO_HORIZON``, ``CTRCBO_WORKERS``).
Command-line flags win over the environment.

Output layout of ``run --out DIR``::

    metrics_<algo>_seed<seed>.{csv,json}   one platform row per step
    cohorts_<algo>_seed<seed>.{csv,json}   one row per cohort per step
    summary.json                           per-run outcomes and medians
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import logging
import math
import os
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import ConfigError, load_config
from .optimizer import ALGORITHMS, RunResult, run_seeds

ENV_PREFIX = "CTRCBO_"
ALGO_ALIASES = {"random-baseline": "random"}


def metric_columns(n_constraints: int) -> list[str]:
    return (
        ["step", "cohort_id", "score_delta_pct", "impressions_delta_pct"]
        + [f"lambda_{i + 1}" for i in range(n_constraints)]
        + ["tr_length", "converged_flag"]
    )


def _num(x) -> float | None:
    x = float(x)
    return None if math.isnan(x) else x


def platform_rows(result: RunResult) -> list[list]:
    rows = []
    for t in range(result.n_steps):
        lengths = result.tr_lengths[t]
        tr = float(np.mean(lengths)) if np.all(np.isfinite(lengths)) else math.nan
        rows.append(
            [t + 1, "platform", float(result.platform_score[t]), float(result.platform_impressions[t])]
            + [float(v) for v in result.lambdas[t]]
            + [_num(tr), int(result.converged_flags[t])]
        )
    return rows


def cohort_rows(result: RunResult, cohort_ids: Sequence[str]) -> list[list]:
    rows = []
    for t in range(result.n_steps):
        for k, cid in enumerate(cohort_ids):
            score, imp = result.cohort_pairs[t, k]
            rows.append(
                [t + 1, cid, float(score), float(imp)]
                + [float(v) for v in result.lambdas[t]]
                + [_num(result.tr_lengths[t, k]), int(result.converged_flags[t])]
            )
    return rows


def _render(rows: list[list], columns: list[str], fmt: str) -> str:
    if fmt == "json":
        return json.dumps([dict(zip(columns, r)) for r in rows], indent=1) + "\n"
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for r in rows:
        writer.writerow(["" if v is None else repr(v) if isinstance(v, float) else v for v in r])
    return buf.getvalue()


def run_record(result: RunResult) -> dict:
    return {
        "algorithm": result.algorithm,
        "seed": result.seed,
        "converged": result.converged,
        "steps_to_convergence": result.steps_to_convergence,
        "n_steps": result.n_steps,
        "time_average_violation": [float(v) for v in result.time_average_violation],
        "regret": result.regret,
        "fit_failures": result.fit_failures,
        "best_feasible_score": [_num(v) for v in result.best_feasible_score],
    }


def summarize(records: list[dict], horizon: int) -> dict:
    steps = [r["steps_to_convergence"] for r in records if r["converged"]]
    censored = [s if s is not None else horizon + 1 for s in (r["steps_to_convergence"] for r in records)]
    tav = [r["time_average_violation"][0] for r in records]
    return {
        "n_runs": len(records),
        "n_converged": len(steps),
        "convergence_rate": len(steps) / len(records),
        "min_steps": min(steps) if steps else "none",
        "median_steps": float(np.median(censored)) if steps else "none",
        "max_steps": max(steps) if steps else "none",
        "median_time_average_violation": float(np.median(tav)),
    }


# ---------------------------------------------------------------------------
# run


def _env_default(name: str, default=None):
    return os.environ.get(ENV_PREFIX + name.upper(), default)


def _parse_algos(text: str) -> list[str]:
    algos = [ALGO_ALIASES.get(a.strip(), a.strip()) for a in text.split(",") if a.strip()]
    bad = [a for a in algos if a not in ALGORITHMS]
    if not algos or bad:
        raise ConfigError(f"unknown algorithm(s) {bad or text!r}; choose from {', '.join(ALGORITHMS)}")
    return algos


def _parse_seed_list(text: str) -> list[int]:
    try:
        if ".." in text:
            lo, hi = text.split("..")
            return list(range(int(lo), int(hi) + 1))
        seeds = [int(s) for s in text.split(",") if s.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad seed list {text!r}") from exc
    if not seeds:
        raise ConfigError("need at least one seed")
    return seeds


def cmd_run(args) -> int:
    cfg, env = load_config(args.config)
    overrides = {}
    if args.horizon is not None:
        horizon = int(args.horizon)
        overrides.update(horizon=horizon, convergence_window=min(cfg.convergence_window, horizon))
    if args.full_horizon:
        overrides["stop_on_convergence"] = False
    if overrides:
        try:
            cfg = dataclasses.replace(cfg, **overrides)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    seeds = _parse_seed_list(args.seeds) if args.seeds else list(cfg.seeds)
    algos = _parse_algos(args.algo)
    if args.format not in ("csv", "json"):
        raise ConfigError(f"unknown format {args.format!r}")

    out = Path(args.out)
    created = not out.exists()
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    try:
        columns = metric_columns(cfg.n_constraints)
        cohort_ids = [c.id for c in env.cohorts]
        summary = {"config": str(args.config), "fingerprint": cfg.fingerprint(),
                   "horizon": cfg.horizon, "seeds": seeds, "algorithms": {}}
        for algo in algos:
            results = run_seeds(cfg, env, algo, seeds, workers=int(args.workers))
            records = []
            for res in results:
                for prefix, rows in (("metrics", platform_rows(res)),
                                     ("cohorts", cohort_rows(res, cohort_ids))):
                    path = out / f"{prefix}_{algo}_seed{res.seed}.{args.format}"
                    path.write_text(_render(rows, columns, args.format))
                    written.append(path)
                records.append(run_record(res))
            summary["algorithms"][algo] = {"summary": summarize(records, cfg.horizon), "runs": records}
            s = summary["algorithms"][algo]["summary"]
            print(f"{algo}: {s['n_converged']}/{s['n_runs']} converged, median steps {s['median_steps']}")
        path = out / "summary.json"
        path.write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n")
        written.append(path)
    except BaseException:
        for p in written:
            p.unlink(missing_ok=True)
        if created and not any(out.iterdir()):
            out.rmdir()
        raise
    return 0


# ---------------------------------------------------------------------------
# compare


def load_summary(run_dir) -> dict:
    path = Path(run_dir) / "summary.json"
    if not path.is_file():
        raise ConfigError(f"{run_dir} has no summary.json")
    return json.loads(path.read_text())


def compare(run_dirs: Sequence, out) -> dict:
    summaries = [(Path(d), load_summary(d)) for d in run_dirs]
    prints = {s["fingerprint"] for _, s in summaries}
    if len(prints) != 1:
        raise ConfigError("run sets were produced from different configurations")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    report = {"fingerprint": prints.pop(), "run_sets": {}}
    for d, s in summaries:
        for algo, block in s["algorithms"].items():
            label = f"{d.name}:{algo}"
            report["run_sets"][label] = dict(block["summary"])
            report["run_sets"][label]["time_average_violation_at_T"] = block["summary"]["median_time_average_violation"]
            rows = [
                [t + 1, r["seed"], v]
                for r in block["runs"] for t, v in enumerate(r["best_feasible_score"])
            ]
            plot = out / f"plot_{d.name}_{algo}.csv"
            plot.write_text(_render(rows, ["step", "seed", "best_feasible_score"], "csv"))
    labels = list(report["run_sets"])
    base = report["run_sets"][labels[0]]["median_steps"]
    report["median_difference_vs_first"] = {
        label: ("none" if "none" in (base, v["median_steps"]) else v["median_steps"] - base)
        for label, v in report["run_sets"].items()
    }
    (out / "comparison.json").write_text(json.dumps(report, indent=1, sort_keys=True) + "\n")
    return report


def cmd_compare(args) -> int:
    if len(args.run_dirs) < 2:
        raise ConfigError("compare needs at least two run directories")
    report = compare(args.run_dirs, args.out)
    for label, s in report["run_sets"].items():
        print(f"{label}: steps min {s['min_steps']} median {s['median_steps']} max {s['max_steps']}, "
              f"rate {s['convergence_rate']:.2f}, time-average violation {s['time_average_violation_at_T']:+.3f}")
    return 0


def cmd_accept(args) -> int:
    from .acceptance import run_all

    numbers = [int(n) for n in args.criteria.split(",")] if args.criteria else None
    results = run_all(numbers)
    return 0 if all(r.passed for r in results) else 1


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ctrcbo", description="Cohort trust-region contextual BO harness")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run seeded experiments and write metrics")
    r.add_argument("--config", default=_env_default("config", "benchmark_3cohort.ini"))
    r.add_argument("--seeds", default=_env_default("seeds"), help="a,b,c or lo..hi (default: config)")
    r.add_argument("--algo", default=_env_default("algo", "ctrcbo"), help="comma list of ctrcbo, cbo, random")
    r.add_argument("--out", default=_env_default("out", "runs"))
    r.add_argument("--format", default=_env_default("format", "csv"), choices=("csv", "json"))
    r.add_argument("--horizon", default=_env_default("horizon"), type=int)
    r.add_argument("--workers", default=_env_default("workers", "1"), type=int)
    r.add_argument("--full-horizon", action="store_true", help="do not stop at convergence")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("compare", help="compare completed run directories")
    c.add_argument("run_dirs", nargs="+")
    c.add_argument("--out", default=_env_default("out", "comparison"))
    c.set_defaults(func=cmd_compare)

    a = sub.add_parser("accept", help="run the acceptance suite")
    a.add_argument("--criteria", default=None, help="comma list of criterion numbers")
    a.set_defaults(func=cmd_accept)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=logging.ERROR, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"ctrcbo: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # a run crashed; partial outputs are already removed
        print(f"ctrcbo: run failed: {exc!r}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
