"""Exhaustive lattice scan certifying that a benchmark target is reachable.

Each cohort is evaluated on an ``n^d`` lattice at the mean context. Only the
(score max, impressions min) Pareto set of a cohort can appear in an optimal
platform profile, so the weighted fronts are Minkowski-summed cohort by
cohort with a Pareto filter after every merge.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .acquisition import pareto_filter
from .simulator import CONTEXT_MEAN, Environment, true_response_many


@dataclass(frozen=True)
class GridScanCertificate:
    lattice_size: int
    score_target: float
    impression_budget: float
    best_feasible_score: float
    best_feasible_impressions: float
    margin: float
    per_cohort_best: list[float]  # each cohort alone under the same budget
    midpoint_score: float
    midpoint_impressions: float

    def feasible(self, required_margin: float = 0.2) -> bool:
        return self.margin >= required_margin

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "GridScanCertificate":
        return cls(**json.loads(text))


def lattice(lower, upper, n: int) -> np.ndarray:
    axes = [np.linspace(lo, hi, n) for lo, hi in zip(lower, upper)]
    return np.array(list(itertools.product(*axes)))


def _cost_front(pairs: np.ndarray) -> np.ndarray:
    """Pareto set for maximizing column 0 and minimizing column 1."""
    flipped = pareto_filter(np.column_stack([pairs[:, 0], -pairs[:, 1]]))
    return np.column_stack([flipped[:, 0], -flipped[:, 1]])


def minkowski_front(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    summed = (a[:, None, :] + b[None, :, :]).reshape(-1, 2)
    return _cost_front(summed)


def platform_front(env: Environment, lower, upper, n: int = 50, z=CONTEXT_MEAN) -> np.ndarray:
    """Pareto set of platform (score, impressions) over per-cohort lattice policies."""
    grid = lattice(lower, upper, n)
    combined = None
    for cohort in env.cohorts:
        front = cohort.weight * _cost_front(true_response_many(cohort, grid, z))
        combined = front if combined is None else minkowski_front(combined, front)
    return combined


def scan(env: Environment, lower, upper, n: int = 50) -> GridScanCertificate:
    front = platform_front(env, lower, upper, n)
    ok = front[front[:, 1] <= env.impression_budget]
    if len(ok) == 0:
        best = (-np.inf, np.nan)
    else:
        best = ok[int(np.argmax(ok[:, 0]))]
    grid = lattice(lower, upper, n)
    per_cohort = []
    for cohort in env.cohorts:
        pairs = true_response_many(cohort, grid, CONTEXT_MEAN)
        feas = pairs[pairs[:, 1] <= env.impression_budget]
        per_cohort.append(float(feas[:, 0].max()) if len(feas) else float("-inf"))
    mid = 0.5 * (np.asarray(lower, dtype=float) + np.asarray(upper, dtype=float))
    mid_pairs = np.array([true_response_many(c, mid, CONTEXT_MEAN)[0] for c in env.cohorts])
    mid_platform = env.weights @ mid_pairs
    return GridScanCertificate(
        lattice_size=n,
        score_target=env.score_target,
        impression_budget=env.impression_budget,
        best_feasible_score=float(best[0]),
        best_feasible_impressions=float(best[1]),
        margin=float(best[0] - env.score_target),
        per_cohort_best=per_cohort,
        midpoint_score=float(mid_platform[0]),
        midpoint_impressions=float(mid_platform[1]),
    )


def write_certificate(cert: GridScanCertificate, path) -> Path:
    path = Path(path)
    path.write_text(cert.to_json())
    return path
