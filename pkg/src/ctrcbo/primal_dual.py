"""Dual variables for time-average constraint satisfaction.

Sign convention throughout the package: ``g <= 0`` is feasible and
``g = observed_delta - budget``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np


@dataclass(frozen=True, eq=False)
class DualState:
    lam: np.ndarray
    epsilon: float = 0.05
    eta: float = 1.0

    def __post_init__(self):
        lam = np.asarray(self.lam, dtype=float).ravel().copy()
        if np.any(lam < 0) or not np.all(np.isfinite(lam)):
            raise ValueError("dual multipliers must be finite and non-negative")
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        object.__setattr__(self, "lam", lam)

    @classmethod
    def zeros(cls, n_constraints: int, epsilon: float = 0.05, eta: float = 1.0) -> "DualState":
        return cls(np.zeros(n_constraints), epsilon, eta)


@dataclass(frozen=True, eq=False)
class ConstraintReport:
    """Observed constraint values ``per_cohort[k, i]`` and cohort volume weights."""

    per_cohort: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        g = np.atleast_2d(np.asarray(self.per_cohort, dtype=float))
        w = np.asarray(self.weights, dtype=float).ravel()
        object.__setattr__(self, "per_cohort", g)
        object.__setattr__(self, "weights", w)


def check_weights(w: np.ndarray, k: int | None = None) -> None:
    if k is not None and w.size != k:
        raise ValueError(f"expected {k} weights, got {w.size}")
    if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
        raise ValueError(f"weights must be non-negative and sum to 1, got {w}")


def weighted_violation(report: ConstraintReport) -> np.ndarray:
    check_weights(report.weights, report.per_cohort.shape[0])
    return report.weights @ report.per_cohort


def dual_update(state: DualState, weighted) -> DualState:
    weighted = np.asarray(weighted, dtype=float).ravel()
    if weighted.shape != state.lam.shape:
        raise ValueError(f"expected {state.lam.size} violations, got {weighted.size}")
    return replace(state, lam=np.maximum(0.0, state.lam + weighted + state.epsilon))


def time_average_violation(history: Sequence) -> np.ndarray:
    if len(history) == 0:
        raise ValueError("history is empty")
    return np.mean(np.asarray(history, dtype=float), axis=0)
