"""Per-cohort trust regions with streak-based expand/shrink/restart."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np


@dataclass(frozen=True, eq=False)
class GlobalBounds:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=float).ravel()
        upper = np.asarray(self.upper, dtype=float).ravel()
        if lower.shape != upper.shape:
            raise ValueError("lower and upper bounds differ in dimension")
        if not np.all(lower < upper):
            raise ValueError("bounds require lower < upper componentwise")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def unit(cls, dim: int) -> "GlobalBounds":
        return cls(np.zeros(dim), np.ones(dim))

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def span(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def midpoint(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    def contains(self, x, tol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))


@dataclass(frozen=True, eq=False)
class TrustRegion:
    """Axis-aligned box of edge ``length`` (in normalized units) around ``center``."""

    cohort_id: int
    center: np.ndarray
    length: float = 0.4
    length_min: float = 0.05
    length_max: float = 1.0
    length_init: float = 0.4
    success_streak: int = 0
    failure_streak: int = 0
    tau_succ: int = 3
    tau_fail: int = 5
    restart_count: int = 0

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float).ravel().copy())
        if not 0 < self.length_min <= self.length_init <= self.length_max:
            raise ValueError("need 0 < length_min <= length_init <= length_max")
        if not self.length_min <= self.length <= self.length_max:
            raise ValueError(f"length {self.length} outside [{self.length_min}, {self.length_max}]")
        if self.tau_succ < 1 or self.tau_fail < 1:
            raise ValueError("streak thresholds must be >= 1")

    def same_as(self, other: "TrustRegion") -> bool:
        return (
            np.array_equal(self.center, other.center)
            and (self.length, self.success_streak, self.failure_streak, self.restart_count)
            == (other.length, other.success_streak, other.failure_streak, other.restart_count)
        )


def region_bounds(tr: TrustRegion, g: GlobalBounds) -> tuple[np.ndarray, np.ndarray]:
    half = 0.5 * tr.length * g.span
    lower = np.clip(tr.center - half, g.lower, g.upper)
    upper = np.clip(tr.center + half, g.lower, g.upper)
    return lower, upper


def update_on_outcome(tr: TrustRegion, success: bool) -> TrustRegion:
    if success:
        streak = tr.success_streak + 1
        if streak >= tr.tau_succ:
            return replace(tr, length=min(2.0 * tr.length, tr.length_max),
                           success_streak=0, failure_streak=0)
        return replace(tr, success_streak=streak, failure_streak=0)

    streak = tr.failure_streak + 1
    if streak < tr.tau_fail:
        return replace(tr, success_streak=0, failure_streak=streak)
    shrunk = tr.length / 2.0
    if shrunk < tr.length_min:
        return replace(tr, length=tr.length_init, success_streak=0, failure_streak=0,
                       restart_count=tr.restart_count + 1)
    return replace(tr, length=shrunk, success_streak=0, failure_streak=0)


def recenter(tr: TrustRegion, best, g: GlobalBounds) -> TrustRegion:
    best = np.asarray(best, dtype=float).ravel()
    if best.shape != tr.center.shape:
        raise ValueError("new center has the wrong dimension")
    if not g.contains(best):
        raise ValueError(f"center {best} lies outside the global bounds")
    return replace(tr, center=best)
