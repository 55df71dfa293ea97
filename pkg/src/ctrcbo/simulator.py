"""Synthetic ad-load environment with cohorts, weekly context and noisy outcomes.

Each cohort answers a policy ``theta`` with a saturating score gain
``s (1 - exp(-r <u, theta>))`` scaled by a context factor, and an impressions
delta linear in ``<v, theta>`` and proportional to the traffic multiplier.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .primal_dual import ConstraintReport, check_weights

# long-run mean of (seasonality, traffic multiplier)
CONTEXT_MEAN = np.array([0.0, 1.0])


class ObjectivePair(NamedTuple):
    score_delta: float
    impressions_delta: float


def _unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=float).ravel()
    norm = np.linalg.norm(v)
    if norm == 0:
        raise ValueError("direction vector must be non-zero")
    return v / norm


@dataclass(frozen=True, eq=False)
class CohortSpec:
    id: str
    weight: float
    saturation: float
    rate: float
    impression_gain: float
    score_direction: np.ndarray
    impression_direction: np.ndarray
    context_sensitivity: np.ndarray = field(default_factory=lambda: np.zeros(2))
    score_noise_sd: float = 0.0
    impression_noise_sd: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.weight <= 1.0:
            raise ValueError(f"cohort {self.id}: weight must lie in [0, 1]")
        if self.rate <= 0:
            raise ValueError(f"cohort {self.id}: rate must be > 0")
        if self.score_noise_sd < 0 or self.impression_noise_sd < 0:
            raise ValueError(f"cohort {self.id}: noise sd must be >= 0")
        u, v = _unit(self.score_direction), _unit(self.impression_direction)
        if u.shape != v.shape:
            raise ValueError(f"cohort {self.id}: direction vectors differ in dimension")
        object.__setattr__(self, "score_direction", u)
        object.__setattr__(self, "impression_direction", v)
        cs = np.asarray(self.context_sensitivity, dtype=float).ravel()
        object.__setattr__(self, "context_sensitivity", cs)

    @property
    def noise_sd(self) -> np.ndarray:
        return np.array([self.score_noise_sd, self.impression_noise_sd])


class ContextProcess:
    """Deterministic-given-seed context trajectory.

    ``z[0] = sin(2 pi t / period)`` and ``z[1] = 1 + shock_scale * a_t`` where
    ``a_t`` is a unit-variance AR(1) process started at zero.
    """

    def __init__(self, seed, period: float = 7.0, ar_coef: float = 0.8, shock_scale: float = 0.1):
        if not -1.0 < ar_coef < 1.0:
            raise ValueError("AR coefficient must lie in (-1, 1)")
        self.period = period
        self.ar_coef = ar_coef
        self.shock_scale = shock_scale
        self._rng = np.random.default_rng(seed)
        self._ar = [0.0]

    def _extend(self, t: int) -> None:
        innov_sd = math.sqrt(1.0 - self.ar_coef**2)
        while len(self._ar) <= t:
            e = self._rng.standard_normal()
            self._ar.append(self.ar_coef * self._ar[-1] + innov_sd * e)

    def sample(self, t: int) -> np.ndarray:
        if t < 1:
            raise ValueError("steps are numbered from 1")
        self._extend(t)
        season = math.sin(2.0 * math.pi * t / self.period)
        if abs(season) < 1e-12:
            season = 0.0
        return np.array([season, 1.0 + self.shock_scale * self._ar[t]])


def sample_context(t: int, stream: ContextProcess) -> np.ndarray:
    return stream.sample(t)


def true_response(cohort: CohortSpec, theta, z) -> ObjectivePair:
    theta = np.asarray(theta, dtype=float).ravel()
    z = np.asarray(z, dtype=float).ravel()
    reach = float(cohort.score_direction @ theta)
    context_factor = 1.0 + float(cohort.context_sensitivity @ (z - CONTEXT_MEAN))
    score = cohort.saturation * (1.0 - math.exp(-cohort.rate * reach)) * context_factor
    impressions = cohort.impression_gain * float(cohort.impression_direction @ theta) * z[1]
    return ObjectivePair(score, impressions)


def true_response_many(cohort: CohortSpec, thetas, z) -> np.ndarray:
    """Vectorized ``true_response`` over rows of ``thetas``; returns (n, 2)."""
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    z = np.asarray(z, dtype=float).ravel()
    context_factor = 1.0 + cohort.context_sensitivity @ (z - CONTEXT_MEAN)
    score = cohort.saturation * -np.expm1(-cohort.rate * (thetas @ cohort.score_direction))
    impressions = cohort.impression_gain * (thetas @ cohort.impression_direction) * z[1]
    return np.column_stack([score * context_factor, impressions])


def aggregate(per_cohort, weights) -> ObjectivePair:
    P = np.atleast_2d(np.asarray(per_cohort, dtype=float))
    w = np.asarray(weights, dtype=float).ravel()
    check_weights(w, P.shape[0])
    out = w @ P
    return ObjectivePair(float(out[0]), float(out[1]))


@dataclass(frozen=True, eq=False)
class Environment:
    cohorts: tuple[CohortSpec, ...]
    impression_budget: float = 1.5
    score_target: float = 1.0
    context_period: float = 7.0
    context_ar_coef: float = 0.8
    context_shock_scale: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "cohorts", tuple(self.cohorts))
        if not self.cohorts:
            raise ValueError("environment needs at least one cohort")
        check_weights(self.weights)
        dims = {c.score_direction.size for c in self.cohorts}
        if len(dims) != 1:
            raise ValueError("cohorts disagree on policy dimension")

    @property
    def weights(self) -> np.ndarray:
        return np.array([c.weight for c in self.cohorts])

    @property
    def n_cohorts(self) -> int:
        return len(self.cohorts)

    @property
    def policy_dim(self) -> int:
        return self.cohorts[0].score_direction.size

    @property
    def n_constraints(self) -> int:
        return 1

    def context_process(self, seed) -> ContextProcess:
        return ContextProcess(seed, self.context_period, self.context_ar_coef, self.context_shock_scale)

    def observe(self, decisions: Sequence, z, stream: np.random.Generator):
        """Noisy per-cohort (score, impressions) pairs and the constraint report.

        Noise is drawn in cohort order from ``stream``; zero sd gives the exact
        latent response.
        """
        if len(decisions) != self.n_cohorts:
            raise ValueError(f"expected {self.n_cohorts} decisions, got {len(decisions)}")
        noise = stream.standard_normal((self.n_cohorts, 2))
        pairs = np.empty((self.n_cohorts, 2))
        for k, (cohort, theta) in enumerate(zip(self.cohorts, decisions)):
            pairs[k] = np.asarray(true_response(cohort, theta, z)) + cohort.noise_sd * noise[k]
        g = pairs[:, 1:2] - self.impression_budget
        return pairs, ConstraintReport(g, self.weights)


def causal_seed_centers(env: Environment, lower, upper, intensity: float = 0.5) -> list[np.ndarray]:
    """Initial trust-region centers from each cohort's score-sensitivity direction.

    Stands in for an upstream causal model that ranks which policy knobs move
    a cohort's score: it knows the direction ``u_k`` but not the saturation,
    curvature or impression cost, so it proposes ``intensity`` of the way
    along ``u_k / max(u_k)``.
    """
    if not 0.0 <= intensity <= 1.0:
        raise ValueError("intensity must lie in [0, 1]")
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    centers = []
    for cohort in env.cohorts:
        u = np.clip(cohort.score_direction, 0.0, None)
        u = u / u.max() if u.max() > 0 else np.full_like(u, 0.5)
        centers.append(lower + intensity * u * (upper - lower))
    return centers


def benchmark_env_3cohort() -> Environment:
    """The canonical three-cohort benchmark (high, moderate, insensitive)."""
    from .config import BENCHMARK_CONFIG, load_environment

    return load_environment(BENCHMARK_CONFIG)
