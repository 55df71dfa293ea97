"""Cohort trust-region contextual BO with a primal-dual constraint layer.

One call to :func:`ctrcbo_step` runs a full time step: per-cohort local GP
fits, acquisition maximization inside each trust region, execution, region
updates, and a single dual update from the volume-weighted constraint report.
:func:`run_naive_cbo` is the same loop with one pooled GP and no regions.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import gp as gpm
from .acquisition import (
    ParetoFront,
    dynamic_reference,
    generate_candidates,
    hypervolume_2d,
    select_policy,
)
from .config import ExperimentConfig
from .primal_dual import DualState, dual_update, time_average_violation, weighted_violation
from .simulator import Environment, aggregate, causal_seed_centers
from .trust_region import TrustRegion, recenter, region_bounds, update_on_outcome

log = logging.getLogger(__name__)

ALGORITHMS = ("ctrcbo", "cbo", "random")
_PURPOSE = {"candidates": 1, "cold": 2, "observe": 3, "random": 4, "context": 5}


def derived_rng(seed: int, purpose: str, *keys: int) -> np.random.Generator:
    """Independent stream per (seed, purpose, keys); call order never matters."""
    return np.random.default_rng([seed, _PURPOSE[purpose], *keys])


@dataclass
class CohortData:
    thetas: list = field(default_factory=list)
    contexts: list = field(default_factory=list)
    scores: list = field(default_factory=list)
    impressions: list = field(default_factory=list)
    steps: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.steps)

    def append(self, theta, z, score: float, impressions, step: int) -> None:
        self.thetas.append(np.asarray(theta, dtype=float).copy())
        self.contexts.append(np.asarray(z, dtype=float).copy())
        self.scores.append(float(score))
        self.impressions.append(np.atleast_1d(np.asarray(impressions, dtype=float)).copy())
        self.steps.append(int(step))

    def inputs(self, idx=None) -> np.ndarray:
        X = np.hstack([np.array(self.thetas), np.array(self.contexts)])
        return X if idx is None else X[idx]

    def objective_pairs(self, budget: float) -> np.ndarray:
        """(score, headroom) pairs on the first constraint."""
        return np.column_stack([self.scores, budget - np.array(self.impressions)[:, 0]])


@dataclass
class ObservationLog:
    cohorts: list[CohortData]
    contexts: list = field(default_factory=list)
    lambdas: list = field(default_factory=list)
    tr_lengths: list = field(default_factory=list)
    weighted: list = field(default_factory=list)
    platform: list = field(default_factory=list)
    fit_failures: list = field(default_factory=list)

    @property
    def n_steps(self) -> int:
        return len(self.platform)


@dataclass
class PolicyDecision:
    cohort_id: int
    theta: np.ndarray
    tr_length: float
    cold_start: bool = False
    fit_failed: bool = False
    models: tuple | None = field(default=None, repr=False)  # (f_gp, c_gps) used to select


@dataclass
class OptimizerState:
    config: ExperimentConfig
    n_cohorts: int
    seed: int
    algorithm: str = "ctrcbo"
    t: int = 0
    duals: DualState | None = None
    regions: list | None = None
    hypers: dict = field(default_factory=dict)
    log: ObservationLog | None = None
    centers: list | None = None  # initial trust-region centers, one per cohort

    def __post_init__(self):
        cfg = self.config
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.duals is None:
            self.duals = DualState.zeros(cfg.n_constraints, cfg.epsilon, cfg.eta)
        if self.regions is None and self.algorithm == "ctrcbo":
            centers = self.centers
            if centers is None:
                center = cfg.initial_center or cfg.bounds.midpoint
                centers = [center] * self.n_cohorts
            if len(centers) != self.n_cohorts:
                raise ValueError("need one initial center per cohort")
            self.regions = [
                TrustRegion(
                    cohort_id=k, center=np.array(centers[k], dtype=float), length=cfg.length_init,
                    length_min=cfg.length_min, length_max=cfg.length_max,
                    length_init=cfg.length_init, tau_succ=cfg.tau_succ, tau_fail=cfg.tau_fail,
                )
                for k in range(self.n_cohorts)
            ]
            for tr in self.regions:
                if not cfg.bounds.contains(tr.center):
                    raise ValueError(f"initial center {tr.center} outside the policy bounds")
        if self.log is None:
            self.log = ObservationLog([CohortData() for _ in range(self.n_cohorts)])


@dataclass
class RunResult:
    algorithm: str
    seed: int
    converged: bool
    steps_to_convergence: int | None
    time_average_violation: np.ndarray
    regret: float
    platform_score: np.ndarray
    platform_impressions: np.ndarray
    lambdas: np.ndarray  # (T, N), after each step's dual update
    weighted_violation: np.ndarray  # (T, N)
    tr_lengths: np.ndarray  # (T, K); NaN where no trust region exists
    cohort_pairs: np.ndarray  # (T, K, 2) observed (score, impressions_1)
    cumulative_regret: np.ndarray  # (T,)
    converged_flags: np.ndarray  # (T,) bool, converged at or before step t
    best_feasible_score: np.ndarray  # (T,) NaN until a feasible step is seen
    fit_failures: int = 0
    state: OptimizerState | None = field(default=None, repr=False)

    @property
    def n_steps(self) -> int:
        return len(self.platform_score)

    def regret_ratio_at_doublings(self) -> dict[int, float]:
        out, h = {}, 1
        while h <= self.n_steps:
            out[h] = float(self.cumulative_regret[h - 1] / h)
            h *= 2
        return out

    def time_average_at(self, horizon: int) -> np.ndarray:
        return time_average_violation(self.weighted_violation[:horizon])


# ---------------------------------------------------------------------------
# surrogate fitting


def _fit_target(state: OptimizerState, key, X: np.ndarray, y: np.ndarray) -> gpm.GPModel:
    cfg = state.config
    prior_mean = float(np.mean(y))
    cached = state.hypers.get(key)
    due = cached is None or state.t - cached[2] >= cfg.reselect_every
    if due:
        grid = cfg.kernel_grid(float(np.var(y)))
        kernel, noise = gpm.select_hyperparameters(X, y, grid, cfg.noise_variances, prior_mean)
        state.hypers[key] = (kernel, noise, state.t)
    else:
        kernel, noise, _ = cached
    try:
        return gpm.fit(X, y, kernel, noise, prior_mean)
    except np.linalg.LinAlgError:
        if due:
            raise
        # hyperparameters from an older data set may no longer factorize
        del state.hypers[key]
        return _fit_target(state, key, X, y)


def _fit_models(state: OptimizerState, key, X, scores, impressions):
    f_gp = _fit_target(state, (key, "f"), X, np.asarray(scores))
    imp = np.asarray(impressions)
    c_gps = [_fit_target(state, (key, "c", i), X, imp[:, i]) for i in range(imp.shape[1])]
    return f_gp, c_gps


def _front(data: CohortData, cfg: ExperimentConfig) -> ParetoFront:
    pairs = data.objective_pairs(cfg.impression_budget[0])
    return ParetoFront.from_observations(pairs, dynamic_reference(pairs, cfg.ref_margin))


def _in_box(thetas: np.ndarray, box) -> np.ndarray:
    lo, hi = box
    return np.all((thetas >= lo - 1e-12) & (thetas <= hi + 1e-12), axis=1)


def _incumbent(data: CohortData, budgets: np.ndarray, z=None, models=None) -> np.ndarray:
    """Best score among feasible executed policies, else the least violating one.

    With ``models`` the comparison uses posterior means at context ``z``
    instead of the noisy observations.
    """
    thetas = np.array(data.thetas)
    if models is None:
        scores = np.array(data.scores)
        imps = np.array(data.impressions)
    else:
        f_gp, c_gps = models
        X = np.hstack([thetas, np.broadcast_to(z, (len(thetas), len(z)))])
        scores = f_gp.predict_many(X)[0]
        imps = np.column_stack([c.predict_many(X)[0] for c in c_gps])
    violation = np.maximum(imps - budgets[None, :], 0.0).sum(axis=1)
    feasible = violation == 0.0
    if feasible.any():
        return thetas[int(np.argmax(np.where(feasible, scores, -np.inf)))]
    return thetas[int(np.argmin(violation))]


def _success(data: CohortData, cfg: ExperimentConfig) -> bool:
    budget = cfg.impression_budget[0]
    pairs = data.objective_pairs(budget)
    ref = dynamic_reference(pairs, cfg.ref_margin)
    hv_after = hypervolume_2d(ParetoFront(pairs, ref))
    hv_before = hypervolume_2d(ParetoFront(pairs[:-1], ref))
    if hv_after > hv_before:
        return True
    if len(data) < 2:
        return False
    budgets = np.asarray(cfg.impression_budget)
    viol_now = np.maximum(data.impressions[-1] - budgets, 0.0).sum()
    viol_prev = np.maximum(data.impressions[-2] - budgets, 0.0).sum()
    return bool(viol_now < viol_prev and hv_after >= hv_before)


# ---------------------------------------------------------------------------
# policy selection


def _cold_candidate(state: OptimizerState, k: int, box, index: int) -> np.ndarray:
    n = max(state.config.n_candidates, state.config.cold_start)
    cands = generate_candidates(box, n, derived_rng(state.seed, "cold", k))
    return cands[min(index, n - 1)]


def _select_ctrcbo(state: OptimizerState, z) -> list[PolicyDecision]:
    cfg, bounds = state.config, state.config.bounds
    budgets = np.asarray(cfg.impression_budget)
    decisions = []
    for k, tr in enumerate(state.regions):
        data = state.log.cohorts[k]
        box = region_bounds(tr, bounds)
        if len(data) < cfg.cold_start:
            theta = _cold_candidate(state, k, box, len(data))
            decisions.append(PolicyDecision(k, theta, tr.length, cold_start=True))
            continue
        X = data.inputs()
        inside = _in_box(np.array(data.thetas), box)
        idx = inside if inside.sum() >= 2 * cfg.policy_dim else np.ones(len(data), bool)
        try:
            f_gp, c_gps = _fit_models(
                state, k, X[idx], np.array(data.scores)[idx], np.array(data.impressions)[idx]
            )
            theta = select_policy(
                tr, bounds, z, f_gp, c_gps, state.duals, _front(data, cfg), budgets,
                cfg.n_candidates, cfg.beta, derived_rng(state.seed, "candidates", state.t, k),
            )
            decisions.append(PolicyDecision(k, theta, tr.length, models=(f_gp, c_gps)))
        except np.linalg.LinAlgError as exc:
            log.warning("cohort %d step %d: GP fit failed (%s); using region center", k, state.t, exc)
            center = 0.5 * (box[0] + box[1])
            decisions.append(PolicyDecision(k, center, tr.length, fit_failed=True))
    return decisions


def _one_hot(k: int, n: int) -> np.ndarray:
    e = np.zeros(n)
    e[k] = 1.0
    return e


def _select_cbo(state: OptimizerState, z) -> list[PolicyDecision]:
    cfg, bounds = state.config, state.config.bounds
    budgets = np.asarray(cfg.impression_budget)
    K = state.n_cohorts
    box = (bounds.lower, bounds.upper)
    cohorts = state.log.cohorts
    if any(len(d) < cfg.cold_start for d in cohorts):
        return [
            PolicyDecision(k, _cold_candidate(state, k, box, len(d)), np.nan, cold_start=True)
            for k, d in enumerate(cohorts)
        ]
    X = np.vstack([
        np.hstack([d.inputs(), np.tile(_one_hot(k, K), (len(d), 1))]) for k, d in enumerate(cohorts)
    ])
    scores = np.concatenate([d.scores for d in cohorts])
    imps = np.vstack([np.array(d.impressions) for d in cohorts])
    try:
        f_gp, c_gps = _fit_models(state, "pooled", X, scores, imps)
    except np.linalg.LinAlgError as exc:
        log.warning("step %d: pooled GP fit failed (%s); using box center", state.t, exc)
        return [PolicyDecision(k, bounds.midpoint, np.nan, fit_failed=True) for k in range(K)]
    decisions = []
    for k, data in enumerate(cohorts):
        z_aug = np.concatenate([np.asarray(z, dtype=float), _one_hot(k, K)])
        theta = select_policy(
            None, bounds, z_aug, f_gp, c_gps, state.duals, _front(data, cfg), budgets,
            cfg.n_candidates, cfg.beta, derived_rng(state.seed, "candidates", state.t, k),
        )
        decisions.append(PolicyDecision(k, theta, np.nan))
    return decisions


def _select_random(state: OptimizerState, z) -> list[PolicyDecision]:
    bounds = state.config.bounds
    out = []
    for k in range(state.n_cohorts):
        u = derived_rng(state.seed, "random", state.t, k).random(bounds.dim)
        out.append(PolicyDecision(k, bounds.lower + u * bounds.span, np.nan))
    return out


_SELECTORS = {"ctrcbo": _select_ctrcbo, "cbo": _select_cbo, "random": _select_random}


# ---------------------------------------------------------------------------
# the step


ObserveFn = Callable[[Sequence[np.ndarray], np.ndarray], tuple]


def ctrcbo_step(state: OptimizerState, z, env_observe: ObserveFn) -> list[PolicyDecision]:
    """Advance ``state`` by one time step under context ``z``.

    ``env_observe(decisions, z)`` must return ``(pairs, report)`` where
    ``pairs[k] = (score, impressions...)`` and ``report`` is the cohort
    :class:`~ctrcbo.primal_dual.ConstraintReport`.
    """
    state.t += 1
    z = np.asarray(z, dtype=float)
    decisions = _SELECTORS[state.algorithm](state, z)
    pairs, report = env_observe([d.theta for d in decisions], z)
    pairs = np.asarray(pairs, dtype=float)
    cfg = state.config
    budgets = np.asarray(cfg.impression_budget)

    lengths = []
    for d in decisions:
        data = state.log.cohorts[d.cohort_id]
        data.append(d.theta, z, pairs[d.cohort_id, 0], pairs[d.cohort_id, 1:], state.t)
        lengths.append(d.tr_length)
        if state.regions is None:
            continue
        tr = state.regions[d.cohort_id]
        success = (not d.fit_failed) and _success(data, cfg)
        tr = update_on_outcome(tr, success)
        tr = recenter(tr, _incumbent(data, budgets, z, d.models), cfg.bounds)
        state.regions[d.cohort_id] = tr

    weighted = weighted_violation(report)
    state.duals = dual_update(state.duals, weighted)

    lg = state.log
    lg.contexts.append(z.copy())
    lg.lambdas.append(state.duals.lam.copy())
    lg.tr_lengths.append(np.array(lengths, dtype=float))
    lg.weighted.append(weighted.copy())
    lg.platform.append(np.asarray(aggregate(pairs[:, :2], report.weights)))
    lg.fit_failures.append(sum(d.fit_failed for d in decisions))
    return decisions


# ---------------------------------------------------------------------------
# convergence and results


def _window_hits(score: np.ndarray, weighted: np.ndarray, cfg: ExperimentConfig) -> np.ndarray:
    return (score >= cfg.score_target) & np.all(weighted <= 0.0, axis=1)


def check_convergence(log: ObservationLog, config: ExperimentConfig) -> tuple[bool, int | None]:
    """Earliest step ending a run of ``convergence_window`` steps that all meet
    the score target with every weighted constraint satisfied."""
    if log.n_steps == 0:
        raise ValueError("empty observation log")
    hits = _window_hits(
        np.array([p[0] for p in log.platform]), np.array(log.weighted), config
    )
    run = 0
    for t, hit in enumerate(hits, start=1):
        run = run + 1 if hit else 0
        if run >= config.convergence_window:
            return True, t
    return False, None


def _result(state: OptimizerState) -> RunResult:
    lg, cfg = state.log, state.config
    platform = np.array(lg.platform)
    weighted = np.array(lg.weighted)
    score = platform[:, 0]
    converged, step = check_convergence(lg, cfg)

    feasible = np.all(weighted <= 0.0, axis=1)
    best = np.maximum.accumulate(np.where(feasible, score, -np.inf))
    regret_step = np.where(np.isfinite(best), np.maximum(best - score, 0.0), 0.0)
    flags = np.zeros(len(score), bool)
    if converged:
        flags[step - 1:] = True
    cohort_pairs = np.stack(
        [np.column_stack([d.scores, np.array(d.impressions)[:, 0]]) for d in lg.cohorts], axis=1
    )
    return RunResult(
        algorithm=state.algorithm,
        seed=state.seed,
        converged=converged,
        steps_to_convergence=step,
        time_average_violation=time_average_violation(weighted),
        regret=float(regret_step.sum()),
        platform_score=score,
        platform_impressions=platform[:, 1],
        lambdas=np.array(lg.lambdas),
        weighted_violation=weighted,
        tr_lengths=np.array(lg.tr_lengths),
        cohort_pairs=cohort_pairs,
        cumulative_regret=np.cumsum(regret_step),
        converged_flags=flags,
        best_feasible_score=np.where(np.isfinite(best), best, np.nan),
        fit_failures=int(sum(lg.fit_failures)),
    )


def initial_centers(config: ExperimentConfig, env: Environment) -> list[np.ndarray]:
    """Per-cohort trust-region starting points: explicit, causal-seeded or midpoint."""
    if config.initial_center is not None:
        return [np.array(config.initial_center, dtype=float)] * env.n_cohorts
    if config.tr_init == "causal":
        return causal_seed_centers(env, config.lower, config.upper, config.causal_seed_intensity)
    return [config.bounds.midpoint] * env.n_cohorts


def make_observer(env: Environment, seed: int, state: OptimizerState) -> ObserveFn:
    def observe(decisions, z):
        return env.observe(decisions, z, derived_rng(seed, "observe", state.t))

    return observe


def run(config: ExperimentConfig, env: Environment, algorithm: str = "ctrcbo",
        seed: int | None = None) -> RunResult:
    seed = config.seeds[0] if seed is None else seed
    if env.n_cohorts < 1 or env.policy_dim != config.policy_dim:
        raise ValueError("environment does not match the configuration")
    state = OptimizerState(config, env.n_cohorts, seed, algorithm,
                           centers=initial_centers(config, env))
    contexts = env.context_process(np.random.SeedSequence([seed, _PURPOSE["context"]]))
    observe = make_observer(env, seed, state)
    run_len = 0
    for t in range(1, config.horizon + 1):
        ctrcbo_step(state, contexts.sample(t), observe)
        hit = _window_hits(
            np.array([state.log.platform[-1][0]]), state.log.weighted[-1][None, :], config
        )[0]
        run_len = run_len + 1 if hit else 0
        if config.stop_on_convergence and run_len >= config.convergence_window:
            break
    result = _result(state)
    result.state = state
    return result


def run_ctrcbo(config: ExperimentConfig, env: Environment, seed: int | None = None) -> RunResult:
    return run(config, env, "ctrcbo", seed)


def run_naive_cbo(config: ExperimentConfig, env: Environment, seed: int | None = None) -> RunResult:
    return run(config, env, "cbo", seed)


def run_random_baseline(config: ExperimentConfig, env: Environment, seed: int | None = None) -> RunResult:
    return run(config, env, "random", seed)


def _run_job(args):
    config, env, algorithm, seed = args
    result = run(config, env, algorithm, seed)
    result.state = None  # keep results picklable and light
    return result


def run_seeds(config: ExperimentConfig, env: Environment, algorithm: str,
              seeds: Sequence[int] | None = None, workers: int = 1) -> list[RunResult]:
    seeds = list(config.seeds if seeds is None else seeds)
    jobs = [(config, env, algorithm, s) for s in seeds]
    if workers <= 1:
        return [_run_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_job, jobs))


def median_steps(results: Sequence[RunResult], horizon: int) -> float:
    """Median steps-to-convergence, counting unconverged runs as ``horizon + 1``."""
    steps = [r.steps_to_convergence if r.converged else horizon + 1 for r in results]
    return float(np.median(steps))


# ---------------------------------------------------------------------------
# proxy model check


@dataclass
class ProxyCheck:
    predicted: np.ndarray  # platform (score, impressions), averaged over held-out steps
    realized: np.ndarray

    @property
    def abs_error(self) -> np.ndarray:
        return np.abs(self.predicted - self.realized)


def proxy_prediction_check(log: ObservationLog, env: Environment, config: ExperimentConfig,
                           holdout: int = 20) -> ProxyCheck:
    """Predict platform outcomes of the last ``holdout`` executed steps with
    per-cohort GPs trained on everything before them.

    The comparison mirrors an A/B readout: predicted and realized platform
    deltas are each averaged over the held-out window.
    """
    T = log.n_steps
    if not 1 <= holdout < T:
        raise ValueError("holdout must leave at least one training step")
    cut = T - holdout
    preds = np.zeros((holdout, env.n_cohorts, 2))
    for k, data in enumerate(log.cohorts):
        steps = np.array(data.steps)
        train, test = steps <= cut, steps > cut
        X = data.inputs()
        scores = np.array(data.scores)
        imps = np.array(data.impressions)
        models = []
        for y in (scores, imps[:, 0]):
            kernel, noise = gpm.select_hyperparameters(
                X[train], y[train], config.kernel_grid(float(np.var(y[train]))),
                config.noise_variances, float(np.mean(y[train])),
            )
            models.append(gpm.fit(X[train], y[train], kernel, noise, float(np.mean(y[train]))))
        for j, m in enumerate(models):
            preds[:, k, j] = m.predict_many(X[test])[0]
    predicted = np.array([aggregate(p, env.weights) for p in preds]).mean(axis=0)
    realized = np.array(log.platform[cut:])[:, :2].mean(axis=0)
    return ProxyCheck(predicted, realized)
