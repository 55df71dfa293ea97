"""Hypervolume-improvement acquisition with a dual-weighted constraint penalty.

Objective pairs are handled as ``(score, headroom)`` with both coordinates
maximized, where ``headroom = budget - impressions_delta``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import qmc

from .gp import GPModel
from .primal_dual import DualState
from .trust_region import GlobalBounds, TrustRegion, region_bounds


def _as_points(points) -> np.ndarray:
    P = np.asarray(points, dtype=float)
    if P.size == 0:
        return np.empty((0, 2))
    P = P.reshape(-1, 2)
    if not np.all(np.isfinite(P)):
        raise ValueError("objective points must be finite")
    return P


def pareto_filter(points) -> np.ndarray:
    """Non-dominated subset (maximizing both coordinates), sorted by the first
    coordinate descending, duplicates removed."""
    P = _as_points(points)
    if len(P) == 0:
        return P
    P = np.unique(P, axis=0)
    # first coordinate descending, second descending within ties
    P = P[np.lexsort((-P[:, 1], -P[:, 0]))]
    keep = []
    best_y = -np.inf
    for i, (_, y) in enumerate(P):
        if y > best_y:
            keep.append(i)
            best_y = y
    return P[keep]


@dataclass(frozen=True, eq=False)
class ParetoFront:
    points: np.ndarray
    ref: np.ndarray

    @classmethod
    def from_observations(cls, points, ref) -> "ParetoFront":
        ref = np.asarray(ref, dtype=float).ravel()
        P = _as_points(points)
        P = P[np.all(P > ref, axis=1)]
        return cls(pareto_filter(P), ref)


def hypervolume_2d(front: ParetoFront) -> float:
    ref = np.asarray(front.ref, dtype=float)
    P = _as_points(front.points)
    P = pareto_filter(P[np.all(P > ref, axis=1)])
    if len(P) == 0:
        return 0.0
    # x descending, y ascending: each point adds a horizontal strip
    ys = np.concatenate(([ref[1]], P[:, 1]))
    return float(np.sum((P[:, 0] - ref[0]) * np.diff(ys)))


def hvi(candidate, front: ParetoFront) -> float:
    base = hypervolume_2d(front)
    grown = ParetoFront(np.vstack([_as_points(front.points), _as_points(candidate)]), front.ref)
    return max(0.0, hypervolume_2d(grown) - base)


def hvi_many(candidates, front: ParetoFront) -> np.ndarray:
    """Vectorized HVI: the candidate's rectangle minus the front clipped to it."""
    C = _as_points(candidates)
    ref = np.asarray(front.ref, dtype=float)
    P = _as_points(front.points)
    P = pareto_filter(P[np.all(P > ref, axis=1)])
    box = np.clip(C[:, 0] - ref[0], 0.0, None) * np.clip(C[:, 1] - ref[1], 0.0, None)
    if len(P) == 0:
        return box
    # clipping keeps the staircase order (x non-increasing, y non-decreasing)
    cx = np.clip(np.minimum(P[None, :, 0], C[:, None, 0]) - ref[0], 0.0, None)
    cy = np.maximum(np.minimum(P[None, :, 1], C[:, None, 1]), ref[1])
    dy = np.diff(cy, axis=1, prepend=ref[1])
    covered = np.sum(cx * dy, axis=1)
    return np.maximum(box - covered, 0.0)


def dynamic_reference(points, margin: float = 0.1, min_span: float = 1.0) -> np.ndarray:
    """Nadir of the observed points minus ``margin`` of their span.

    The span is floored at ``min_span`` so that a single observation still
    yields a usable reference point.
    """
    P = _as_points(points)
    if len(P) == 0:
        return np.full(2, -margin * min_span)
    span = np.maximum(P.max(axis=0) - P.min(axis=0), min_span)
    return P.min(axis=0) - margin * span


def generate_candidates(box, n: int, stream: np.random.Generator) -> np.ndarray:
    """Box center followed by ``n - 1`` scrambled Sobol points inside ``box``."""
    if n < 1:
        raise ValueError("need at least one candidate")
    lower, upper = (np.asarray(b, dtype=float) for b in box)
    center = 0.5 * (lower + upper)
    if n == 1:
        return center[None, :]
    sampler = qmc.Sobol(d=lower.size, scramble=True, seed=stream)
    m = int(np.ceil(np.log2(n - 1))) if n > 2 else 0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        unit = sampler.random_base2(m)[: n - 1]
    pts = lower + unit * (upper - lower)
    return np.vstack([center, np.clip(pts, lower, upper)])


def _optimistic_objectives(thetas, z, f_gp, c_gps, budgets, beta):
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    z = np.asarray(z, dtype=float).ravel()
    inputs = np.hstack([thetas, np.broadcast_to(z, (len(thetas), z.size))])
    mu_f, var_f = f_gp.predict_many(inputs)
    mu_c = np.empty((len(thetas), len(c_gps)))
    sd_c = np.empty_like(mu_c)
    for i, gp in enumerate(c_gps):
        m, v = gp.predict_many(inputs)
        mu_c[:, i], sd_c[:, i] = m, np.sqrt(v)
    f_opt = mu_f + beta * np.sqrt(var_f)
    headroom_opt = budgets[None, :] - (mu_c - beta * sd_c)
    return f_opt, headroom_opt, mu_c


def acquisition_scores(
    thetas,
    z,
    f_gp: GPModel,
    c_gps: Sequence[GPModel],
    duals: DualState,
    front: ParetoFront,
    budgets,
    beta: float = 1.0,
) -> np.ndarray:
    """Optimistic HVI of (score, headroom_1) minus ``eta * lam . [mu_c - budget]_+``."""
    budgets = np.atleast_1d(np.asarray(budgets, dtype=float))
    if len(c_gps) != budgets.size or duals.lam.size != budgets.size:
        raise ValueError("constraint models, budgets and duals disagree on N")
    f_opt, headroom_opt, mu_c = _optimistic_objectives(thetas, z, f_gp, c_gps, budgets, beta)
    gain = hvi_many(np.column_stack([f_opt, headroom_opt[:, 0]]), front)
    penalty = duals.eta * (np.maximum(mu_c - budgets[None, :], 0.0) @ duals.lam)
    return gain - penalty


def acquisition_score(theta, z, f_gp, c_gps, duals, front, budgets, beta: float = 1.0) -> float:
    theta = np.asarray(theta, dtype=float).ravel()
    return float(acquisition_scores(theta[None, :], z, f_gp, c_gps, duals, front, budgets, beta)[0])


def argmax_first(scores) -> int:
    """Index of the maximum score; the lowest index wins ties."""
    return int(np.argmax(np.asarray(scores, dtype=float)))


def select_policy(
    tr: TrustRegion | None,
    g: GlobalBounds,
    z,
    f_gp: GPModel,
    c_gps: Sequence[GPModel],
    duals: DualState,
    front: ParetoFront,
    budgets,
    n_candidates: int,
    beta: float,
    stream: np.random.Generator,
) -> np.ndarray:
    """Argmax of the acquisition over candidates drawn in the region box.

    ``tr=None`` searches the whole of ``g``. Models see ``theta ⊕ z``, so extra
    features such as a cohort one-hot can be passed by appending them to ``z``.
    """
    box = region_bounds(tr, g) if tr is not None else (g.lower, g.upper)
    cands = generate_candidates(box, n_candidates, stream)
    scores = acquisition_scores(cands, z, f_gp, c_gps, duals, front, budgets, beta)
    return cands[argmax_first(scores)]
