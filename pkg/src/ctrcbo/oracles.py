"""Independent reference computations used by the tests and the acceptance suite.

Nothing here imports the package modules they check.
"""

import math

import numpy as np


def standardize(X):
    X = np.asarray(X, dtype=float)
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd[sd <= 1e-12] = 1.0
    return mu, sd


def rbf_dense(A, B, ls, s2):
    out = np.zeros((len(A), len(B)))
    for i, a in enumerate(A):
        for j, b in enumerate(B):
            out[i, j] = s2 * math.exp(-0.5 * sum(((a - b) / ls) ** 2))
    return out


def gp_dense(X, y, Xs, ls, s2, noise, jitter, prior_mean=0.0):
    """Posterior mean/var and LML via generic solve and slogdet."""
    mu, sd = standardize(X)
    Z, Zs = (X - mu) / sd, (Xs - mu) / sd
    K = rbf_dense(Z, Z, ls, s2) + (noise + jitter) * np.eye(len(Z))
    ks = rbf_dense(Z, Zs, ls, s2)
    yc = np.asarray(y) - prior_mean
    mean = prior_mean + ks.T @ np.linalg.solve(K, yc)
    var = s2 - np.einsum("ij,ij->j", ks, np.linalg.solve(K, ks))
    sign, logdet = np.linalg.slogdet(K)
    lml = -0.5 * yc @ np.linalg.solve(K, yc) - 0.5 * logdet - 0.5 * len(y) * math.log(2 * math.pi)
    return mean, var, lml


def dominates(p, q):
    return p[0] >= q[0] and p[1] >= q[1] and (p[0] > q[0] or p[1] > q[1])


def pareto_bruteforce(points):
    pts = {tuple(map(float, p)) for p in points}
    return {p for p in pts if not any(dominates(q, p) for q in pts)}


def hypervolume_grid(points, ref, resolution=2000):
    """Area of the union of [ref, p] rectangles by midpoint-grid integration."""
    pts = [p for p in points if p[0] > ref[0] and p[1] > ref[1]]
    if not pts:
        return 0.0
    hi = np.max(np.asarray(pts), axis=0)
    xs = ref[0] + (np.arange(resolution) + 0.5) * (hi[0] - ref[0]) / resolution
    ys = ref[1] + (np.arange(resolution) + 0.5) * (hi[1] - ref[1]) / resolution
    covered = np.zeros((resolution, resolution), bool)
    for px, py in pts:
        covered |= (xs[:, None] <= px) & (ys[None, :] <= py)
    cell = (hi[0] - ref[0]) * (hi[1] - ref[1]) / resolution**2
    return float(covered.sum() * cell)


def hypervolume_exact_slabs(points, ref):
    """Exact union area by slicing at every distinct x coordinate."""
    pts = [p for p in points if p[0] > ref[0] and p[1] > ref[1]]
    xs = sorted({ref[0], *[p[0] for p in pts]})
    area = 0.0
    for lo, hi in zip(xs[:-1], xs[1:]):
        height = max((p[1] for p in pts if p[0] >= hi), default=ref[1]) - ref[1]
        area += (hi - lo) * max(height, 0.0)
    return area


def trust_region_replay(length, outcomes, lmin, lmax, linit, ts, tf):
    """Streak-counter replay of the region length rules: (length, restarts)."""
    s = f = restarts = 0
    for ok in outcomes:
        if ok:
            s, f = s + 1, 0
            if s == ts:
                length, s = min(2 * length, lmax), 0
        else:
            s, f = 0, f + 1
            if f == tf:
                f = 0
                if length / 2 < lmin:
                    length, restarts = linit, restarts + 1
                else:
                    length = length / 2
    return length, restarts
