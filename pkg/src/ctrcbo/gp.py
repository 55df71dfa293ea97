"""Exact Gaussian-process regression with sigmoid and RBF kernels.

Models are fitted once and then read-only. Inputs are standardized per
dimension with training statistics; the kernel sees standardized inputs.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

JITTER_START = 1e-10
JITTER_CAP = 1e-2


class NotPositiveDefinite(np.linalg.LinAlgError):
    """Raised when the Gram matrix stays indefinite at the jitter cap."""


class KernelKind(str, enum.Enum):
    SIGMOID = "sigmoid"
    RBF = "rbf"


@dataclass(frozen=True)
class KernelSpec:
    """Kernel hyperparameters.

    ``a`` and ``b`` are the slope and bias of the sigmoid kernel
    ``sigma_f2 / (1 + exp(-(a <x, x'> + b)))``; ``lengthscale`` is used by
    RBF only and may be a scalar or one value per input dimension.
    """

    kind: KernelKind = KernelKind.RBF
    a: float = 1.0
    b: float = 0.0
    lengthscale: float | tuple[float, ...] = 1.0
    sigma_f2: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", KernelKind(self.kind))
        if not (math.isfinite(self.a) and math.isfinite(self.b)):
            raise ValueError("sigmoid slope and bias must be finite")
        if not (self.sigma_f2 >= 0 and math.isfinite(self.sigma_f2)):
            raise ValueError(f"sigma_f2 must be finite and >= 0, got {self.sigma_f2}")
        ls = np.atleast_1d(np.asarray(self.lengthscale, dtype=float))
        if np.any(~np.isfinite(ls)) or np.any(ls <= 0):
            raise ValueError(f"lengthscale components must be > 0, got {self.lengthscale}")
        if isinstance(self.lengthscale, (list, np.ndarray)):
            object.__setattr__(self, "lengthscale", tuple(float(v) for v in ls))

    @classmethod
    def sigmoid(cls, a: float = 1.0, b: float = 0.0, sigma_f2: float = 1.0) -> "KernelSpec":
        return cls(KernelKind.SIGMOID, a=a, b=b, sigma_f2=sigma_f2)

    @classmethod
    def rbf(cls, lengthscale=1.0, sigma_f2: float = 1.0) -> "KernelSpec":
        return cls(KernelKind.RBF, lengthscale=lengthscale, sigma_f2=sigma_f2)


def _as_matrix(X, name: str = "X") -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2:
        raise ValueError(f"{name} must be a list of vectors, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains non-finite values")
    return X


def _expit(u: np.ndarray) -> np.ndarray:
    # numerically stable logistic; never overflows
    out = np.empty_like(u)
    pos = u >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-u[pos]))
    e = np.exp(u[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def kernel_matrix(kernel: KernelSpec, A, B) -> np.ndarray:
    """Cross-covariance matrix ``K[i, j] = k(A[i], B[j])``."""
    A = _as_matrix(A, "A")
    B = _as_matrix(B, "B")
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    if kernel.kind is KernelKind.SIGMOID:
        return kernel.sigma_f2 * _expit(kernel.a * (A @ B.T) + kernel.b)
    ls = np.asarray(kernel.lengthscale, dtype=float)
    if ls.ndim == 1 and ls.size not in (1, A.shape[1]):
        raise ValueError(f"lengthscale has {ls.size} entries for {A.shape[1]}-dim inputs")
    As, Bs = A / ls, B / ls
    sq = (
        np.sum(As**2, axis=1)[:, None]
        + np.sum(Bs**2, axis=1)[None, :]
        - 2.0 * (As @ Bs.T)
    )
    np.maximum(sq, 0.0, out=sq)
    return kernel.sigma_f2 * np.exp(-0.5 * sq)


def kernel_eval(kernel: KernelSpec, x_i, x_j) -> float:
    x_i = np.asarray(x_i, dtype=float).ravel()
    x_j = np.asarray(x_j, dtype=float).ravel()
    if x_i.shape != x_j.shape:
        raise ValueError(f"dimension mismatch: {x_i.shape} vs {x_j.shape}")
    if not (np.all(np.isfinite(x_i)) and np.all(np.isfinite(x_j))):
        raise ValueError("kernel inputs must be finite")
    if kernel.kind is KernelKind.SIGMOID:
        u = kernel.a * float(np.dot(x_i, x_j)) + kernel.b
        return kernel.sigma_f2 * float(_expit(np.array([u]))[0])
    # squared distance is symmetric term by term, so k(x, y) == k(y, x) exactly
    r = (x_i - x_j) / np.asarray(kernel.lengthscale, dtype=float)
    return kernel.sigma_f2 * math.exp(-0.5 * float(np.sum(r * r)))


def _symmetric_gram(kernel: KernelSpec, X: np.ndarray) -> np.ndarray:
    K = kernel_matrix(kernel, X, X)
    return np.triu(K) + np.triu(K, 1).T


def _jittered_cholesky(K0: np.ndarray, noise_var: float):
    """Cholesky of ``K0 + (noise + jitter) I`` with escalating jitter."""
    n = K0.shape[0]
    jitter = JITTER_START
    while jitter <= JITTER_CAP * (1 + 1e-9):
        K = K0.copy()
        K[np.diag_indices(n)] += noise_var + jitter
        try:
            L = np.linalg.cholesky(K)
        except np.linalg.LinAlgError:
            jitter *= 10.0
            continue
        if np.all(np.isfinite(L)):
            return K, L, jitter
        jitter *= 10.0
    raise NotPositiveDefinite(
        f"Gram matrix not positive definite with jitter up to {JITTER_CAP:g}"
    )


def gram_matrix(kernel: KernelSpec, X, noise_var: float = 0.0) -> tuple[np.ndarray, float]:
    """Return the jittered Gram matrix and the jitter that made it factorizable."""
    X = _as_matrix(X)
    if X.shape[0] == 0:
        raise ValueError("X must be non-empty")
    K, _, jitter = _jittered_cholesky(_symmetric_gram(kernel, X), noise_var)
    return K, jitter


@dataclass(frozen=True)
class PosteriorPrediction:
    mean: float
    variance: float


@dataclass(frozen=True, eq=False)
class GPModel:
    X: np.ndarray  # raw training inputs, (n, d)
    y: np.ndarray  # centered targets
    kernel: KernelSpec
    noise_var: float
    prior_mean: float
    chol: np.ndarray
    alpha: np.ndarray
    jitter_used: float
    x_shift: np.ndarray = field(repr=False)
    x_scale: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    @property
    def n(self) -> int:
        return self.X.shape[0]

    def transform(self, X) -> np.ndarray:
        X = _as_matrix(X)
        if X.shape[1] != self.dim:
            raise ValueError(f"expected {self.dim}-dim inputs, got {X.shape[1]}")
        return (X - self.x_shift) / self.x_scale

    def predict_many(self, X_star) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and latent variance for each row of ``X_star``."""
        Zs = self.transform(X_star)
        Ks = kernel_matrix(self.kernel, self.transform(self.X), Zs)
        mean = self.prior_mean + Ks.T @ self.alpha
        v = solve_triangular(self.chol, Ks, lower=True, check_finite=False)
        if self.kernel.kind is KernelKind.RBF:
            prior_var = np.full(Zs.shape[0], self.kernel.sigma_f2)
        else:
            prior_var = self.kernel.sigma_f2 * _expit(
                self.kernel.a * np.sum(Zs * Zs, axis=1) + self.kernel.b
            )
        var = prior_var - np.sum(v * v, axis=0)
        return mean, np.maximum(var, 0.0)


def _standardization(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    shift = X.mean(axis=0)
    scale = X.std(axis=0)
    # constant columns (including n = 1) are only centered
    scale = np.where(scale > 1e-12, scale, 1.0)
    return shift, scale


def _refine(K0: np.ndarray, L: np.ndarray, yc: np.ndarray, alpha: np.ndarray, steps: int = 3):
    """Iterative refinement toward ``K0 alpha = yc``, removing the jitter bias
    from noiseless interpolation. Keeps the iterate with the smallest residual."""
    best, best_res = alpha, np.max(np.abs(yc - K0 @ alpha))
    for _ in range(steps):
        alpha = alpha + cho_solve((L, True), yc - K0 @ alpha, check_finite=False)
        res = np.max(np.abs(yc - K0 @ alpha))
        if not res < best_res:
            break
        best, best_res = alpha, res
    return best


def fit(
    X,
    y,
    kernel: KernelSpec,
    noise_var: float = 0.0,
    prior_mean: float = 0.0,
    standardize: bool = True,
) -> GPModel:
    X = _as_matrix(X)
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] == 0:
        raise ValueError("cannot fit a GP to empty data")
    if X.shape[0] != y.shape[0]:
        raise ValueError(f"|X| = {X.shape[0]} but |y| = {y.shape[0]}")
    if not np.all(np.isfinite(y)):
        raise ValueError("targets contain non-finite values")
    if noise_var < 0:
        raise ValueError("noise_var must be >= 0")
    if standardize:
        shift, scale = _standardization(X)
    else:
        shift, scale = np.zeros(X.shape[1]), np.ones(X.shape[1])
    Z = (X - shift) / scale
    K0 = _symmetric_gram(kernel, Z)
    _, L, jitter = _jittered_cholesky(K0, noise_var)
    yc = y - prior_mean
    alpha = cho_solve((L, True), yc, check_finite=False)
    if noise_var == 0.0:
        alpha = _refine(K0, L, yc, alpha)
    return GPModel(
        X=X.copy(),
        y=yc,
        kernel=kernel,
        noise_var=float(noise_var),
        prior_mean=float(prior_mean),
        chol=L,
        alpha=alpha,
        jitter_used=jitter,
        x_shift=shift,
        x_scale=scale,
    )


def predict(model: GPModel, x_star) -> PosteriorPrediction:
    x_star = np.asarray(x_star, dtype=float)
    if x_star.ndim != 1:
        raise ValueError("predict takes a single input vector; use GPModel.predict_many")
    mean, var = model.predict_many(x_star[None, :])
    return PosteriorPrediction(float(mean[0]), float(var[0]))


def log_marginal_likelihood(model: GPModel) -> float:
    n = model.n
    return float(
        -0.5 * model.y @ model.alpha
        - np.sum(np.log(np.diag(model.chol)))
        - 0.5 * n * math.log(2.0 * math.pi)
    )


def select_hyperparameters(
    X,
    y,
    candidate_grid: Sequence[KernelSpec],
    noise_grid: Sequence[float],
    prior_mean: float = 0.0,
) -> tuple[KernelSpec, float]:
    """Grid search over (kernel, noise) maximizing the log marginal likelihood.

    The grid is scanned kernel-major; ties keep the earliest entry. Candidates
    whose Gram matrix cannot be factorized are skipped.
    """
    if not candidate_grid or not noise_grid:
        raise ValueError("hyperparameter grids must be non-empty")
    best = None
    best_lml = -math.inf
    for kernel in candidate_grid:
        for noise in noise_grid:
            try:
                lml = log_marginal_likelihood(fit(X, y, kernel, noise, prior_mean))
            except np.linalg.LinAlgError:
                continue
            if best is None or lml > best_lml:
                best, best_lml = (kernel, float(noise)), lml
    if best is None:
        raise NotPositiveDefinite("no hyperparameter candidate could be fitted")
    return best
