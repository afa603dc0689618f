"""Dense SPD linear algebra at neighbourhood scale and the exact GP equations.

Everything here is a pure function over immutable inputs; callers may
parallelize freely across queries.  Matrices are small (m up to ~1000), so
dense Cholesky factorization is used throughout; no iterative solvers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .kernels import (
    KernelSpec,
    Theta,
    corr_with_dlog_lengthscale,
    cross_vector,
    distance_matrix,
    gram,
)

LOG_2PI = float(np.log(2.0 * np.pi))

# successive multiples of mean(diag) tried before declaring failure
JITTER_LADDER = (0.0, 1e-10, 1e-8, 1e-6)

# counts predictive variances that dipped below the noise floor and were clamped
_variance_clamp_count = 0


def variance_clamp_count() -> int:
    return _variance_clamp_count


def reset_variance_clamp_count() -> None:
    global _variance_clamp_count
    _variance_clamp_count = 0


class NotPositiveDefiniteError(Exception):
    """Raised when a matrix stays non-positive-definite through the jitter ladder."""


@dataclass(frozen=True)
class CholeskyFactor:
    """Lower-triangular factor of A + jitter*I with the jitter actually used."""

    lower: np.ndarray
    jitter_used: float


@dataclass(frozen=True)
class PredictiveDistribution:
    """Per-query Gaussian predictive (mean, variance)."""

    mean: float
    variance: float


def cholesky(A: np.ndarray) -> CholeskyFactor:
    """Factor a symmetric matrix, escalating diagonal jitter until pivots are positive."""
    A = np.asarray(A, dtype=float)
    scale = float(np.mean(np.diag(A)))
    if not np.isfinite(scale) or scale <= 0.0:
        scale = 1.0
    for level in JITTER_LADDER:
        jitter = level * scale
        try:
            if jitter == 0.0:
                L = np.linalg.cholesky(A)
            else:
                L = np.linalg.cholesky(A + jitter * np.eye(A.shape[0]))
        except np.linalg.LinAlgError:
            continue
        return CholeskyFactor(lower=L, jitter_used=jitter)
    raise NotPositiveDefiniteError(
        f"matrix of size {A.shape[0]} not positive definite after jitter ladder "
        f"{tuple(l * scale for l in JITTER_LADDER)}"
    )


def solve(chol: CholeskyFactor, b: np.ndarray) -> np.ndarray:
    """A^{-1} b via forward/back substitution against the stored factor."""
    b = np.asarray(b, dtype=float)
    if b.shape[0] != chol.lower.shape[0]:
        raise ValueError(f"shape mismatch: factor is {chol.lower.shape[0]}, rhs has leading {b.shape[0]}")
    z = solve_triangular(chol.lower, b, lower=True)
    return solve_triangular(chol.lower.T, z, lower=False)


def predictive(
    theta: Theta,
    spec: KernelSpec,
    X_N: np.ndarray,
    y_N: np.ndarray,
    xstar: np.ndarray,
) -> PredictiveDistribution:
    """Exact GP predictive from a neighbourhood: mean k*' K^{-1} y, variance
    signal_var - k*' K^{-1} k* + noise_var.

    One Cholesky of the noisy neighbourhood gram and two triangular solves.
    The variance is clamped below at the noise floor; dips below it are
    finite-precision artifacts and are counted for diagnostics.
    """
    global _variance_clamp_count
    X_N = np.atleast_2d(np.asarray(X_N, dtype=float))
    y_N = np.asarray(y_N, dtype=float)
    K = gram(theta, spec, X_N)
    kstar = cross_vector(theta, spec, X_N, xstar)
    chol = cholesky(K)
    w = solve_triangular(chol.lower, kstar, lower=True)
    u = solve_triangular(chol.lower, y_N, lower=True)
    mean = float(w @ u)
    variance = theta.signal_var + theta.noise_var - float(w @ w)
    floor = theta.noise_var * (1.0 - 1e-12)
    if variance < floor:
        _variance_clamp_count += 1
        variance = floor
    return PredictiveDistribution(mean=mean, variance=variance)


def log_marginal_nll(theta: Theta, spec: KernelSpec, X: np.ndarray, y: np.ndarray) -> float:
    """Negative log marginal likelihood 0.5 * (y'K^{-1}y + log|K| + s log 2pi)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    K = gram(theta, spec, X)
    chol = cholesky(K)
    u = solve_triangular(chol.lower, y, lower=True)
    logdet = 2.0 * float(np.sum(np.log(np.diag(chol.lower))))
    return 0.5 * (float(u @ u) + logdet + y.shape[0] * LOG_2PI)


def nll_with_gradient(
    theta: Theta,
    spec: KernelSpec,
    X: np.ndarray,
    y: np.ndarray,
    dist: np.ndarray | None = None,
) -> tuple[float, np.ndarray]:
    """Loss and its analytic gradient w.r.t. (log l, log noise_var, log signal_var).

    Uses the standard identity d(loss) = 0.5 * tr((K^{-1} - aa') dK) with
    a = K^{-1} y, sharing a single Cholesky between loss and gradient.
    ``dist`` may carry the precomputed Euclidean distance matrix of X; the
    training loop reuses it across iterations.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    s = y.shape[0]

    if dist is None:
        dist = distance_matrix(X)
    r = dist / theta.lengthscale
    C, dC_dlog_l = corr_with_dlog_lengthscale(spec, r)
    K = theta.signal_var * C
    K[np.diag_indices_from(K)] += theta.noise_var
    chol = cholesky(K)
    L = chol.lower

    u = solve_triangular(L, y, lower=True)
    alpha = solve_triangular(L.T, u, lower=False)
    logdet = 2.0 * float(np.sum(np.log(np.diag(L))))
    loss = 0.5 * (float(u @ u) + logdet + s * LOG_2PI)

    Linv = solve_triangular(L, np.eye(s), lower=True)
    Kinv = Linv.T @ Linv
    W = Kinv - np.outer(alpha, alpha)

    g_l = 0.5 * theta.signal_var * float(np.sum(W * dC_dlog_l))
    g_nv = 0.5 * theta.noise_var * float(np.trace(W))
    g_sf2 = 0.5 * theta.signal_var * float(np.sum(W * C))
    return loss, np.array([g_l, g_nv, g_sf2])


def nll_gradient(theta: Theta, spec: KernelSpec, X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Gradient of the marginal-likelihood loss in log-parameter space."""
    return nll_with_gradient(theta, spec, X, y)[1]
