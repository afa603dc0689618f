"""Stationary covariance families, gram/cross evaluation and the kernel-induced distance.

All kernels are isotropic with a single shared lengthscale and are normalised
so that the correlation at zero distance is exactly 1.  Noise is attached to
observation identity (gram diagonal), never to coordinate coincidence, so
duplicated training inputs receive independent noise and gram matrices stay
non-singular.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

SQRT3 = math.sqrt(3.0)


class KernelFamily(enum.Enum):
    RBF = "rbf"
    EXPONENTIAL = "exponential"
    MATERN32 = "matern32"


@dataclass(frozen=True)
class KernelSpec:
    """A covariance-function family choice."""

    family: KernelFamily

    @classmethod
    def from_string(cls, name: str) -> "KernelSpec":
        """Parse "rbf" / "exponential" / "matern32" (case-insensitive)."""
        try:
            return cls(KernelFamily(name.strip().lower()))
        except ValueError:
            valid = ", ".join(f.value for f in KernelFamily)
            raise ValueError(f"unknown kernel family {name!r}; expected one of: {valid}") from None

    def __str__(self) -> str:
        return self.family.value


RBF = KernelSpec(KernelFamily.RBF)
EXPONENTIAL = KernelSpec(KernelFamily.EXPONENTIAL)
MATERN32 = KernelSpec(KernelFamily.MATERN32)


@dataclass(frozen=True)
class Theta:
    """Kernel hyperparameters: lengthscale, additive noise variance, signal variance.

    All strictly positive.  Optimization happens in log space; use
    ``log_array`` / ``from_log_array`` to convert.
    """

    lengthscale: float
    noise_var: float
    signal_var: float

    def __post_init__(self) -> None:
        for name in ("lengthscale", "noise_var", "signal_var"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"Theta.{name} must be finite and > 0, got {v}")

    def log_array(self) -> np.ndarray:
        return np.log([self.lengthscale, self.noise_var, self.signal_var])

    @classmethod
    def from_log_array(cls, log_theta: np.ndarray) -> "Theta":
        l, nv, sv = np.exp(np.asarray(log_theta, dtype=float))
        return cls(float(l), float(nv), float(sv))

    def scaled(self, k: float) -> "Theta":
        """Theta with both variance parameters multiplied by ``k`` (lengthscale kept)."""
        return Theta(self.lengthscale, k * self.noise_var, k * self.signal_var)


def corr(spec: KernelSpec, r):
    """Normalised correlation c(r) at scaled distance r = ||x - x'|| / lengthscale.

    c(0) = 1 for every family and c is monotone decreasing in r, which makes
    Euclidean and kernel-distance neighbour orderings identical.
    """
    r = np.asarray(r, dtype=float)
    fam = spec.family
    if fam is KernelFamily.RBF:
        out = np.exp(-0.5 * r * r)
    elif fam is KernelFamily.EXPONENTIAL:
        out = np.exp(-r)
    else:
        out = (1.0 + SQRT3 * r) * np.exp(-SQRT3 * r)
    return out if out.ndim else float(out)


def corr_with_dlog_lengthscale(spec: KernelSpec, r: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(c(r), dc/dlog l) where the derivative is -r * c'(r), sharing one exponential.

    The derivative feeds the analytic marginal-likelihood gradient.
    """
    fam = spec.family
    if fam is KernelFamily.RBF:
        c = np.exp(-0.5 * r * r)
        return c, r * r * c
    if fam is KernelFamily.EXPONENTIAL:
        c = np.exp(-r)
        return c, r * c
    e = np.exp(-SQRT3 * r)
    return (1.0 + SQRT3 * r) * e, 3.0 * r * r * e


def _check_same_dim(x: np.ndarray, x2: np.ndarray) -> None:
    if x.shape != x2.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {x2.shape}")


def kernel(theta: Theta, spec: KernelSpec, x, x2, add_noise: bool = False) -> float:
    """Covariance k(x, x') = signal_var * c(||x - x'|| / l), plus noise_var iff add_noise.

    Callers set ``add_noise`` for gram-matrix diagonal entries only: noise
    belongs to the observation, not to coordinate coincidence.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    x2 = np.atleast_1d(np.asarray(x2, dtype=float))
    _check_same_dim(x, x2)
    r = float(np.linalg.norm(x - x2)) / theta.lengthscale
    value = theta.signal_var * corr(spec, r)
    if add_noise:
        value += theta.noise_var
    return float(value)


def distance_matrix(X: np.ndarray) -> np.ndarray:
    """Pairwise Euclidean distances, exactly symmetric with a zero diagonal."""
    X = np.asarray(X, dtype=float)
    sq_norms = np.einsum("ij,ij->i", X, X)
    sq = sq_norms[:, None] + sq_norms[None, :] - 2.0 * (X @ X.T)
    np.maximum(sq, 0.0, out=sq)
    np.fill_diagonal(sq, 0.0)
    # mirror the upper triangle so the result is symmetric to bit equality
    sq = np.triu(sq) + np.triu(sq, 1).T
    return np.sqrt(sq)


def scaled_distance_matrix(theta: Theta, X: np.ndarray) -> np.ndarray:
    """Pairwise ||x_i - x_j|| / l, exactly symmetric with a zero diagonal."""
    return distance_matrix(X) / theta.lengthscale


def gram(theta: Theta, spec: KernelSpec, X: np.ndarray) -> np.ndarray:
    """Noisy gram matrix: signal_var * c(r_ij) with noise_var added on the diagonal."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    r = scaled_distance_matrix(theta, X)
    K = theta.signal_var * corr(spec, r)
    K[np.diag_indices_from(K)] += theta.noise_var
    return K


def gram_noise_free(theta: Theta, spec: KernelSpec, X: np.ndarray) -> np.ndarray:
    """Gram matrix of the latent signal only (no noise anywhere)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    r = scaled_distance_matrix(theta, X)
    return theta.signal_var * corr(spec, r)


def cross_vector(theta: Theta, spec: KernelSpec, X: np.ndarray, xstar) -> np.ndarray:
    """Covariances k(x_i, x*) between m points and a query point.  Never includes noise."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    xstar = np.atleast_1d(np.asarray(xstar, dtype=float))
    if X.shape[1] != xstar.shape[0]:
        raise ValueError(f"dimension mismatch: points are {X.shape[1]}-d, query is {xstar.shape[0]}-d")
    diff = X - xstar[None, :]
    r = np.sqrt(np.einsum("ij,ij->i", diff, diff)) / theta.lengthscale
    return theta.signal_var * corr(spec, r)


def kernel_distance(theta: Theta, spec: KernelSpec, x, x2) -> float:
    """Kernel-induced distance sigma_f * sqrt(1 - c(||x - x'|| / l)).

    A metric whose ordering of any point set matches Euclidean ordering, since
    c is monotone decreasing in distance.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    x2 = np.atleast_1d(np.asarray(x2, dtype=float))
    _check_same_dim(x, x2)
    r = float(np.linalg.norm(x - x2)) / theta.lengthscale
    return math.sqrt(theta.signal_var * max(1.0 - corr(spec, r), 0.0))
