"""Cheap hyperparameter estimation on a small random subset.

The full marginal-likelihood loss is replaced by a block-diagonal surrogate:
a seeded subset of size e is partitioned into w = e/s fixed blocks and the
per-block losses are summed.  The sum is minimized over log-parameters with
a bias-corrected adaptive first-order optimizer, full-batch over the blocks
each iteration, and the best iterate seen is returned.  The cost of this
phase does not grow with the training-set size n.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import gp
from ._threads import single_threaded_blas
from .kernels import KernelSpec, Theta, distance_matrix

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

DEFAULT_INIT_THETA = Theta(lengthscale=1.0, noise_var=0.1, signal_var=0.9)


class TrainingFailedError(Exception):
    pass


@dataclass(frozen=True)
class TrainConfig:
    subset_size: int = 3000
    block_size: int = 300
    learning_rate: float = 0.1
    iterations: int = 100
    seed: int = 0
    init_theta: Theta = DEFAULT_INIT_THETA

    def __post_init__(self) -> None:
        if self.subset_size < 1 or self.block_size < 1:
            raise ValueError("subset_size and block_size must be positive")
        if self.subset_size % self.block_size != 0:
            raise ValueError(
                f"block_size {self.block_size} must divide subset_size {self.subset_size}"
            )
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")


@dataclass(frozen=True)
class AdamState:
    """First/second moment accumulators and step counter for the adaptive update."""

    learning_rate: float
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def initial(cls, learning_rate: float, size: int = 3) -> "AdamState":
        return cls(learning_rate=learning_rate, m=np.zeros(size), v=np.zeros(size))


def adam_step(state: AdamState, gradient: np.ndarray) -> tuple[AdamState, np.ndarray]:
    """One bias-corrected adaptive update; returns the new state and parameter delta."""
    g = np.asarray(gradient, dtype=float)
    if not np.all(np.isfinite(g)):
        raise TrainingFailedError(f"non-finite gradient in optimizer step: {g}")
    t = state.t + 1
    m = ADAM_BETA1 * state.m + (1.0 - ADAM_BETA1) * g
    v = ADAM_BETA2 * state.v + (1.0 - ADAM_BETA2) * g * g
    m_hat = m / (1.0 - ADAM_BETA1**t)
    v_hat = v / (1.0 - ADAM_BETA2**t)
    delta = -state.learning_rate * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
    return replace(state, m=m, v=v, t=t), delta


def _choose_blocks(n: int, cfg: TrainConfig) -> list[np.ndarray]:
    """Seeded subset of size min(e, n), sorted ascending, sliced into fixed blocks.

    The upstream train/test split already permutes real data, so contiguous
    slicing of the sorted draw is a uniform random partition there, while
    staying aligned with independent-block synthetic fixtures.
    """
    e_eff = min(cfg.subset_size, n)
    rng = np.random.default_rng(cfg.seed)
    subset = np.sort(rng.choice(n, size=e_eff, replace=False))
    if e_eff < cfg.block_size:
        return [subset]
    w = e_eff // cfg.block_size
    return list(subset[: w * cfg.block_size].reshape(w, cfg.block_size))


def block_nll(X: np.ndarray, y: np.ndarray, blocks: list[np.ndarray], theta: Theta, spec: KernelSpec) -> float:
    """Block-diagonal surrogate loss: sum of per-block marginal-likelihood losses."""
    total = 0.0
    for b, idx in enumerate(blocks):
        try:
            total += gp.log_marginal_nll(theta, spec, X[idx], y[idx])
        except gp.NotPositiveDefiniteError as exc:
            raise TrainingFailedError(f"block {b} not positive definite: {exc}") from exc
    return total


def _block_nll_and_grad(X, y, blocks, theta, spec, dists) -> tuple[float, np.ndarray]:
    total = 0.0
    grad = np.zeros(3)
    for b, idx in enumerate(blocks):
        try:
            loss, g = gp.nll_with_gradient(theta, spec, X[idx], y[idx], dist=dists[b])
        except gp.NotPositiveDefiniteError as exc:
            raise TrainingFailedError(f"block {b} not positive definite: {exc}") from exc
        total += loss
        grad += g
    return total, grad


def estimate_theta(X: np.ndarray, y: np.ndarray, spec: KernelSpec, cfg: TrainConfig) -> Theta:
    """Minimize the block-diagonal loss over log-parameters; returns the best iterate seen."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    blocks = _choose_blocks(X.shape[0], cfg)

    with single_threaded_blas():
        dists = [distance_matrix(X[idx]) for idx in blocks]
        log_theta = cfg.init_theta.log_array()
        state = AdamState.initial(cfg.learning_rate)
        best_loss = np.inf
        best_log_theta = log_theta.copy()

        for t in range(cfg.iterations + 1):
            theta = Theta.from_log_array(log_theta)
            loss, grad = _block_nll_and_grad(X, y, blocks, theta, spec, dists)
            if loss < best_loss:
                best_loss = loss
                best_log_theta = log_theta.copy()
            if t == cfg.iterations:
                break
            state, delta = adam_step(state, grad)
            log_theta = log_theta + delta

    return Theta.from_log_array(best_log_theta)
