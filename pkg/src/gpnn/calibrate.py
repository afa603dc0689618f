"""Variance recalibration from a held-out calibration subset.

The mean standardized squared residual alpha on the calibration set rescales
both variance parameters: theta' = (l, alpha * noise_var, alpha * signal_var).
This leaves every predictive mean (hence MSE) unchanged, multiplies every
predictive variance by alpha exactly, and so drives the weak-calibration
statistic on the calibration set to 1 while minimizing its NLL over all
single-factor rescalings.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .gp import PredictiveDistribution
from .kernels import Theta

DEFAULT_CALIBRATION_SIZE = 1000


@dataclass(frozen=True)
class CalibrationResult:
    alpha: float
    theta_prime: Theta
    calibration_set_size: int


def weak_calibration_factor(y: np.ndarray, mu: np.ndarray, var: np.ndarray) -> float:
    """Mean standardized squared residual (1/c) sum (y_i - mu_i)^2 / var_i."""
    y = np.asarray(y, dtype=float)
    mu = np.asarray(mu, dtype=float)
    var = np.asarray(var, dtype=float)
    if y.size < 1:
        raise ValueError("calibration set is empty")
    if np.any(var <= 0):
        raise ValueError("non-positive predictive variance in calibration set")
    return float(np.mean((y - mu) ** 2 / var))


def rescale_theta(theta: Theta, alpha: float) -> Theta:
    if alpha <= 0:
        raise ValueError(f"calibration factor must be positive, got {alpha}")
    return theta.scaled(alpha)


def calibrate(
    predict_fn: Callable[[np.ndarray], PredictiveDistribution],
    X_C: np.ndarray,
    y_C: np.ndarray,
    theta_hat: Theta,
) -> CalibrationResult:
    """Run the recalibration step against any pointwise predictor under theta_hat."""
    X_C = np.atleast_2d(np.asarray(X_C, dtype=float))
    y_C = np.asarray(y_C, dtype=float)
    if X_C.shape[0] != y_C.size:
        raise ValueError("calibration inputs and labels differ in length")
    preds = [predict_fn(x) for x in X_C]
    mu = np.array([p.mean for p in preds])
    var = np.array([p.variance for p in preds])
    alpha = weak_calibration_factor(y_C, mu, var)
    return CalibrationResult(
        alpha=alpha,
        theta_prime=rescale_theta(theta_hat, alpha),
        calibration_set_size=int(y_C.size),
    )
