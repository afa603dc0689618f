"""Performance measures over labelled evaluation sets: MSE/RMSE, NLL and
weak calibration (mean standardized squared residual), plus their closed-form
large-n targets.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .gp import LOG_2PI, PredictiveDistribution


@dataclass(frozen=True)
class MetricsReport:
    mse: float
    rmse: float
    nll: float
    cal: float
    count: int

    CSV_HEADER = "count,mse,rmse,nll,cal"

    def csv_row(self) -> str:
        return f"{self.count},{self.mse!r},{self.rmse!r},{self.nll!r},{self.cal!r}"

    def text_block(self) -> str:
        return (
            f"count: {self.count}\n"
            f"mse: {self.mse!r}\n"
            f"rmse: {self.rmse!r}\n"
            f"nll: {self.nll!r}\n"
            f"cal: {self.cal!r}\n"
        )


def pointwise_scores(mu: np.ndarray, var: np.ndarray, y: np.ndarray):
    """Per-point squared error, negative log density and standardized squared residual."""
    mu = np.asarray(mu, dtype=float)
    var = np.asarray(var, dtype=float)
    y = np.asarray(y, dtype=float)
    if not (mu.shape == var.shape == y.shape):
        raise ValueError(f"length mismatch: mu {mu.shape}, var {var.shape}, y {y.shape}")
    if y.size < 1:
        raise ValueError("need at least one evaluation point")
    if np.any(var <= 0):
        raise ValueError("non-positive predictive variance")
    e = (y - mu) ** 2
    z = e / var
    l = 0.5 * (np.log(var) + z + LOG_2PI)
    return e, l, z


def evaluate_arrays(mu: np.ndarray, var: np.ndarray, y: np.ndarray) -> MetricsReport:
    e, l, z = pointwise_scores(mu, var, y)
    mse = float(np.mean(e))
    return MetricsReport(
        mse=mse,
        rmse=float(np.sqrt(mse)),
        nll=float(np.mean(l)),
        cal=float(np.mean(z)),
        count=int(y.size),
    )


def evaluate(preds: Sequence[PredictiveDistribution], y) -> MetricsReport:
    """Aggregate MSE/RMSE, NLL and calibration over predictions and truths."""
    y = np.asarray(y, dtype=float)
    if len(preds) != y.size:
        raise ValueError(f"length mismatch: {len(preds)} predictions vs {y.size} truths")
    mu = np.array([p.mean for p in preds])
    var = np.array([p.variance for p in preds])
    return evaluate_arrays(mu, var, y)


def asymptotic_limits(noise_var: float, assumed_noise_var: float, m: int):
    """Large-n targets of (MSE, calibration, NLL) for m-neighbour prediction.

    mse -> noise_var * (1 + 1/m); cal -> noise_var / assumed_noise_var;
    nll -> 0.5 * (log(assumed_noise_var * (1 + 1/m)) + cal + log 2pi).
    Second-order O(1/m^2) corrections are omitted.
    """
    if noise_var <= 0 or assumed_noise_var <= 0 or m < 1:
        raise ValueError("noise variances must be positive and m >= 1")
    mse_lim = noise_var * (1.0 + 1.0 / m)
    cal_lim = noise_var / assumed_noise_var
    nll_lim = 0.5 * (np.log(assumed_noise_var * (1.0 + 1.0 / m)) + cal_lim + LOG_2PI)
    return mse_lim, cal_lim, float(nll_lim)
