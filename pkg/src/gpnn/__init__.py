"""Scalable Gaussian-process nearest-neighbour regression.

Cheap global hyperparameter estimation on a small subset, exact local
m-neighbour prediction at query time, and a single-factor variance
recalibration step.  A Monte-Carlo simulator verifies the large-n limiting
behaviour of MSE, NLL and calibration under model misspecification.
"""

from .calibrate import CalibrationResult
from .data import Dataset, WhiteningTransform, fit_whitening, apply_whitening, load_csv, split
from .gp import (
    CholeskyFactor,
    NotPositiveDefiniteError,
    PredictiveDistribution,
    cholesky,
    log_marginal_nll,
    nll_gradient,
    predictive,
    solve,
)
from .kernels import (
    EXPONENTIAL,
    MATERN32,
    RBF,
    KernelFamily,
    KernelSpec,
    Theta,
    corr,
    cross_vector,
    gram,
    kernel,
    kernel_distance,
)
from .metrics import MetricsReport, asymptotic_limits, evaluate
from .model import FitConfig, GpnnModel, fit, load, predict_batch, predict_point, save
from .neighbors import NeighbourIndex, build
from .simulate import (
    SimConfig,
    SweepResult,
    gen_gp_dataset,
    gen_oakley_ohagan,
    run_full_joint_sim,
    run_marginal_sim,
    sample_mvn,
)
from .train import AdamState, TrainConfig, adam_step, estimate_theta

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "CalibrationResult",
    "CholeskyFactor",
    "Dataset",
    "EXPONENTIAL",
    "FitConfig",
    "GpnnModel",
    "KernelFamily",
    "KernelSpec",
    "MATERN32",
    "MetricsReport",
    "NeighbourIndex",
    "NotPositiveDefiniteError",
    "PredictiveDistribution",
    "RBF",
    "SimConfig",
    "SweepResult",
    "Theta",
    "TrainConfig",
    "WhiteningTransform",
    "apply_whitening",
    "asymptotic_limits",
    "adam_step",
    "build",
    "cholesky",
    "corr",
    "cross_vector",
    "estimate_theta",
    "evaluate",
    "fit",
    "fit_whitening",
    "gen_gp_dataset",
    "gen_oakley_ohagan",
    "gram",
    "kernel",
    "kernel_distance",
    "load",
    "load_csv",
    "log_marginal_nll",
    "nll_gradient",
    "predict_batch",
    "predict_point",
    "predictive",
    "run_full_joint_sim",
    "run_marginal_sim",
    "sample_mvn",
    "save",
    "solve",
    "split",
]
