"""Temporal Gaussian process regression through state-space models.

Covariance functions are turned into linear SDEs, discretized on the time
grid, and solved with Kalman filtering and smoothing run either step by
step or as associative prefix scans of logarithmic depth.
"""
from .estimator import StateSpaceGPRegressor
from .gpr import Dataset, GpPrediction, log_marginal_likelihood, naive_gp, optimize_hyperparameters, predict
from .kalman import parallel_filter, parallel_smoother, sequential_filter, sequential_smoother
from .kernels import RBF, Kernel, Matern12, Matern32, Matern52, Periodic, Product, Sum, parse_kernel
from .matcore import NotPositiveDefiniteError, NumericalError
from .optim import OptimizerConfig
from .scan import ScanStats, prefix_scan

__version__ = "0.1.0"

__all__ = [
    "RBF",
    "Dataset",
    "GpPrediction",
    "Kernel",
    "Matern12",
    "Matern32",
    "Matern52",
    "NotPositiveDefiniteError",
    "NumericalError",
    "OptimizerConfig",
    "Periodic",
    "Product",
    "ScanStats",
    "StateSpaceGPRegressor",
    "Sum",
    "log_marginal_likelihood",
    "naive_gp",
    "optimize_hyperparameters",
    "parallel_filter",
    "parallel_smoother",
    "parse_kernel",
    "predict",
    "prefix_scan",
    "sequential_filter",
    "sequential_smoother",
]
