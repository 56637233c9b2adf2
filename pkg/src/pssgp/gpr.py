"""Temporal GP regression on top of the state-space machinery.

The functional API here works on :class:`Dataset` values; the scikit-learn
style estimator in :mod:`pssgp.estimator` wraps it.
"""
import logging
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy.linalg import cho_solve, lapack

from . import kalman
from .kernels import evaluate
from .matcore import NotPositiveDefiniteError, NumericalError
from .optim import OptimizerConfig, lbfgs_maximize
from .ssm import TimeGrid, discretize, discretize_balanced

logger = logging.getLogger(__name__)

__all__ = [
    "Dataset",
    "FitResult",
    "GpPrediction",
    "METHODS",
    "MergedGrid",
    "log_marginal_likelihood",
    "merge_grids",
    "naive_gp",
    "optimize_hyperparameters",
    "predict",
]

METHODS = ("parallel", "sequential", "naive")
NAIVE_MAX_N = 4096
_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class Dataset:
    """Training data sorted by time, plus optional prediction times.

    ``r`` is the per-point observation noise variance. Ties in ``t`` are
    kept; sorting is stable so tied points keep their input order.
    """

    t: np.ndarray
    y: np.ndarray
    r: np.ndarray
    t_test: Optional[np.ndarray] = None

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float).reshape(-1)
        y = np.asarray(self.y, dtype=float).reshape(-1)
        r = np.broadcast_to(np.asarray(self.r, dtype=float), t.shape).astype(float)
        if y.shape != t.shape:
            raise ValueError(f"t and y lengths differ ({t.size} vs {y.size})")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(y)) and np.all(np.isfinite(r))):
            raise ValueError("dataset contains non-finite values")
        if np.any(r <= 0):
            raise ValueError("noise variances must be positive")
        order = np.argsort(t, kind="stable")
        object.__setattr__(self, "t", t[order])
        object.__setattr__(self, "y", y[order])
        object.__setattr__(self, "r", r[order])
        if self.t_test is not None:
            tt = np.asarray(self.t_test, dtype=float).reshape(-1)
            if not np.all(np.isfinite(tt)):
                raise ValueError("test times must be finite")
            object.__setattr__(self, "t_test", tt)

    @property
    def n(self):
        return self.t.size

    def with_noise(self, noise_variance):
        return Dataset(self.t, self.y, np.full(self.t.shape, float(noise_variance)), self.t_test)

    def with_test(self, t_test):
        return Dataset(self.t, self.y, self.r, t_test)


class GpPrediction(NamedTuple):
    mean: np.ndarray
    var: np.ndarray
    y_var: Optional[np.ndarray] = None


class MergedGrid(NamedTuple):
    times: np.ndarray
    observed: np.ndarray
    train_index: np.ndarray
    test_index: np.ndarray


def merge_grids(train, test):
    """Merge sorted training and test times into one grid.

    Test times equal to a training time (or to each other) share a single
    grid point. Returns the grid, its observation mask, and the grid index of
    every training and every test time.
    """
    train = np.asarray(train, dtype=float).reshape(-1)
    test = np.asarray(test, dtype=float).reshape(-1)
    if np.any(np.diff(train) < 0) or np.any(np.diff(test) < 0):
        raise ValueError("merge_grids needs inputs sorted in ascending order")
    extra = np.unique(test)
    extra = extra[~np.isin(extra, train)]
    times = np.concatenate([train, extra])
    order = np.argsort(times, kind="stable")
    times = times[order]
    observed = np.concatenate([np.ones(train.size, bool), np.zeros(extra.size, bool)])[order]
    position = np.empty(order.size, dtype=int)
    position[order] = np.arange(order.size)
    train_index = position[:train.size]
    test_index = np.searchsorted(times, test, side="right") - 1
    return MergedGrid(times, observed, train_index, test_index)


def _discrete_model(kernel, grid, balance):
    ssm = kernel.state_space()
    return discretize_balanced(ssm, grid) if balance else discretize(ssm, grid)


def _run_filter(model, method, workers, stats):
    if method == "parallel":
        return kalman.parallel_filter(model, workers=workers, stats=stats)
    if method == "sequential":
        return kalman.sequential_filter(model)
    raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")


def log_marginal_likelihood(kernel, data, *, method="parallel", balance=True, workers=1,
                            stats=None, raise_errors=False):
    """``log p(y | theta)`` computed on the training grid only.

    Numerical failures give ``-inf`` (an infeasible point for the optimizer)
    unless ``raise_errors`` is set.
    """
    if method == "naive":
        return naive_gp(kernel, data.with_test(None))[1]
    try:
        grid = TimeGrid.from_observations(data.t, data.y, data.r)
        model = _discrete_model(kernel, grid, balance)
        ll = _run_filter(model, method, workers, stats).loglik
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        if raise_errors:
            raise
        logger.debug("likelihood evaluation failed: %s", exc)
        return -np.inf
    if not np.isfinite(ll):
        if raise_errors:
            raise NumericalError("log-likelihood is not finite")
        return -np.inf
    return ll


def predict(kernel, data, *, method="parallel", balance=True, workers=1, stats=None,
            noise_variance=None):
    """Posterior mean and variance of ``f`` at ``data.t_test``.

    Test times are inserted into the training grid as unobserved points;
    filtering and smoothing then run on the merged grid. ``noise_variance``,
    if given, adds the predictive ``y`` variance.
    """
    t_test = np.zeros(0) if data.t_test is None else data.t_test
    if method == "naive":
        pred, _ = naive_gp(kernel, data.with_test(t_test))
    else:
        order = np.argsort(t_test, kind="stable")
        merged = merge_grids(data.t, t_test[order])
        y = np.full(merged.times.shape, np.nan)
        r = np.full(merged.times.shape, np.nan)
        y[merged.train_index] = data.y
        r[merged.train_index] = data.r
        grid = TimeGrid(merged.times, merged.observed, y, r)
        model = _discrete_model(kernel, grid, balance)
        filtered = _run_filter(model, method, workers, stats)
        if method == "parallel":
            smoothed = kalman.parallel_smoother(model, filtered, workers=workers, stats=stats)
        else:
            smoothed = kalman.sequential_smoother(model, filtered)
        mean_all, var_all = smoothed.project(model.H)
        mean = np.empty(t_test.size)
        var = np.empty(t_test.size)
        mean[order] = mean_all[merged.test_index]
        var[order] = var_all[merged.test_index]
        pred = GpPrediction(mean, var)
    var = np.maximum(pred.var, 0.0)
    y_var = None if noise_variance is None else var + noise_variance
    return GpPrediction(pred.mean, var, y_var)


def _cholesky(k):
    c, info = lapack.dpotrf(k, lower=True, clean=True)
    if info > 0:
        jitter = 1e-8 * max(1.0, np.mean(np.diag(k)))
        c, info = lapack.dpotrf(k + jitter * np.eye(k.shape[0]), lower=True, clean=True)
        if info > 0:
            raise NotPositiveDefiniteError(info - 1, "kernel matrix is not positive definite after jitter")
    return c


def naive_gp(kernel, data):
    """Dense O(N^3) GP regression; returns ``(prediction or None, loglik)``.

    This is the reference the state-space paths are checked against.
    """
    if data.n > NAIVE_MAX_N:
        raise ValueError(f"naive GP refused for N = {data.n} > {NAIVE_MAX_N}")
    t, y = data.t, data.y
    k = evaluate(kernel, t[:, None] - t[None, :]) + np.diag(data.r)
    c = _cholesky(k)
    alpha = cho_solve((c, True), y)
    loglik = -0.5 * (y @ alpha) - np.sum(np.log(np.diag(c))) - 0.5 * data.n * _LOG_2PI
    if data.t_test is None:
        return None, float(loglik)
    ks = evaluate(kernel, t[:, None] - data.t_test[None, :])
    mean = ks.T @ alpha
    v = cho_solve((c, True), ks)
    var = evaluate(kernel, 0.0) - np.einsum("ij,ij->j", ks, v)
    return GpPrediction(mean, var), float(loglik)


@dataclass
class FitResult:
    kernel: object
    noise_variance: Optional[float]
    loglik: float
    converged: bool
    message: str
    trace: list
    n_evals: int


def optimize_hyperparameters(kernel, data, config=None, *, fit_noise=True, noise_variance=None,
                             method="parallel", balance=True):
    """Maximize the log marginal likelihood over log-hyperparameters.

    With ``fit_noise`` a single shared noise variance is learned, starting
    from ``noise_variance`` (default: the mean of ``data.r``). Otherwise the
    per-point variances in ``data`` are used as given.
    """
    cfg = config or OptimizerConfig()
    p = len(kernel.param_names)
    if fit_noise:
        start_noise = float(np.mean(data.r)) if noise_variance is None else float(noise_variance)
        x0 = np.concatenate([kernel.theta, [np.log(start_noise)]])
    else:
        x0 = kernel.theta

    def unpack(x):
        k = kernel.with_theta(x[:p])
        d = data.with_noise(np.exp(x[p])) if fit_noise else data
        return k, d

    def objective(x):
        if not np.all(np.abs(x) < 50):
            return -np.inf
        k, d = unpack(x)
        return log_marginal_likelihood(k, d, method=method, balance=balance)

    res = lbfgs_maximize(objective, x0, cfg)
    k, _ = unpack(res.x)
    noise = float(np.exp(res.x[p])) if fit_noise else None
    return FitResult(kernel=k, noise_variance=noise, loglik=res.value, converged=res.converged,
                     message=res.message, trace=res.trace, n_evals=res.n_evals)
