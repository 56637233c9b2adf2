"""scikit-learn compatible front end."""
import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_consistent_length, check_is_fitted

from .gpr import METHODS, Dataset, log_marginal_likelihood, optimize_hyperparameters, predict
from .kernels import Kernel, Matern32, parse_kernel
from .optim import OptimizerConfig

__all__ = ["StateSpaceGPRegressor"]


def _as_times(X, name="X"):
    X = check_array(X, ensure_2d=False, dtype=np.float64, input_name=name)
    if X.ndim == 2:
        if X.shape[1] != 1:
            raise ValueError(f"{name} must have a single (time) feature, got {X.shape[1]}")
        X = X[:, 0]
    return X


class StateSpaceGPRegressor(RegressorMixin, BaseEstimator):
    """Gaussian process regression over time via Kalman filtering and smoothing.

    Parameters
    ----------
    kernel : Kernel or str, default=None
        Covariance function, or a spec string such as ``"matern52(lengthscale=0.5)"``.
        ``None`` means ``Matern32()``.
    noise_variance : float, default=0.1
        Observation noise variance; the starting point when ``fit_noise`` is set.
    optimizer : {"lbfgs", None}, default="lbfgs"
        ``None`` keeps the given hyperparameters.
    fit_noise : bool, default=True
        Learn a single shared noise variance. Ignored when ``sample_noise`` is
        passed to :meth:`fit`.
    method : {"parallel", "sequential", "naive"}, default="parallel"
    balance : bool, default=True
        Rescale the state before discretizing.
    normalize_y : bool, default=False
        Standardize targets before fitting; predictions are mapped back.
    n_jobs : int, default=1
        Threads used by the scan and by the gradient evaluations.
    max_iter : int, default=200
    """

    def __init__(self, kernel=None, noise_variance=0.1, optimizer="lbfgs", fit_noise=True,
                 method="parallel", balance=True, normalize_y=False, n_jobs=1, max_iter=200):
        self.kernel = kernel
        self.noise_variance = noise_variance
        self.optimizer = optimizer
        self.fit_noise = fit_noise
        self.method = method
        self.balance = balance
        self.normalize_y = normalize_y
        self.n_jobs = n_jobs
        self.max_iter = max_iter

    def _kernel(self):
        if self.kernel is None:
            return Matern32()
        if isinstance(self.kernel, str):
            return parse_kernel(self.kernel)
        if isinstance(self.kernel, Kernel):
            return self.kernel
        raise TypeError(f"kernel must be a Kernel or spec string, got {type(self.kernel).__name__}")

    def fit(self, X, y, sample_noise=None):
        """Fit to times ``X`` and targets ``y``.

        ``sample_noise`` gives per-point noise variances (in the units of
        ``y``); when present the noise is not learned.
        """
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.optimizer not in ("lbfgs", None):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        t = _as_times(X)
        y = check_array(y, ensure_2d=False, dtype=np.float64, input_name="y")
        if y.ndim != 1:
            raise ValueError("y must be one-dimensional")
        check_consistent_length(t, y)
        self.n_features_in_ = 1

        if self.normalize_y:
            self._y_mean = float(np.mean(y))
            self._y_scale = float(np.std(y)) or 1.0
        else:
            self._y_mean, self._y_scale = 0.0, 1.0
        y_n = (y - self._y_mean) / self._y_scale

        if sample_noise is not None:
            r = np.broadcast_to(np.asarray(sample_noise, dtype=float), t.shape) / self._y_scale ** 2
            fit_noise = False
        else:
            r = np.full(t.shape, float(self.noise_variance) / self._y_scale ** 2)
            fit_noise = self.fit_noise
        data = Dataset(t, y_n, r)
        kernel = self._kernel()
        opt_method = "parallel" if self.method == "naive" and data.n > 4096 else self.method

        if self.optimizer is not None:
            cfg = OptimizerConfig(max_iter=self.max_iter, workers=self.n_jobs)
            res = optimize_hyperparameters(kernel, data, cfg, fit_noise=fit_noise,
                                           method=opt_method, balance=self.balance)
            kernel = res.kernel
            if res.noise_variance is not None:
                data = data.with_noise(res.noise_variance)
            self.optimization_ = res
            self.log_marginal_likelihood_value_ = res.loglik
        else:
            self.optimization_ = None
            self.log_marginal_likelihood_value_ = log_marginal_likelihood(
                kernel, data, method=opt_method, balance=self.balance, workers=self.n_jobs)

        self.kernel_ = kernel
        self.noise_variance_ = float(np.mean(data.r)) * self._y_scale ** 2
        self.data_ = data
        return self

    def predict(self, X, return_std=False):
        """Posterior mean of ``f`` at ``X`` (and its standard deviation)."""
        check_is_fitted(self)
        t = _as_times(X)
        pred = predict(self.kernel_, self.data_.with_test(t), method=self.method,
                       balance=self.balance, workers=self.n_jobs)
        mean = pred.mean * self._y_scale + self._y_mean
        if return_std:
            return mean, np.sqrt(pred.var) * self._y_scale
        return mean

    def log_marginal_likelihood(self, theta=None):
        """Log marginal likelihood of the training data.

        ``theta`` is a vector of log-hyperparameters of ``kernel_``, optionally
        followed by the log noise variance (both in normalized units when
        ``normalize_y`` is set, as in ``optimization_.trace``). Without it the
        value at the fitted hyperparameters is returned.
        """
        check_is_fitted(self)
        if theta is None:
            return self.log_marginal_likelihood_value_
        theta = np.asarray(theta, dtype=float)
        p = len(self.kernel_.param_names)
        kernel = self.kernel_.with_theta(theta[:p])
        data = self.data_
        if theta.size == p + 1:
            data = data.with_noise(np.exp(theta[p]))
        elif theta.size != p:
            raise ValueError(f"theta must have {p} or {p + 1} entries")
        return log_marginal_likelihood(kernel, data, method=self.method, balance=self.balance,
                                       workers=self.n_jobs)
