"""Limited-memory quasi-Newton ascent with finite-difference gradients."""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)

__all__ = ["OptimizerConfig", "OptimizeResult", "finite_difference_gradient", "lbfgs_maximize"]


@dataclass
class OptimizerConfig:
    max_iter: int = 200
    gtol: float = 1e-5
    ftol: float = 1e-9
    memory: int = 10
    armijo: float = 1e-4
    shrink: float = 0.5
    max_backtracks: int = 40
    rel_step: float = 1e-5
    workers: int = 1


@dataclass
class OptimizeResult:
    x: np.ndarray
    value: float
    grad: np.ndarray
    n_iter: int
    converged: bool
    message: str
    trace: list = field(default_factory=list)
    n_evals: int = 0


def _steps(x, rel_step):
    return rel_step * np.maximum(1.0, np.abs(x))


def finite_difference_gradient(fun, x, rel_step=1e-5, order=2, workers=1):
    """Central-difference gradient of ``fun`` at ``x``.

    ``order=2`` uses the 3-point stencil, ``order=4`` the 5-point one. The
    step for coordinate ``i`` is ``rel_step * max(1, |x_i|)``. Each perturbed
    evaluation is independent; with ``workers > 1`` they run on a thread
    pool.
    """
    x = np.asarray(x, dtype=float)
    h = _steps(x, rel_step)
    if order == 2:
        offsets, weights = (1, -1), (0.5, -0.5)
    elif order == 4:
        offsets, weights = (2, 1, -1, -2), (-1 / 12, 8 / 12, -8 / 12, 1 / 12)
    else:
        raise ValueError("order must be 2 or 4")
    points = []
    for i in range(x.size):
        for o in offsets:
            xp = x.copy()
            xp[i] += o * h[i]
            points.append(xp)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            values = list(pool.map(fun, points))
    else:
        values = [fun(p) for p in points]
    values = np.asarray(values, dtype=float).reshape(x.size, len(offsets))
    return values @ np.asarray(weights) / h


def lbfgs_maximize(fun, x0, config=None, grad=None):
    """Maximize ``fun`` from ``x0``.

    Backtracking (Armijo) line search along the L-BFGS direction; every
    accepted step strictly increases the objective. Stops when the gradient
    norm drops below ``gtol``, the relative change in value is below
    ``ftol``, or after ``max_iter`` iterations.
    """
    cfg = config or OptimizerConfig()
    n_evals = [0]

    def f(x):
        n_evals[0] += 1
        return float(fun(x))

    if grad is None:
        def grad(x):
            n_evals[0] += 2 * x.size
            return finite_difference_gradient(fun, x, cfg.rel_step, workers=cfg.workers)

    x = np.array(x0, dtype=float)
    val = f(x)
    if not np.isfinite(val):
        raise ValueError("objective is not finite at the initial point")
    g = np.asarray(grad(x), dtype=float)
    trace = [{"iteration": 0, "theta": x.tolist(), "value": val, "grad_norm": float(np.linalg.norm(g))}]
    s_hist, y_hist = [], []
    message, converged = "maximum number of iterations reached", False

    for it in range(1, cfg.max_iter + 1):
        gnorm = np.linalg.norm(g)
        if not np.isfinite(gnorm):
            message = "gradient is not finite"
            break
        if gnorm <= cfg.gtol:
            message, converged = "gradient norm below tolerance", True
            break
        # work with the negated objective: descent direction d = -H (-g)
        d = _two_loop(g, s_hist, y_hist)
        slope = g @ d
        if not slope > 0:
            s_hist.clear()
            y_hist.clear()
            d = g / gnorm
            slope = g @ d
        alpha = 1.0
        for _ in range(cfg.max_backtracks):
            x_new = x + alpha * d
            val_new = f(x_new)
            if np.isfinite(val_new) and val_new >= val + cfg.armijo * alpha * slope:
                break
            alpha *= cfg.shrink
        else:
            message = "line search failed"
            break
        g_new = np.asarray(grad(x_new), dtype=float)
        s, yv = x_new - x, g - g_new  # curvature pair of the negated objective
        if s @ yv > 1e-10 * np.linalg.norm(s) * np.linalg.norm(yv):
            s_hist.append(s)
            y_hist.append(yv)
            if len(s_hist) > cfg.memory:
                s_hist.pop(0)
                y_hist.pop(0)
        change = abs(val_new - val) / max(abs(val), 1.0)
        x, val, g = x_new, val_new, g_new
        trace.append({"iteration": it, "theta": x.tolist(), "value": val,
                      "grad_norm": float(np.linalg.norm(g))})
        logger.debug("iter %d value %.10g |g| %.3g step %.3g", it, val, np.linalg.norm(g), alpha)
        if change <= cfg.ftol:
            message, converged = "relative change in objective below tolerance", True
            break
        if np.linalg.norm(g) <= cfg.gtol:
            message, converged = "gradient norm below tolerance", True
            break
    return OptimizeResult(x=x, value=val, grad=g, n_iter=len(trace) - 1, converged=converged,
                          message=message, trace=trace, n_evals=n_evals[0])


def _two_loop(g, s_hist, y_hist):
    """Ascent direction ``H g`` from the stored curvature pairs."""
    q = g.copy()
    alphas = []
    for s, y in zip(reversed(s_hist), reversed(y_hist)):
        rho = 1.0 / (y @ s)
        a = rho * (s @ q)
        q -= a * y
        alphas.append((rho, a))
    if s_hist:
        s, y = s_hist[-1], y_hist[-1]
        q *= (s @ y) / (y @ y)
    else:
        q /= max(np.linalg.norm(g), 1.0)
    for (s, y), (rho, a) in zip(zip(s_hist, y_hist), reversed(alphas)):
        b = rho * (y @ q)
        q += (a - b) * s
    return q
