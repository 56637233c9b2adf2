"""Kalman filtering and RTS smoothing, sequentially and by associative scan.

The parallel filter represents each time step by an element
``(A, b, C, eta, J)`` that parameterizes ``p(x_k | x_{k-1}, y_k)`` and the
information-form likelihood ``p(y_k | x_{k-1})``; unobserved steps reduce to
the transition density. Prefix combination of the elements yields the
filtering mean ``b*`` and covariance ``C*`` at every step. The smoother
works the same way backwards on elements ``(E, g, L)`` built from the
filter output alone.
"""
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .matcore import NumericalError, repair_psd, symmetrize
from .scan import prefix_scan

__all__ = [
    "FilterElements",
    "SmootherElements",
    "StatePosterior",
    "combine_filter",
    "combine_smoother",
    "filter_identity",
    "make_filter_elements",
    "make_smoother_elements",
    "parallel_filter",
    "parallel_smoother",
    "sequential_filter",
    "sequential_smoother",
    "smoother_identity",
]

_LOG_2PI = np.log(2.0 * np.pi)


class FilterElements(NamedTuple):
    A: np.ndarray
    b: np.ndarray
    C: np.ndarray
    eta: np.ndarray
    J: np.ndarray


class SmootherElements(NamedTuple):
    E: np.ndarray
    g: np.ndarray
    L: np.ndarray


@dataclass(frozen=True)
class StatePosterior:
    """Per-index Gaussian state marginals; ``loglik`` is set by filters only."""

    means: np.ndarray
    covs: np.ndarray
    loglik: Optional[float] = None

    def project(self, h):
        """Mean and variance of ``f = h . x`` at every index."""
        mean = self.means @ h
        var = np.einsum("i,kij,j->k", h, self.covs, h)
        return mean, var


def _t(a):
    return np.swapaxes(a, -1, -2)


def _mv(m, v):
    return np.einsum("...ij,...j->...i", m, v)


def filter_identity(n_x):
    z = np.zeros((n_x, n_x))
    return FilterElements(np.eye(n_x), np.zeros(n_x), z, np.zeros(n_x), z.copy())


def smoother_identity(n_x):
    return SmootherElements(np.eye(n_x), np.zeros(n_x), np.zeros((n_x, n_x)))


def combine_filter(ei, ej):
    """``e_i (+) e_j`` for filter elements (single or batched)."""
    a_i, b_i, c_i, eta_i, j_i = ei
    a_j, b_j, c_j, eta_j, j_j = ej
    n = a_i.shape[-1]
    m = np.eye(n) + c_i @ j_j
    # A_j (I + C_i J_j)^-1  and  A_i^T (I + J_j C_i)^-1, via solves against M
    left = _t(np.linalg.solve(_t(m), _t(a_j)))
    right = _t(np.linalg.solve(m, a_i))
    a = left @ a_i
    b = _mv(left, b_i + _mv(c_i, eta_j)) + b_j
    c = symmetrize(left @ c_i @ _t(a_j) + c_j)
    eta = _mv(right, eta_j - _mv(j_j, b_i)) + eta_i
    j = symmetrize(right @ j_j @ a_i + j_i)
    return FilterElements(a, b, c, eta, j)


def combine_smoother(ei, ej):
    """``e_i (+) e_j`` for smoother elements, ``i`` earlier in time than ``j``."""
    e_i, g_i, l_i = ei
    e_j, g_j, l_j = ej
    return SmootherElements(e_i @ e_j, _mv(e_i, g_j) + g_i, symmetrize(e_i @ l_j @ _t(e_i) + l_i))


def make_filter_elements(model):
    """One filter element per grid index, built independently of each other."""
    grid = model.grid
    k_len, n = len(grid), model.n_x
    h = model.H
    obs = grid.observed
    y = np.where(obs, grid.y, 0.0)
    r = np.where(obs, grid.r, 1.0)

    a = np.zeros((k_len, n, n))
    b = np.zeros((k_len, n))
    c = np.zeros((k_len, n, n))
    eta = np.zeros((k_len, n))
    j = np.zeros((k_len, n, n))

    # first index: prior N(0, Pinf), updated if observed
    p0 = model.Pinf
    if obs[0]:
        ph = p0 @ h
        s = h @ ph + r[0]
        if not s > 0:
            raise NumericalError("innovation variance is not positive at index 0")
        gain = ph / s
        b[0] = gain * y[0]
        c[0] = symmetrize(p0 - np.outer(gain, ph))
    else:
        c[0] = p0

    if k_len > 1:
        f, q = model.F, model.Q
        o = obs[1:]
        a[1:] = f
        c[1:] = q
        if np.any(o):
            fo, qo, yo, ro = f[o], q[o], y[1:][o], r[1:][o]
            qh = qo @ h
            s = qh @ h + ro
            if not np.all(s > 0):
                bad = np.flatnonzero(o)[np.flatnonzero(~(s > 0))[0]] + 1
                raise NumericalError(f"innovation variance is not positive at index {bad}")
            gain = qh / s[:, None]
            hf = np.einsum("i,kij->kj", h, fo)
            idx = np.flatnonzero(o) + 1
            a[idx] = fo - gain[:, :, None] * hf[:, None, :]
            b[idx] = gain * yo[:, None]
            c[idx] = symmetrize(qo - gain[:, :, None] * qh[:, None, :])
            eta[idx] = hf * (yo / s)[:, None]
            j[idx] = hf[:, :, None] * hf[:, None, :] / s[:, None, None]
    return FilterElements(a, b, c, eta, j)


def _loglik_from_filtered(model, means, covs):
    """Sum of one-step predictive log densities at observed indices.

    Each term only needs the filtered marginal at the previous index, so the
    terms are computed together and reduced.
    """
    grid = model.grid
    obs = grid.observed
    if not np.any(obs):
        return 0.0
    h = model.H
    m_pred = np.zeros_like(means)
    p_pred = np.empty_like(covs)
    p_pred[0] = model.Pinf
    if len(grid) > 1:
        m_pred[1:] = _mv(model.F, means[:-1])
        p_pred[1:] = model.F @ covs[:-1] @ _t(model.F) + model.Q
    s = np.einsum("i,kij,j->k", h, p_pred[obs], h) + grid.r[obs]
    if not np.all(s > 0):
        raise NumericalError("innovation variance is not positive")
    v = grid.y[obs] - m_pred[obs] @ h
    return float(-0.5 * np.sum(_LOG_2PI + np.log(s) + v * v / s))


def parallel_filter(model, *, workers=1, stats=None):
    """Filtering marginals by forward prefix scan of the filter elements."""
    elems = make_filter_elements(model)
    out = prefix_scan(tuple(elems), combine_filter, workers=workers, stats=stats)
    means, covs = out[1], symmetrize(out[2])
    return StatePosterior(means, covs, _loglik_from_filtered(model, means, covs))


def sequential_filter(model):
    """Textbook Kalman filter, one step at a time."""
    grid = model.grid
    h = model.H
    k_len, n = len(grid), model.n_x
    means = np.zeros((k_len, n))
    covs = np.zeros((k_len, n, n))
    m, p = np.zeros(n), model.Pinf
    loglik = 0.0
    for k in range(k_len):
        if k > 0:
            f, q = model.F[k - 1], model.Q[k - 1]
            m = f @ m
            p = f @ p @ f.T + q
        if grid.observed[k]:
            ph = p @ h
            s = h @ ph + grid.r[k]
            if not s > 0:
                raise NumericalError(f"innovation variance is not positive at index {k}")
            v = grid.y[k] - h @ m
            gain = ph / s
            m = m + gain * v
            p = p - np.outer(gain, gain) * s
            loglik -= 0.5 * (_LOG_2PI + np.log(s) + v * v / s)
        p = symmetrize(p)
        means[k] = m
        covs[k] = p
    return StatePosterior(means, covs, float(loglik))


def _gains(fp, p_pred):
    """``G = P F^T Pp^-1`` given ``fp = F P`` and symmetric ``Pp``."""
    try:
        return _t(np.linalg.solve(p_pred, fp))
    except np.linalg.LinAlgError:
        pass
    out = np.empty_like(fp)
    for k in range(fp.shape[0]):
        try:
            out[k] = np.linalg.solve(p_pred[k], fp[k]).T
        except np.linalg.LinAlgError:
            try:
                out[k] = np.linalg.solve(repair_psd(p_pred[k]), fp[k]).T
            except np.linalg.LinAlgError:
                raise NumericalError(f"predicted covariance is singular at index {k}") from None
    return out


def make_smoother_elements(model, filtered):
    """One smoother element per grid index from the filtering marginals."""
    k_len, n = len(model.grid), model.n_x
    x, p = filtered.means, filtered.covs
    e = np.zeros((k_len, n, n))
    g = np.empty((k_len, n))
    l = np.empty((k_len, n, n))
    g[-1] = x[-1]
    l[-1] = p[-1]
    if k_len > 1:
        f, q = model.F, model.Q
        fp = f @ p[:-1]
        p_pred = symmetrize(fp @ _t(f) + q)
        gain = _gains(fp, p_pred)
        e[:-1] = gain
        g[:-1] = x[:-1] - _mv(gain, _mv(f, x[:-1]))
        l[:-1] = symmetrize(p[:-1] - gain @ fp)
    return SmootherElements(e, g, l)


def parallel_smoother(model, filtered, *, workers=1, stats=None):
    """Smoothing marginals by reverse prefix scan of the smoother elements."""
    elems = make_smoother_elements(model, filtered)
    out = prefix_scan(tuple(elems), combine_smoother, reverse=True, workers=workers, stats=stats)
    return StatePosterior(out[1], symmetrize(out[2]))


def sequential_smoother(model, filtered):
    """Rauch-Tung-Striebel backward recursion."""
    x, p = filtered.means, filtered.covs
    means = np.empty_like(x)
    covs = np.empty_like(p)
    means[-1], covs[-1] = x[-1], p[-1]
    for k in range(len(model.grid) - 2, -1, -1):
        f, q = model.F[k], model.Q[k]
        p_pred = symmetrize(f @ p[k] @ f.T + q)
        gain = _gains((f @ p[k])[None], p_pred[None])[0]
        means[k] = x[k] + gain @ (means[k + 1] - f @ x[k])
        covs[k] = symmetrize(p[k] + gain @ (covs[k + 1] - p_pred) @ gain.T)
    return StatePosterior(means, covs)
