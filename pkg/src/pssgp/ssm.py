"""From a continuous SDE to a discrete linear-Gaussian model on a time grid."""
from dataclasses import dataclass

import numpy as np

from .kernels import ContinuousSsm
from .matcore import NumericalError, balance_scaling, expm, repair_psd, symmetrize

__all__ = ["DiscreteModel", "TimeGrid", "balance", "discretize", "discretize_balanced", "transition"]

_BALANCE_TOL = 1e-2
_BALANCE_SWEEPS = 100


@dataclass(frozen=True)
class TimeGrid:
    """Sorted time points with an observation mask.

    ``y`` and ``r`` hold the measurement and its noise variance at observed
    indices; entries at unobserved indices are ignored (stored as NaN).
    """

    times: np.ndarray
    observed: np.ndarray
    y: np.ndarray
    r: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float).reshape(-1)
        if t.size == 0:
            raise ValueError("time grid is empty")
        obs = np.broadcast_to(np.asarray(self.observed, dtype=bool), t.shape).copy()
        y = np.broadcast_to(np.asarray(self.y, dtype=float), t.shape).copy()
        r = np.broadcast_to(np.asarray(self.r, dtype=float), t.shape).copy()
        if not np.all(np.isfinite(t)):
            raise ValueError("times must be finite")
        if np.any(np.diff(t) < 0):
            raise ValueError("times must be non-decreasing")
        if not np.all(np.isfinite(y[obs])):
            raise ValueError("observed values must be finite")
        if not np.all(r[obs] > 0) or not np.all(np.isfinite(r[obs])):
            raise ValueError("observation noise variances must be positive and finite")
        y[~obs] = np.nan
        r[~obs] = np.nan
        for name, val in (("times", t), ("observed", obs), ("y", y), ("r", r)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    def __len__(self):
        return self.times.size

    @classmethod
    def from_observations(cls, times, y, r):
        times = np.asarray(times, dtype=float)
        return cls(times, np.ones(times.shape, dtype=bool), y, r)


@dataclass(frozen=True)
class DiscreteModel:
    """``x_{k+1} = F[k] x_k + q_k``, ``q_k ~ N(0, Q[k])``, ``y_k = H x_k + e_k``.

    ``F`` and ``Q`` have one entry per interval (``len(grid) - 1``). The
    initial state is ``N(0, Pinf)``. ``D`` records the balancing scaling that
    was applied (ones when unbalanced).
    """

    F: np.ndarray
    Q: np.ndarray
    H: np.ndarray
    Pinf: np.ndarray
    grid: TimeGrid
    D: np.ndarray

    def __post_init__(self):
        k = len(self.grid)
        n = self.Pinf.shape[0]
        if self.F.shape != (k - 1, n, n) or self.Q.shape != (k - 1, n, n):
            raise ValueError("F and Q must have one n_x x n_x entry per grid interval")
        if self.H.shape != (n,):
            raise ValueError("H must be a length n_x row")

    @property
    def n_x(self):
        return self.Pinf.shape[0]

    def __len__(self):
        return len(self.grid)


def balance(model):
    """Diagonally rescale the state so the drift has balanced rows and columns.

    Runs Osborne sweeps on the off-diagonal 1-norms of ``G``, with every
    scaling factor rounded to a power of two. Returns ``(balanced, d)`` where
    ``d`` is the diagonal of ``D`` and the balanced model is
    ``(D^-1 G D, D^-1 L, H D, q, D^-1 Pinf D^-1)``; ``f(t) = H x = (H D) z``.
    """
    d = balance_scaling(model.G, _BALANCE_TOL, _BALANCE_SWEEPS)
    inv = 1.0 / d
    g = inv[:, None] * model.G * d[None, :]
    balanced = ContinuousSsm(
        G=g,
        L=inv[:, None] * model.L,
        H=model.H * d,
        q=model.q,
        Pinf=symmetrize(inv[:, None] * model.Pinf * inv[None, :]),
    )
    return balanced, d


def transition(model, dt):
    """``(F, Q)`` for each step in ``dt`` using the stationary shortcut
    ``Q = Pinf - F Pinf F^T``."""
    dt = np.asarray(dt, dtype=float)
    uniq, inverse = np.unique(dt.reshape(-1), return_inverse=True)
    f = expm(uniq[:, None, None] * model.G)
    p = model.Pinf
    q = symmetrize(p - f @ p @ np.swapaxes(f, -1, -2))
    if uniq.size:
        q = _check_process_noise(q, p)
    n = model.n_x
    return f[inverse].reshape(dt.shape + (n, n)), q[inverse].reshape(dt.shape + (n, n))


def _check_process_noise(q, pinf):
    scale = max(1.0, np.abs(pinf).max())
    low = np.linalg.eigvalsh(q).min(axis=-1)
    bad = low < -1e-9 * scale
    if np.any(bad):
        q = q.copy()
        q[bad] = repair_psd(q[bad])
        if np.linalg.eigvalsh(q[bad]).min() < -1e-9 * scale:
            raise NumericalError("process noise covariance is not positive semi-definite")
    return q


def discretize(model, grid):
    """Build the :class:`DiscreteModel` of ``model`` on ``grid``.

    Every interval is handled independently (and identical step sizes are
    computed once). A zero step gives ``F = I``, ``Q = 0``.
    """
    dt = np.diff(grid.times)
    if np.any(dt < 0):
        raise ValueError("grid times must be non-decreasing")
    f, q = transition(model, dt)
    n = model.n_x
    d = np.ones(n)
    return DiscreteModel(F=f.reshape(-1, n, n), Q=q.reshape(-1, n, n), H=np.array(model.H),
                         Pinf=np.array(model.Pinf), grid=grid, D=d)


def discretize_balanced(model, grid):
    """Balance ``model`` then discretize; ``D`` is recorded on the result."""
    balanced, d = balance(model)
    dm = discretize(balanced, grid)
    return DiscreteModel(F=dm.F, Q=dm.Q, H=dm.H, Pinf=dm.Pinf, grid=grid, D=d)
