"""Small dense linear algebra shared by the rest of the package.

Everything here operates on float64 arrays of modest size (state dimensions
of a few tens at most). Functions that accept a stack of matrices broadcast
over the leading axes.
"""
import numpy as np
from scipy.linalg import cho_solve, lapack

__all__ = [
    "NotPositiveDefiniteError",
    "NumericalError",
    "as_matrix",
    "balance_scaling",
    "chol_solve",
    "expm",
    "kron",
    "repair_psd",
    "solve_lyapunov",
    "symmetrize",
]

# Higham (2005) degree-13 Pade coefficients and the 1-norm bound below which
# no scaling is required.
_PADE13 = np.array([
    64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
    1187353796428800.0, 129060195264000.0, 10559470521600.0,
    670442572800.0, 33522128640.0, 1323241920.0, 40840800.0,
    960960.0, 16380.0, 182.0, 1.0,
])
_THETA13 = 5.371920351148152

JITTER = 1e-10


class NumericalError(ArithmeticError):
    """A computation produced a non-finite or otherwise unusable result."""


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    """Cholesky factorization failed.

    ``pivot`` is the zero-based index of the leading minor that was not
    positive.
    """

    def __init__(self, pivot, msg=None):
        self.pivot = pivot
        super().__init__(msg or f"matrix is not positive definite (pivot {pivot} failed)")


def as_matrix(a, name="matrix"):
    """Return ``a`` as a finite 2-D float array or raise ``ValueError``."""
    m = np.asarray(a, dtype=float)
    if m.ndim == 0:
        m = m.reshape(1, 1)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise ValueError(f"{name} must be a non-empty 2-D array, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains non-finite entries")
    return m


def symmetrize(a):
    """(A + A^T) / 2 over the last two axes."""
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def kron(a, b):
    """Kronecker product of two matrices."""
    return np.kron(as_matrix(a, "a"), as_matrix(b, "b"))


def expm(a):
    """Matrix exponential by scaling and squaring with a degree-13 Pade approximant.

    ``a`` may be a single square matrix or a stack ``(..., n, n)``; each matrix
    in a stack gets its own scaling exponent, so results do not depend on
    what else is in the batch.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise ValueError(f"expm needs square matrices, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NumericalError("expm input contains non-finite entries")
    n = a.shape[-1]
    batch = a.shape[:-2]
    a = a.reshape((-1, n, n))

    norms = np.abs(a).sum(axis=-2).max(axis=-1)
    with np.errstate(divide="ignore"):
        s = np.where(norms > _THETA13, np.ceil(np.log2(norms / _THETA13)), 0.0)
    s = s.astype(int)
    if np.any(s > 1000):
        raise NumericalError("expm input norm too large; result would overflow")
    a = a / np.exp2(s)[:, None, None]

    ident = np.broadcast_to(np.eye(n), a.shape)
    b = _PADE13
    a2 = a @ a
    a4 = a2 @ a2
    a6 = a4 @ a2
    u = a @ (a6 @ (b[13] * a6 + b[11] * a4 + b[9] * a2)
             + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * ident)
    v = a6 @ (b[12] * a6 + b[10] * a4 + b[8] * a2) + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * ident
    r = np.linalg.solve(v - u, v + u)

    with np.errstate(over="ignore", invalid="ignore"):
        for level in range(int(s.max(initial=0))):
            todo = s > level
            r[todo] = r[todo] @ r[todo]

    r[norms == 0.0] = np.eye(n)
    if not np.all(np.isfinite(r)):
        raise NumericalError("expm overflowed")
    return r.reshape(batch + (n, n))


def chol_solve(s, b):
    """Solve ``S X = B`` for symmetric positive definite ``S``.

    Returns ``(X, logdet)`` where ``logdet`` is ``log|S|`` computed from the
    Cholesky factor. Raises :class:`NotPositiveDefiniteError` carrying the
    failing pivot.
    """
    s = as_matrix(s, "S")
    b = np.asarray(b, dtype=float)
    if s.shape[0] != s.shape[1]:
        raise ValueError("S must be square")
    if not np.allclose(s, s.T, rtol=1e-10, atol=1e-12 * max(1.0, np.abs(s).max())):
        raise ValueError("S must be symmetric")
    c, info = lapack.dpotrf(s, lower=True, clean=True)
    if info > 0:
        raise NotPositiveDefiniteError(info - 1)
    if info < 0:
        raise ValueError(f"dpotrf: illegal argument {-info}")
    x = cho_solve((c, True), b)
    logdet = 2.0 * np.sum(np.log(np.diag(c)))
    return x, logdet


def repair_psd(p):
    """Symmetrize ``p`` and add diagonal jitter of 1e-10 * trace / n.

    This is the one-shot repair applied before giving up on a covariance that
    failed a definiteness check.
    """
    p = symmetrize(np.asarray(p, dtype=float))
    n = p.shape[-1]
    tr = np.trace(p, axis1=-2, axis2=-1)
    jitter = JITTER * np.maximum(np.abs(tr), 1.0) / n
    return p + jitter[..., None, None] * np.eye(n)


def balance_scaling(a, tol=1e-2, max_sweeps=100):
    """Osborne balancing of a square matrix.

    Returns the diagonal ``d`` (powers of two) such that ``D^-1 A D`` has
    off-diagonal row and column 1-norms of comparable size.
    """
    g = np.array(as_matrix(a), dtype=float)
    n = g.shape[0]
    d = np.ones(n)
    off = ~np.eye(n, dtype=bool)
    for _ in range(max_sweeps):
        changed = False
        for i in range(n):
            row = np.abs(g[i, off[i]]).sum()
            col = np.abs(g[off[:, i], i]).sum()
            if row == 0.0 or col == 0.0:
                continue
            f = np.exp2(np.round(0.5 * np.log2(row / col)))
            if f != 1.0:
                g[i, :] /= f
                g[:, i] *= f
                d[i] *= f
                changed = True
        a_off = np.abs(g) * off
        rows, cols = a_off.sum(axis=1), a_off.sum(axis=0)
        live = (rows > 0) & (cols > 0)
        if not changed or np.all(np.abs(np.log(cols[live] / rows[live])) <= tol):
            break
    return d


def solve_lyapunov(g, w):
    """Stationary covariance: solve ``G P + P G^T + W = 0``.

    Uses the vectorized form ``(I kron G + G kron I) vec(P) = -vec(W)``,
    set up on a balanced copy of ``G`` for conditioning. ``G`` must be
    Hurwitz and ``W`` symmetric.
    """
    g = as_matrix(g, "G")
    w = as_matrix(w, "W")
    n = g.shape[0]
    if g.shape != (n, n) or w.shape != (n, n):
        raise ValueError(f"shape mismatch: G {g.shape}, W {w.shape}")
    if not np.allclose(w, w.T, rtol=1e-10, atol=1e-12 * max(1.0, np.abs(w).max())):
        raise ValueError("W must be symmetric")
    d = balance_scaling(g)
    g = g * d[None, :] / d[:, None]
    w = w / np.outer(d, d)
    eye = np.eye(n)
    op = np.kron(eye, g) + np.kron(g, eye)
    try:
        # column-major vec, hence the transposes
        vec_p = np.linalg.solve(op, -w.T.reshape(-1))
    except np.linalg.LinAlgError as exc:
        eig = np.linalg.eigvals(g)
        raise np.linalg.LinAlgError(
            f"Lyapunov system is singular; max Re(eig(G)) = {eig.real.max():.3g} "
            "(G must be Hurwitz)") from exc
    p = vec_p.reshape(n, n).T
    cond = np.linalg.cond(op)
    if not np.all(np.isfinite(p)) or cond > 1e15:
        eig = np.linalg.eigvals(g)
        raise np.linalg.LinAlgError(
            f"Lyapunov system is numerically singular (cond {cond:.3g}); "
            f"max Re(eig(G)) = {eig.real.max():.3g}")
    return symmetrize(p * np.outer(d, d))
