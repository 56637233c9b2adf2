"""Stationary covariance functions and their state-space form.

Every kernel can be evaluated in closed form, ``k(tau)``, and compiled into a
linear time-invariant SDE

    dx/dt = G x + L w,   f(t) = H x(t),   E[w w^T] = q delta,

whose stationary covariance ``Pinf`` reproduces (exactly for Matern, to a
chosen order for RBF/periodic) the kernel through
``k(tau) = H expm(G tau) Pinf H^T``.

Kernels are immutable. Hyperparameters are exposed as a flat vector of log
values (``theta``) so optimizers work in an unconstrained space.
"""
import ast
import math
from dataclasses import dataclass, field, fields, replace

import numpy as np
from scipy.linalg import block_diag
from scipy.special import ive

from .matcore import NumericalError, as_matrix, solve_lyapunov

__all__ = [
    "ContinuousSsm",
    "Kernel",
    "Matern12",
    "Matern32",
    "Matern52",
    "Periodic",
    "Product",
    "RBF",
    "Sum",
    "evaluate",
    "parse_kernel",
    "to_state_space",
]


@dataclass(frozen=True)
class ContinuousSsm:
    """Continuous-time LTI model ``(G, L, H, q, Pinf)``; ``H`` is a 1-D row."""

    G: np.ndarray
    L: np.ndarray
    H: np.ndarray
    q: np.ndarray
    Pinf: np.ndarray

    def __post_init__(self):
        for name in ("G", "L", "H", "q", "Pinf"):
            if not np.all(np.isfinite(np.asarray(getattr(self, name), dtype=float))):
                # extreme hyperparameters end up here, so this is a numerical failure
                raise NumericalError(f"state-space model has non-finite entries in {name}")
        g = as_matrix(self.G, "G")
        n = g.shape[0]
        if g.shape != (n, n):
            raise ValueError("G must be square")
        lmat = as_matrix(self.L, "L")
        h = np.asarray(self.H, dtype=float).reshape(-1)
        q = as_matrix(self.q, "q")
        p = as_matrix(self.Pinf, "Pinf")
        if lmat.shape[0] != n or h.shape != (n,) or p.shape != (n, n):
            raise ValueError("inconsistent state dimension")
        if q.shape != (lmat.shape[1], lmat.shape[1]):
            raise ValueError("q must be n_w x n_w with n_w = L.shape[1]")
        for name, val in (("G", g), ("L", lmat), ("H", h), ("q", q), ("Pinf", p)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def n_x(self):
        return self.G.shape[0]

    def lyapunov_residual(self):
        g, p = self.G, self.Pinf
        return np.abs(g @ p + p @ g.T + self.L @ self.q @ self.L.T).max()

    def covariance(self, tau):
        """``H expm(G |tau|) Pinf H^T`` for each lag in ``tau``."""
        from .matcore import expm

        tau = np.abs(np.atleast_1d(np.asarray(tau, dtype=float)))
        phi = expm(tau[:, None, None] * self.G)
        return np.einsum("i,kij,jl,l->k", self.H, phi, self.Pinf, self.H)


class Kernel:
    """Base class; subclasses are frozen dataclasses."""

    #: names of the positive hyperparameters in ``theta`` order
    param_names = ()

    def __call__(self, tau):
        return evaluate(self, tau)

    def __add__(self, other):
        if not isinstance(other, Kernel):
            return NotImplemented
        return Sum(self, other)

    def __mul__(self, other):
        if not isinstance(other, Kernel):
            return NotImplemented
        return Product(self, other)

    @property
    def theta(self):
        return np.log([getattr(self, name) for name in self.param_names])

    def with_theta(self, theta):
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (len(self.param_names),):
            raise ValueError(f"expected {len(self.param_names)} log-hyperparameters")
        return replace(self, **dict(zip(self.param_names, np.exp(theta).tolist())))

    @property
    def hyperparameters(self):
        return {name: float(getattr(self, name)) for name in self.param_names}

    @property
    def n_x(self):
        raise NotImplementedError

    def state_space(self):
        raise NotImplementedError

    def to_spec(self):
        args = [f"{name}={getattr(self, name)!r}" for name in self.param_names]
        if hasattr(self, "order"):
            args.append(f"order={self.order}")
        return f"{self._spec_name}({', '.join(args)})"

    def __str__(self):
        return self.to_spec()


def _check_positive(kernel):
    for name in kernel.param_names:
        val = getattr(kernel, name)
        if not (np.isfinite(val) and val > 0):
            raise ValueError(f"{type(kernel).__name__}.{name} must be positive and finite, got {val}")


@dataclass(frozen=True)
class _Matern(Kernel):
    variance: float = 1.0
    lengthscale: float = 1.0

    param_names = ("variance", "lengthscale")

    def __post_init__(self):
        _check_positive(self)

    @property
    def lam(self):
        return math.sqrt(2 * self.nu) / self.lengthscale


@dataclass(frozen=True)
class Matern12(_Matern):
    nu = 0.5
    _spec_name = "matern12"

    @property
    def n_x(self):
        return 1

    def _eval(self, r):
        return self.variance * np.exp(-r / self.lengthscale)

    def state_space(self):
        lam = self.lam
        return ContinuousSsm(
            G=[[-lam]], L=[[1.0]], H=[1.0],
            q=[[2.0 * self.variance * lam]], Pinf=[[self.variance]])


@dataclass(frozen=True)
class Matern32(_Matern):
    nu = 1.5
    _spec_name = "matern32"

    @property
    def n_x(self):
        return 2

    def _eval(self, r):
        x = self.lam * r
        return self.variance * (1.0 + x) * np.exp(-x)

    def state_space(self):
        lam, var = self.lam, self.variance
        return ContinuousSsm(
            G=[[0.0, 1.0], [-lam ** 2, -2.0 * lam]],
            L=[[0.0], [1.0]], H=[1.0, 0.0],
            q=[[4.0 * var * lam ** 3]],
            Pinf=[[var, 0.0], [0.0, var * lam ** 2]])


@dataclass(frozen=True)
class Matern52(_Matern):
    nu = 2.5
    _spec_name = "matern52"

    @property
    def n_x(self):
        return 3

    def _eval(self, r):
        x = self.lam * r
        return self.variance * (1.0 + x + x * x / 3.0) * np.exp(-x)

    def state_space(self):
        lam, var = self.lam, self.variance
        kappa = var * lam ** 2 / 3.0
        return ContinuousSsm(
            G=[[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [-lam ** 3, -3.0 * lam ** 2, -3.0 * lam]],
            L=[[0.0], [0.0], [1.0]], H=[1.0, 0.0, 0.0],
            q=[[16.0 / 3.0 * var * lam ** 5]],
            Pinf=[[var, 0.0, -kappa], [0.0, kappa, 0.0], [-kappa, 0.0, var * lam ** 4]])


def rbf_companion(lengthscale, order):
    """Monic denominator coefficients ``a_0..a_{order-1}`` and the constant
    ``c`` such that ``S(w) ~= c / |a(iw)|^2`` approximates ``sqrt(2 pi) l exp(-l^2 w^2 / 2)``.

    The reciprocal spectral density is Taylor-expanded in ``w^2`` and factored;
    the left-half-plane roots form the stable denominator.
    """
    # in u = l * s:  1/S  ~  sum_n (-1)^n u^(2n) / (2^n n!)
    coeffs = np.zeros(2 * order + 1)
    for n in range(order + 1):
        coeffs[2 * n] = (-1) ** n / (2.0 ** n * math.factorial(n))
    roots = np.roots(coeffs[::-1])
    stable = roots[roots.real < 0]
    if stable.size != order:
        raise ValueError(f"spectral factorization failed for order {order}")
    poly = np.real(np.poly(stable / lengthscale))  # monic, highest power first
    a = poly[1:][::-1]
    lead = 1.0 / (2.0 ** order * math.factorial(order))  # leading |coeff| in u
    c = math.sqrt(2.0 * math.pi) * lengthscale / (lead * lengthscale ** (2 * order))
    return a, c


@dataclass(frozen=True)
class RBF(Kernel):
    """Squared exponential kernel; the SDE is a Taylor approximation of ``order``."""

    variance: float = 1.0
    lengthscale: float = 1.0
    order: int = 6

    param_names = ("variance", "lengthscale")
    _spec_name = "rbf"

    def __post_init__(self):
        _check_positive(self)
        if int(self.order) != self.order or self.order < 1:
            raise ValueError(f"RBF order must be a positive integer, got {self.order}")

    @property
    def n_x(self):
        return int(self.order)

    def _eval(self, r):
        return self.variance * np.exp(-0.5 * (r / self.lengthscale) ** 2)

    def state_space(self):
        n = int(self.order)
        a, c = rbf_companion(self.lengthscale, n)
        g = np.zeros((n, n))
        g[:-1, 1:] = np.eye(n - 1)
        g[-1, :] = -a
        lmat = np.zeros((n, 1))
        lmat[-1, 0] = 1.0
        h = np.zeros(n)
        h[0] = 1.0
        q = np.array([[self.variance * c]])
        return ContinuousSsm(G=g, L=lmat, H=h, q=q, Pinf=solve_lyapunov(g, lmat @ q @ lmat.T))


@dataclass(frozen=True)
class Periodic(Kernel):
    """``variance * exp(-2 sin^2(pi tau / period) / lengthscale^2)``.

    The SDE is a bank of undamped resonators at harmonics ``0..order`` of the
    base frequency, weighted by modified Bessel coefficients.
    """

    variance: float = 1.0
    lengthscale: float = 1.0
    period: float = 1.0
    order: int = 6

    param_names = ("variance", "lengthscale", "period")
    _spec_name = "periodic"

    def __post_init__(self):
        _check_positive(self)
        if int(self.order) != self.order or self.order < 1:
            raise ValueError(f"periodic order must be a positive integer, got {self.order}")

    @property
    def n_x(self):
        return 2 * (int(self.order) + 1)

    def _eval(self, r):
        s = np.sin(np.pi * r / self.period)
        return self.variance * np.exp(-2.0 * s * s / self.lengthscale ** 2)

    def harmonic_weights(self):
        j = np.arange(int(self.order) + 1)
        x = self.lengthscale ** -2
        w = 2.0 * ive(j, x)  # I_j(x) exp(-x)
        w[0] *= 0.5
        return self.variance * w

    def state_space(self):
        w0 = 2.0 * np.pi / self.period
        weights = self.harmonic_weights()
        gs = [np.array([[0.0, -j * w0], [j * w0, 0.0]]) for j in range(len(weights))]
        n = self.n_x
        h = np.zeros(n)
        h[::2] = 1.0
        return ContinuousSsm(
            G=block_diag(*gs), L=np.eye(n), H=h, q=np.zeros((n, n)),
            Pinf=np.kron(np.diag(weights), np.eye(2)))


@dataclass(frozen=True)
class Sum(Kernel):
    left: Kernel
    right: Kernel

    def __post_init__(self):
        if not (isinstance(self.left, Kernel) and isinstance(self.right, Kernel)):
            raise TypeError("Sum components must be kernels")

    @property
    def param_names(self):
        return tuple(f"left.{p}" for p in self.left.param_names) + tuple(
            f"right.{p}" for p in self.right.param_names)

    @property
    def theta(self):
        return np.concatenate([self.left.theta, self.right.theta])

    def with_theta(self, theta):
        theta = np.asarray(theta, dtype=float)
        k = len(self.left.param_names)
        if theta.shape != (len(self.param_names),):
            raise ValueError(f"expected {len(self.param_names)} log-hyperparameters")
        return replace(self, left=self.left.with_theta(theta[:k]), right=self.right.with_theta(theta[k:]))

    @property
    def hyperparameters(self):
        out = {f"left.{k}": v for k, v in self.left.hyperparameters.items()}
        out.update({f"right.{k}": v for k, v in self.right.hyperparameters.items()})
        return out

    @property
    def n_x(self):
        return self.left.n_x + self.right.n_x

    def _eval(self, r):
        return self.left._eval(r) + self.right._eval(r)

    def state_space(self):
        a, b = self.left.state_space(), self.right.state_space()
        return ContinuousSsm(
            G=block_diag(a.G, b.G), L=block_diag(a.L, b.L),
            H=np.concatenate([a.H, b.H]), q=block_diag(a.q, b.q),
            Pinf=block_diag(a.Pinf, b.Pinf))

    def to_spec(self):
        return f"{self.left.to_spec()} + {self.right.to_spec()}"


@dataclass(frozen=True)
class Product(Sum):
    """Quasi-periodic product ``Periodic * Matern`` (either operand order)."""

    def __post_init__(self):
        kinds = {type(self.left), type(self.right)}
        periodic = [k for k in (self.left, self.right) if isinstance(k, Periodic)]
        matern = [k for k in (self.left, self.right) if isinstance(k, _Matern)]
        if len(periodic) != 1 or len(matern) != 1:
            names = sorted(k.__name__ for k in kinds)
            raise ValueError(f"only Periodic * Matern products are supported, got {' * '.join(names)}")

    @property
    def n_x(self):
        return self.left.n_x * self.right.n_x

    def _eval(self, r):
        return self.left._eval(r) * self.right._eval(r)

    def state_space(self):
        if isinstance(self.left, Periodic):
            per, mat = self.left.state_space(), self.right.state_space()
        else:
            per, mat = self.right.state_space(), self.left.state_space()
        ip, im = np.eye(per.n_x), np.eye(mat.n_x)
        # state = x_per kron x_mat; the resonator part is norm-preserving, so
        # Pinf factorizes and the driving noise is Pinf_per kron q_mat
        return ContinuousSsm(
            G=np.kron(per.G, im) + np.kron(ip, mat.G),
            L=np.kron(ip, mat.L), H=np.kron(per.H, mat.H),
            q=np.kron(per.Pinf, mat.q), Pinf=np.kron(per.Pinf, mat.Pinf))

    def to_spec(self):
        def wrap(k):
            return f"({k.to_spec()})" if isinstance(k, Sum) and not isinstance(k, Product) else k.to_spec()
        return f"{wrap(self.left)} * {wrap(self.right)}"


def evaluate(kernel, tau):
    """Closed-form covariance ``k(tau)``; accepts scalars or arrays."""
    r = np.abs(np.asarray(tau, dtype=float))
    out = kernel._eval(r)
    return float(out) if np.ndim(out) == 0 else out


def to_state_space(kernel):
    """Compile ``kernel`` into a :class:`ContinuousSsm`."""
    return kernel.state_space()


_CONSTRUCTORS = {
    "matern12": Matern12,
    "exponential": Matern12,
    "matern32": Matern32,
    "matern52": Matern52,
    "rbf": RBF,
    "se": RBF,
    "periodic": Periodic,
}


def parse_kernel(spec, default_order=None):
    """Build a kernel from an expression such as
    ``"periodic(order=2, period=1.0) * matern32(lengthscale=5) + matern32()"``.

    ``default_order`` applies to ``rbf``/``periodic`` terms that do not set
    ``order`` themselves.
    """
    try:
        tree = ast.parse(spec.strip(), mode="eval")
    except SyntaxError as exc:
        raise ValueError(f"cannot parse kernel spec {spec!r}: {exc.msg}") from None

    def build(node):
        if isinstance(node, ast.BinOp) and isinstance(node.op, (ast.Add, ast.Mult)):
            left, right = build(node.left), build(node.right)
            return Sum(left, right) if isinstance(node.op, ast.Add) else Product(left, right)
        if isinstance(node, ast.Name):
            node = ast.Call(func=node, args=[], keywords=[])
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name):
            name = node.func.id.lower()
            if name not in _CONSTRUCTORS:
                raise ValueError(f"unknown kernel {node.func.id!r}")
            if node.args:
                raise ValueError(f"{name}: use keyword arguments")
            cls = _CONSTRUCTORS[name]
            allowed = {f.name for f in fields(cls)}
            kwargs = {}
            for kw in node.keywords:
                if kw.arg not in allowed:
                    raise ValueError(f"{name}: unknown argument {kw.arg!r}")
                try:
                    val = ast.literal_eval(kw.value)
                except ValueError:
                    raise ValueError(f"{name}: {kw.arg} must be a number") from None
                if isinstance(val, bool) or not isinstance(val, (int, float)):
                    raise ValueError(f"{name}: {kw.arg} must be a number")
                kwargs[kw.arg] = int(val) if kw.arg == "order" else float(val)
            if "order" in allowed and "order" not in kwargs and default_order is not None:
                kwargs["order"] = int(default_order)
            return cls(**kwargs)
        raise ValueError(f"unsupported kernel expression: {ast.unparse(node)}")

    return build(tree.body)
