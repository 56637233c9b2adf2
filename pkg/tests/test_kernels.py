import math

import numpy as np
import pytest

from pssgp.kernels import (
    RBF,
    ContinuousSsm,
    Matern12,
    Matern32,
    Matern52,
    Periodic,
    Product,
    Sum,
    evaluate,
    parse_kernel,
    to_state_space,
)

MATERNS = [Matern12, Matern32, Matern52]


def reconstruction_error(kernel, taus):
    return np.abs(to_state_space(kernel).covariance(taus) - evaluate(kernel, taus)).max()


class TestEvaluate:
    def test_c0_is_variance(self):
        assert evaluate(Matern32(1.0, 1.0), 0.0) == 1.0

    def test_exponential_closed_form(self):
        assert evaluate(Matern12(2.0, 0.5), 1.0) == pytest.approx(2 * math.exp(-2.0), rel=1e-15)
        assert evaluate(Matern12(2.0, 0.5), 1.0) == pytest.approx(0.2707, abs=1e-4)

    def test_sum_rule(self):
        a, b = Matern32(1.3, 0.4), Matern52(0.7, 2.0)
        taus = np.linspace(-3, 3, 13)
        np.testing.assert_array_equal(evaluate(a + b, taus), evaluate(a, taus) + evaluate(b, taus))

    @pytest.mark.parametrize("kernel", [Matern12(), Matern32(2, 3), Matern52(), RBF(1, 0.5),
                                        Periodic(1, 1, 2), Periodic() * Matern32()])
    def test_symmetric(self, kernel):
        taus = np.linspace(0, 4, 9)
        np.testing.assert_array_equal(evaluate(kernel, taus), evaluate(kernel, -taus))

    def test_callable(self):
        k = Matern52()
        assert k(0.3) == evaluate(k, 0.3)


class TestStateSpace:
    @pytest.mark.parametrize("var,ell", [(1.0, 1.0), (2.0, 0.5), (0.3, 4.0)])
    def test_matern12_matrices(self, var, ell):
        m = to_state_space(Matern12(var, ell))
        np.testing.assert_allclose(m.G, [[-1 / ell]])
        np.testing.assert_allclose(m.L, [[1.0]])
        np.testing.assert_allclose(m.H, [1.0])
        np.testing.assert_allclose(m.q, [[2 * var / ell]])
        np.testing.assert_allclose(m.Pinf, [[var]])

    def test_matern32_form(self):
        ell = 0.7
        lam = math.sqrt(3) / ell
        m = to_state_space(Matern32(1.0, ell))
        assert m.n_x == 2
        np.testing.assert_allclose(m.H, [1.0, 0.0])
        np.testing.assert_allclose(m.G, [[0, 1], [-lam ** 2, -2 * lam]])

    @pytest.mark.parametrize("cls", MATERNS)
    @pytest.mark.parametrize("var,ell", [(1.0, 1.0), (2.5, 0.2), (0.4, 3.0)])
    def test_matern_reconstruction(self, cls, var, ell):
        k = cls(var, ell)
        taus = np.linspace(0, 5 * ell, 50)
        assert reconstruction_error(k, taus) <= 1e-6 * var

    @pytest.mark.parametrize("cls", MATERNS)
    def test_matern_invariants(self, cls):
        k = cls(1.7, 0.6)
        m = to_state_space(k)
        assert m.lyapunov_residual() <= 1e-8
        assert np.linalg.eigvals(m.G).real.max() < 0
        assert m.H @ m.Pinf @ m.H == pytest.approx(k(0.0), rel=1e-6)
        assert np.linalg.eigvalsh(m.Pinf).min() >= -1e-12

    def test_rbf_dimension(self):
        assert to_state_space(RBF(order=6)).n_x == 6

    def test_rbf_reconstruction_improves_with_order(self):
        taus = np.linspace(0, 5, 50)
        errs = [reconstruction_error(RBF(1.0, 1.0, order), taus) for order in (4, 6, 8)]
        assert errs[0] >= errs[1] >= errs[2]
        assert errs[2] < 1e-3

    def test_rbf_is_stable(self):
        for order in (2, 4, 6, 8, 10):
            m = to_state_space(RBF(1.0, 0.5, order))
            assert np.linalg.eigvals(m.G).real.max() < 0
            assert m.lyapunov_residual() <= 1e-8 * np.abs(m.Pinf).max()

    def test_periodic_reconstruction(self):
        k = Periodic(1.3, 1.0, 0.8, order=6)
        assert k.n_x == 14
        assert reconstruction_error(k, np.linspace(0, 5, 50)) <= 1e-3 * 1.3

    def test_sum(self):
        a, b = Matern32(1.0, 0.5), Matern52(0.5, 2.0)
        m = to_state_space(a + b)
        assert m.n_x == a.n_x + b.n_x
        taus = np.linspace(0, 3, 50)
        ma, mb = to_state_space(a), to_state_space(b)
        assert np.abs(m.covariance(taus) - ma.covariance(taus) - mb.covariance(taus)).max() <= 1e-12

    @pytest.mark.parametrize("order,expected", [(1, 10), (2, 14), (3, 18)])
    def test_quasi_periodic_dimensions(self, order, expected):
        k = Periodic(order=order) * Matern32() + Matern32()
        assert k.n_x == expected
        assert to_state_space(k).n_x == expected

    def test_product_reconstruction(self):
        k = Periodic(1.0, 1.0, 1.0, order=6) * Matern32(1.0, 3.0)
        m = to_state_space(k)
        assert m.lyapunov_residual() <= 1e-10
        assert np.linalg.eigvals(m.G).real.max() < 0
        assert reconstruction_error(k, np.linspace(0, 5, 50)) <= 1e-3

    def test_product_operand_order(self):
        a = to_state_space(Periodic(order=2) * Matern12())
        b = to_state_space(Matern12() * Periodic(order=2))
        np.testing.assert_array_equal(a.G, b.G)

    def test_arbitrary_products_rejected(self):
        with pytest.raises(ValueError, match="Periodic \\* Matern"):
            Matern32() * Matern52()
        with pytest.raises(ValueError):
            RBF() * Periodic()

    @pytest.mark.parametrize("bad", [dict(variance=0.0), dict(lengthscale=-1.0), dict(variance=np.nan)])
    def test_positive_hyperparameters(self, bad):
        with pytest.raises(ValueError):
            Matern32(**bad)

    def test_order_validation(self):
        with pytest.raises(ValueError):
            RBF(order=0)
        with pytest.raises(ValueError):
            Periodic(order=0)

    def test_ssm_validation(self):
        with pytest.raises(ValueError):
            ContinuousSsm(G=np.eye(2), L=np.eye(2), H=[1.0], q=np.eye(2), Pinf=np.eye(2))


class TestHyperparameters:
    def test_theta_roundtrip(self):
        k = Periodic(order=2) * Matern32(2.0, 0.5) + Matern52(0.3, 4.0)
        theta = k.theta
        assert theta.size == len(k.param_names) == 7
        k2 = k.with_theta(theta + 0.1)
        np.testing.assert_allclose(k2.theta, theta + 0.1)
        assert k2.left.left.order == 2

    def test_defaults(self):
        k = Periodic()
        assert (k.variance, k.lengthscale, k.period) == (1.0, 1.0, 1.0)

    def test_immutable(self):
        k = Matern32()
        with pytest.raises(AttributeError):
            k.variance = 3.0
        m = to_state_space(k)
        with pytest.raises(ValueError):
            m.G[0, 0] = 1.0


class TestParse:
    def test_simple(self):
        k = parse_kernel("matern32(variance=1.0, lengthscale=0.5)")
        assert k == Matern32(1.0, 0.5)

    def test_composite(self):
        k = parse_kernel("periodic(order=2, period=1.0) * matern32(lengthscale=5) + matern32()")
        assert isinstance(k, Sum) and isinstance(k.left, Product)
        assert k.left.left == Periodic(order=2)
        assert k.n_x == 14

    def test_default_order(self):
        assert parse_kernel("rbf()", default_order=4).order == 4
        assert parse_kernel("rbf(order=8)", default_order=4).order == 8

    def test_roundtrip(self):
        for k in [Matern12(0.3, 2.0), RBF(2.0, 0.1, 8),
                  Periodic(1.0, 2.0, 3.0, 3) * Matern52(1.0, 4.0) + Matern32(0.5, 0.25)]:
            assert parse_kernel(k.to_spec()) == k

    @pytest.mark.parametrize("bad", ["matern33()", "matern32(1.0)", "matern32(foo=1)", "matern32(variance='a')",
                                     "matern32() - matern12()", "matern32(", "matern32() * matern52()"])
    def test_errors(self, bad):
        with pytest.raises(ValueError):
            parse_kernel(bad)
