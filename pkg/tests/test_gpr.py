import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pssgp.gpr import (
    Dataset, log_marginal_likelihood, merge_grids, naive_gp, optimize_hyperparameters, predict,
)
from pssgp.kernels import Matern12, Matern32, Matern52, Periodic
from pssgp.optim import OptimizerConfig


def direct_posterior(kernel_fn, t, y, r, ts):
    """Plain textbook formulas with explicit inverses; independent of naive_gp."""
    k = kernel_fn(t[:, None] - t[None, :]) + np.diag(r)
    kinv = np.linalg.inv(k)
    ks = kernel_fn(ts[:, None] - t[None, :])
    mean = ks @ kinv @ y
    var = kernel_fn(np.zeros(1))[0] - np.sum(ks @ kinv * ks, axis=1)
    _, logdet = np.linalg.slogdet(k)
    loglik = -0.5 * (y @ kinv @ y + logdet + len(t) * math.log(2 * math.pi))
    return mean, var, loglik


def m52(variance, ell):
    def k(tau):
        a = math.sqrt(5) * np.abs(tau) / ell
        return variance * (1 + a + a * a / 3) * np.exp(-a)
    return k


def sample_data(rng, n, m=0, noise=0.1):
    t = np.sort(rng.uniform(0, 4, n))
    y = np.sin(2 * np.pi * t) + noise * rng.standard_normal(n)
    t_test = np.sort(rng.uniform(-0.5, 4.5, m)) if m else None
    return Dataset(t, y, noise ** 2, t_test)


class TestMergeGrids:
    def test_interleave(self):
        g = merge_grids([1.0, 3.0], [2.0])
        np.testing.assert_array_equal(g.times, [1, 2, 3])
        np.testing.assert_array_equal(g.observed, [True, False, True])
        np.testing.assert_array_equal(g.train_index, [0, 2])
        np.testing.assert_array_equal(g.test_index, [1])

    def test_test_subset_of_train(self):
        g = merge_grids([0.0, 1.0, 2.0], [0.0, 2.0])
        np.testing.assert_array_equal(g.times, [0, 1, 2])
        assert g.observed.all()
        np.testing.assert_array_equal(g.test_index, [0, 2])

    def test_train_ties_kept(self):
        g = merge_grids([1.0, 1.0, 2.0], [1.0])
        np.testing.assert_array_equal(g.times, [1, 1, 2])
        np.testing.assert_array_equal(g.train_index, [0, 1, 2])
        assert g.times[g.test_index[0]] == 1.0

    def test_unsorted_rejected(self):
        with pytest.raises(ValueError):
            merge_grids([2.0, 1.0], [0.5])

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.integers(0, 30), min_size=1, max_size=25), st.lists(st.integers(0, 30), max_size=25))
    def test_sort_oracle(self, train, test):
        train = np.sort(np.array(train, float))
        test = np.sort(np.array(test, float))
        g = merge_grids(train, test)
        extra = np.setdiff1d(test, train)
        np.testing.assert_array_equal(g.times, np.sort(np.concatenate([train, extra])))
        np.testing.assert_array_equal(g.times[g.train_index], train)
        np.testing.assert_array_equal(g.times[g.test_index], test)
        assert g.observed.sum() == train.size
        assert np.all(np.diff(g.train_index) > 0)


class TestDataset:
    def test_sorted_stably(self):
        d = Dataset([2.0, 1.0, 1.0], [0.0, 1.0, 2.0], 0.1)
        np.testing.assert_array_equal(d.t, [1, 1, 2])
        np.testing.assert_array_equal(d.y, [1, 2, 0])

    @pytest.mark.parametrize("bad", [dict(t=[0.0, np.nan], y=[0.0, 0.0], r=0.1),
                                     dict(t=[0.0, 1.0], y=[0.0], r=0.1),
                                     dict(t=[0.0, 1.0], y=[0.0, 0.0], r=0.0)])
    def test_invalid(self, bad):
        with pytest.raises(ValueError):
            Dataset(**bad)


class TestNaive:
    def test_single_point_variance(self):
        pred, loglik = naive_gp(Matern32(2.0, 1.0), Dataset([0.0], [0.0], 0.5, [0.0]))
        assert pred.var[0] == pytest.approx(2.0 * 0.5 / 2.5)
        assert loglik == pytest.approx(-0.5 * math.log(2 * math.pi * 2.5))

    def test_no_test_points(self):
        pred, loglik = naive_gp(Matern12(), Dataset([0.0, 1.0], [0.1, 0.2], 0.1))
        assert pred is None and np.isfinite(loglik)

    def test_direct_formula(self, rng):
        t = rng.uniform(0, 3, 5)
        y = rng.standard_normal(5)
        r = rng.uniform(0.05, 0.5, 5)
        ts = rng.uniform(-1, 4, 7)
        pred, loglik = naive_gp(Matern52(1.3, 0.7), Dataset(t, y, r, ts))
        mean, var, ll = direct_posterior(m52(1.3, 0.7), np.sort(t), y[np.argsort(t)], r[np.argsort(t)], ts)
        np.testing.assert_allclose(pred.mean, mean, atol=1e-10)
        np.testing.assert_allclose(pred.var, var, atol=1e-10)
        assert loglik == pytest.approx(ll, abs=1e-10)

    def test_size_guard(self):
        with pytest.raises(ValueError, match="refused"):
            naive_gp(Matern12(), Dataset(np.arange(5000.0), np.zeros(5000), 0.1))


class TestStateSpace:
    def test_single_point_loglik(self):
        ll = log_marginal_likelihood(Matern32(1.0, 1.0), Dataset([0.0], [0.0], 1.0))
        assert ll == pytest.approx(-0.5 * math.log(4 * math.pi))

    @pytest.mark.parametrize("kernel", [Matern12(1.0, 0.3), Matern32(0.5, 0.2), Matern52(2.0, 0.5)])
    @pytest.mark.parametrize("method", ["parallel", "sequential"])
    def test_exact_against_naive(self, rng, kernel, method):
        data = sample_data(rng, 30, 25)
        pred = predict(kernel, data, method=method)
        ref, ll = naive_gp(kernel, data)
        np.testing.assert_allclose(pred.mean, ref.mean, atol=1e-6)
        np.testing.assert_allclose(pred.var, ref.var, atol=1e-6)
        assert log_marginal_likelihood(kernel, data, method=method) == pytest.approx(ll, abs=1e-6)

    def test_matern52_n20_m15(self, rng):
        data = sample_data(rng, 20, 15)
        k = Matern52(1.0, 0.4)
        pred = predict(k, data)
        ref, _ = naive_gp(k, data)
        assert np.abs(pred.mean - ref.mean).max() <= 1e-6
        assert np.abs(pred.var - ref.var).max() <= 1e-6

    def test_far_test_point_reverts_to_prior(self, rng):
        data = sample_data(rng, 40, 0).with_test([100.0, -100.0])
        pred = predict(Matern32(1.7, 0.3), data)
        np.testing.assert_allclose(pred.var, 1.7, atol=1e-3)
        np.testing.assert_allclose(pred.mean, 0.0, atol=1e-3)

    def test_interpolation_limit(self):
        data = Dataset([0.0, 0.5, 1.0], [0.3, -0.4, 1.1], 1e-10, [0.5])
        pred = predict(Matern32(1.0, 1.0), data)
        assert pred.mean[0] == pytest.approx(-0.4, abs=1e-6)
        assert pred.var[0] == pytest.approx(0.0, abs=1e-6)

    def test_ties_match_naive(self):
        t = np.array([0.0, 0.3, 0.3, 0.3, 1.0])
        data = Dataset(t, [0.1, 0.5, 0.7, 0.6, -0.2], [0.1, 0.2, 0.1, 0.3, 0.1], [0.3, 0.6])
        k = Matern52(1.0, 0.5)
        pred = predict(k, data)
        ref, ll = naive_gp(k, data)
        np.testing.assert_allclose(pred.mean, ref.mean, atol=1e-9)
        np.testing.assert_allclose(pred.var, ref.var, atol=1e-9)
        assert log_marginal_likelihood(k, data) == pytest.approx(ll, abs=1e-9)

    def test_test_points_do_not_change_loglik(self, rng):
        data = sample_data(rng, 50)
        k = Periodic(1.0, 1.0, 1.0, 3) * Matern32(1.0, 2.0)
        a = log_marginal_likelihood(k, data)
        b = log_marginal_likelihood(k, data.with_test(np.linspace(0, 5, 40)))
        assert a == b

    def test_unsorted_test_times(self, rng):
        data = sample_data(rng, 30)
        ts = np.array([3.0, 0.2, 1.7, 0.2])
        pred = predict(Matern32(), data.with_test(ts))
        ref = predict(Matern32(), data.with_test(np.sort(ts)))
        np.testing.assert_array_equal(pred.mean[np.argsort(ts, kind="stable")], ref.mean)

    def test_empty_test_set(self, rng):
        pred = predict(Matern32(), sample_data(rng, 10).with_test(np.zeros(0)))
        assert pred.mean.shape == (0,)

    def test_predictive_y_variance(self, rng):
        pred = predict(Matern32(), sample_data(rng, 10, 5), noise_variance=0.25)
        np.testing.assert_allclose(pred.y_var, pred.var + 0.25)

    def test_unknown_method(self, rng):
        with pytest.raises(ValueError):
            log_marginal_likelihood(Matern32(), sample_data(rng, 5), method="magic")


def test_optimize_improves_likelihood(rng):
    data = sample_data(rng, 100)
    k0 = Matern32(1.0, 1.0)
    fit = optimize_hyperparameters(k0, data, OptimizerConfig(max_iter=50))
    assert fit.loglik >= log_marginal_likelihood(k0, data.with_noise(fit.noise_variance)) - 1e-9
    assert fit.loglik > log_marginal_likelihood(k0, data.with_noise(0.1))


@pytest.mark.parametrize("kernel", [Matern52(1.0, 1e-120), Matern32(1e300, 1e-3)])
def test_extreme_hyperparameters_are_infeasible(rng, kernel):
    data = sample_data(rng, 10)
    assert log_marginal_likelihood(kernel, data) == -np.inf
    with pytest.raises(ArithmeticError):
        log_marginal_likelihood(kernel, data, raise_errors=True)
