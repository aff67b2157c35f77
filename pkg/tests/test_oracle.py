import numpy as np
import pytest

from infsum.data import SparseDataset, SparseVector
from infsum.losses import LossKind, RegSpec, loss_deriv
from infsum.noise import NONE, RngStream, dropout, gaussian, perturb
from infsum.oracle import (
    EnumerableProblem,
    EnumerationBudgetError,
    OracleFailure,
    dropout_moment_by_enumeration,
    exact_a_star,
    exact_expectation_over_masks,
    exact_gradient,
    exact_hessian,
    exact_objective,
    high_precision_minimizer,
    mean_sample,
)
from infsum.synthetic import make_classification

LOG = LossKind.LOGISTIC


def small_problem(p=0.3, loss=LOG, lam=1e-2, seed=0):
    ds = make_classification(4, 6, 4, seed=seed)
    return EnumerableProblem(ds, dropout(p), loss, RegSpec(lam))


class TestEnumeration:
    def test_constant_function(self):
        prob = small_problem()
        assert exact_expectation_over_masks(prob, lambda i, x: 1.0) == pytest.approx(1.0, abs=1e-14)

    def test_weights_sum_to_one(self):
        assert small_problem().weights.sum() == pytest.approx(1.0, abs=1e-14)

    def test_mean_sample_equals_mean_row(self):
        prob = small_problem()
        np.testing.assert_allclose(mean_sample(prob), prob.dataset.to_dense().mean(axis=0), atol=1e-14)

    def test_objective_two_paths(self):
        prob = small_problem()
        theta = np.random.default_rng(1).normal(size=6)
        from infsum.losses import loss_value

        loop = exact_expectation_over_masks(
            prob, lambda i, x: loss_value(LOG, x.values @ theta[x.indices], prob.dataset.labels[i]))
        assert exact_objective(prob, theta) == pytest.approx(loop + 0.005 * theta @ theta, rel=1e-13)

    def test_budget(self):
        ds = make_classification(3, 30, 25, seed=0)
        with pytest.raises(EnumerationBudgetError):
            EnumerableProblem(ds, dropout(0.3), LOG, RegSpec(0.1))

    def test_gaussian_not_enumerable(self):
        with pytest.raises(ValueError):
            EnumerableProblem(make_classification(3, 3, 2), gaussian(1.0), LOG, RegSpec(0.1))

    def test_dropout_moments(self):
        x = SparseVector([0, 1, 2], [1.0, 2.0, 3.0])
        mean, sq = dropout_moment_by_enumeration(x, 0.3)
        np.testing.assert_allclose(mean.values, [1, 2, 3], rtol=1e-12)
        assert sq == pytest.approx(14 / 0.7, rel=1e-12)


class TestDerivatives:
    @pytest.mark.parametrize("loss", [LOG, LossKind.SQUARED])
    def test_gradient_by_finite_differences(self, loss):
        prob = small_problem(loss=loss)
        rng = np.random.default_rng(2)
        h = 1e-5
        for _ in range(5):
            theta = rng.normal(size=6)
            g = exact_gradient(prob, theta)
            fd = np.array([(exact_objective(prob, theta + h * e) - exact_objective(prob, theta - h * e)) / (2 * h)
                           for e in np.eye(6)])
            np.testing.assert_allclose(g, fd, rtol=1e-7, atol=1e-9)

    def test_hessian_by_finite_differences(self):
        prob = small_problem()
        theta = np.random.default_rng(3).normal(size=6)
        h = 1e-6
        fd = np.array([(exact_gradient(prob, theta + h * e) - exact_gradient(prob, theta - h * e)) / (2 * h)
                       for e in np.eye(6)])
        np.testing.assert_allclose(exact_hessian(prob, theta), fd, rtol=1e-6, atol=1e-8)

    def test_gradient_by_mask_loop(self):
        prob = small_problem()
        theta = np.random.default_rng(4).normal(size=6)

        def h(i, x):
            out = np.zeros(6)
            out[x.indices] = loss_deriv(LOG, x.values @ theta[x.indices], prob.dataset.labels[i]) * x.values
            return out

        ref = exact_expectation_over_masks(prob, h) + 1e-2 * theta
        np.testing.assert_allclose(exact_gradient(prob, theta), ref, rtol=1e-13, atol=1e-15)


class TestMinimizer:
    def test_ridge_closed_form(self):
        X = np.array([[1.0, 2.0], [3.0, 1.0]])
        y = np.array([1.0, -2.0])
        ds = SparseDataset.from_dense(X, y)
        prob = EnumerableProblem(ds, NONE, LossKind.SQUARED, RegSpec(0.5))
        theta, _ = high_precision_minimizer(prob)
        # loss (u - y)^2 averaged over n = 2 rows: (X^T X + lam I) theta = X^T y
        ref = np.linalg.solve(X.T @ X + 0.5 * np.eye(2), X.T @ y)
        np.testing.assert_allclose(theta, ref, rtol=1e-10)

    def test_ridge_under_dropout(self):
        # E[x_hat x_hat^T] = x x^T + p/(1-p) diag(x^2)
        X = np.array([[1.0, 2.0], [3.0, 1.0], [0.5, -1.0]])
        y = np.array([1.0, -2.0, 0.5])
        p = 0.25
        ds = SparseDataset.from_dense(X, y)
        prob = EnumerableProblem(ds, dropout(p), LossKind.SQUARED, RegSpec(0.1))
        theta, _ = high_precision_minimizer(prob)
        A = 2 * (X.T @ X + p / (1 - p) * np.diag((X**2).sum(axis=0))) / 3 + 0.1 * np.eye(2)
        np.testing.assert_allclose(theta, np.linalg.solve(A, 2 * X.T @ y / 3), rtol=1e-10)

    def test_logistic_gradient_vanishes(self):
        prob = small_problem()
        theta, f = high_precision_minimizer(prob)
        assert np.linalg.norm(exact_gradient(prob, theta)) <= 1e-12
        assert f == exact_objective(prob, theta)

    def test_small_lambda(self):
        ds = make_classification(50, 10, 6, seed=1)
        prob = EnumerableProblem(ds, dropout(0.3), LOG, RegSpec(1e-5))
        theta, f = high_precision_minimizer(prob)
        assert np.linalg.norm(exact_gradient(prob, theta)) <= 1e-12

    def test_requires_strong_convexity(self):
        ds = make_classification(4, 3, 2)
        with pytest.raises(ValueError):
            high_precision_minimizer(EnumerableProblem(ds, NONE, LOG, RegSpec(0.0)))


class TestAStar:
    def test_constant_derivative(self):
        # at theta = 0 the squared loss has phi' = 2 (0 - 3) on every atom
        ds = SparseDataset.from_rows([SparseVector([0], [1.0]), SparseVector([1], [2.0])], [3.0, 3.0], 2)
        prob = EnumerableProblem(ds, dropout(0.5), LossKind.SQUARED, RegSpec(0.1))
        assert exact_a_star(prob, np.zeros(2)) == pytest.approx(-6.0, rel=1e-14)

    def test_all_zero_rows(self):
        ds = SparseDataset.from_rows([SparseVector([], [])], [1.0], 2)
        prob = EnumerableProblem(ds, dropout(0.5), LOG, RegSpec(0.1))
        with pytest.raises(OracleFailure):
            exact_a_star(prob, np.zeros(2))

    def test_monte_carlo(self):
        prob = small_problem()
        theta = np.random.default_rng(5).normal(size=6)
        a_star = exact_a_star(prob, theta)
        rng = RngStream(6)
        ds = prob.dataset
        N = 100_000
        num = np.empty(N)
        den = np.empty(N)
        for k in range(N):
            i = int(rng.integers(ds.n))
            x = perturb(ds.row(i), prob.noise, rng)
            sq = x.values @ x.values
            num[k] = loss_deriv(LOG, x.values @ theta[x.indices], ds.labels[i]) * sq
            den[k] = sq
        # delta method for the ratio of means
        r = num.mean() / den.mean()
        resid = (num - r * den) / den.mean()
        assert abs(r - a_star) <= 4 * resid.std() / np.sqrt(N)
