import itertools

import numpy as np
import pytest

from infsum.data import SparseDataset, SparseVector, TaskConfigError
from infsum.losses import LossKind, RegSpec, loss_value
from infsum.noise import NONE, RngStream, dropout
from infsum.oracle import EnumerableProblem, exact_objective
from infsum.synthetic import make_classification, make_separable
from infsum.tasks import AucTask, ErmTask, EvalSpec, auc_metric, estimate_objective, scores, ssag_xtilde


def brute_auc(s, y):
    pos = [a for a, b in zip(s, y) if b > 0]
    neg = [a for a, b in zip(s, y) if b <= 0]
    total = 0.0
    for a in pos:
        for b in neg:
            total += 1.0 if a > b else 0.5 if a == b else 0.0
    return total / (len(pos) * len(neg))


class TestErm:
    def test_epoch_length(self):
        ds = make_classification(7, 3, 2)
        assert ErmTask(ds).epoch_length() == 7

    def test_logistic_needs_pm_one(self):
        ds = SparseDataset.from_rows([SparseVector([0], [1.0])], [0.5], 1)
        with pytest.raises(TaskConfigError):
            ErmTask(ds, LossKind.LOGISTIC)
        ErmTask(ds, LossKind.SQUARED)

    def test_index_frequencies_uniform(self):
        ds = make_classification(5, 3, 2)
        task = ErmTask(ds, noise=dropout(0.3))
        rng = RngStream(9)
        N = 50_000
        counts = np.bincount([task.draw(rng).index for _ in range(N)], minlength=5)
        # chi-square with 4 dof; 18.47 is the 0.999 quantile
        chi2 = ((counts - N / 5) ** 2 / (N / 5)).sum()
        assert chi2 < 18.47

    def test_sample_fields(self):
        ds = make_classification(5, 3, 2)
        s = ErmTask(ds, noise=dropout(0.5)).draw(RngStream(0))
        assert s.x_bar == ds.row(s.index)
        assert s.label == ds.labels[s.index]

    def test_xtilde_is_mean_row(self):
        ds = make_classification(6, 4, 2, seed=3)
        np.testing.assert_allclose(ssag_xtilde(ErmTask(ds, noise=dropout(0.2))), ds.to_dense().mean(axis=0))


class TestAuc:
    def toy(self):
        rows = [SparseVector([0], [1.0]), SparseVector([1], [2.0]), SparseVector([0, 2], [1.0, 3.0])]
        return SparseDataset.from_rows(rows, [1.0, 1.0, -1.0], 3)

    def test_counts(self):
        task = AucTask(self.toy())
        assert (task.n_pos, task.n_neg, task.n) == (2, 1, 2)
        assert task.epoch_length() == 2

    def test_pair_difference_without_noise(self):
        task = AucTask(self.toy())
        s = task.draw(RngStream(0))
        i, j = s.index
        ref = task.dataset.row(i).to_dense(3) - task.dataset.row(j).to_dense(3)
        np.testing.assert_array_equal(s.x_hat.to_dense(3), ref)
        assert s.label == 1.0

    def test_exact_cancellation_dropped(self):
        rows = [SparseVector([0, 1], [1.0, 2.0]), SparseVector([0], [1.0])]
        task = AucTask(SparseDataset.from_rows(rows, [1.0, -1.0], 2))
        s = task.draw(RngStream(0))
        assert s.x_hat == SparseVector([1], [2.0])

    def test_xtilde_equals_pair_mean(self):
        ds = make_classification(9, 4, 3, seed=5)
        task = AucTask(ds)
        X = ds.to_dense()
        pairs = [X[i] - X[j] for i, j in itertools.product(ds.pos_ids, ds.neg_ids)]
        np.testing.assert_allclose(ssag_xtilde(task), np.mean(pairs, axis=0), rtol=1e-12, atol=1e-15)

    def test_single_class_rejected(self):
        ds = SparseDataset.from_rows([SparseVector([0], [1.0])], [1.0], 1)
        with pytest.raises(TaskConfigError):
            AucTask(ds)

    def test_noise_free_objective_is_pair_average(self):
        ds = make_separable(3, 4, 4, 2, seed=1)
        task = AucTask(ds, RegSpec(0.1))
        theta = np.array([0.3, -0.2, 0.5, 0.1])
        X = ds.to_dense()
        ref = np.mean([loss_value(LossKind.SQUARED_HINGE, (X[i] - X[j]) @ theta, 1.0)
                       for i in ds.pos_ids for j in ds.neg_ids])
        ref += 0.05 * theta @ theta
        assert estimate_objective(task, theta) == pytest.approx(ref, rel=1e-12)


class TestEstimateObjective:
    def test_noise_free_is_exact(self):
        ds = make_classification(8, 5, 3, seed=2)
        task = ErmTask(ds, reg=RegSpec(0.1))
        theta = np.linspace(-1, 1, 5)
        prob = EnumerableProblem(ds, NONE, task.loss, task.reg)
        assert estimate_objective(task, theta) == pytest.approx(exact_objective(prob, theta), rel=1e-13)

    def test_matches_enumeration_within_standard_errors(self):
        ds = make_classification(6, 5, 3, seed=4)
        task = ErmTask(ds, reg=RegSpec(0.01), noise=dropout(0.4))
        theta = np.array([1.0, -2.0, 0.5, 0.0, 1.5])
        exact = exact_objective(EnumerableProblem(ds, task.noise, task.loss, task.reg), theta)
        # per-repeat estimates are independent, so their spread gives the standard error
        vals = [estimate_objective(task, theta, EvalSpec(1, eval_seed=s)) for s in range(2000)]
        se = np.std(vals) / np.sqrt(len(vals))
        assert abs(np.mean(vals) - exact) <= 4 * se
        pooled = estimate_objective(task, theta, EvalSpec(10_000))
        assert abs(pooled - exact) <= 4 * np.std(vals) / np.sqrt(10_000)

    def test_reproducible(self):
        ds = make_classification(6, 5, 3)
        task = ErmTask(ds, noise=dropout(0.3))
        theta = np.ones(5)
        assert estimate_objective(task, theta) == estimate_objective(task, theta)

    def test_pair_subsampling(self):
        ds = make_separable(20, 20, 4, 2)
        task = AucTask(ds, noise=dropout(0.2))
        full = estimate_objective(task, np.ones(4), EvalSpec(5))
        sub = estimate_objective(task, np.ones(4), EvalSpec(5, max_pairs=300))
        assert np.isfinite(sub) and abs(sub - full) < 0.5 * full + 0.1


class TestAucMetric:
    def test_trivial(self):
        assert auc_metric([0.9, 0.1], [1, -1]) == 1.0
        assert auc_metric([0.5, 0.5], [1, -1]) == 0.5
        assert auc_metric([0.1, 0.9], [1, 0]) == 0.0

    def test_against_brute_force(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            m = int(rng.integers(2, 51))
            y = rng.choice([-1.0, 1.0], size=m)
            y[0], y[1] = 1.0, -1.0
            # few distinct values forces plenty of ties
            s = rng.integers(0, 6, size=m).astype(float) if rng.random() < 0.5 else rng.normal(size=m)
            assert auc_metric(s, y) == brute_auc(s, y)

    def test_single_class(self):
        with pytest.raises(ValueError):
            auc_metric([1.0, 2.0], [1, 1])

    def test_scores(self):
        ds = make_classification(5, 4, 2, seed=8)
        theta = np.arange(4.0)
        np.testing.assert_allclose(scores(ds, theta), ds.to_dense() @ theta)
