"""Problem definitions that feed samples to the optimizers.

Two tasks are provided: noisy empirical risk minimization over single rows,
and pairwise AUC maximization with the squared hinge on differences of a
positive and a negative row.
"""

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.stats import rankdata

from .data import SparseDataset, SparseVector, TaskConfigError, axpy_sparse, class_means, sparse_sub
from .losses import LossKind, RegSpec, loss_value_array
from .noise import NONE, NoiseSpec, RngStream, expected_sample, perturb


class Sample(NamedTuple):
    index: object
    x_hat: SparseVector
    label: float
    x_bar: SparseVector


@dataclass(frozen=True)
class EvalSpec:
    k_perturbations: int = 5
    eval_seed: int = 0
    max_pairs: int = 100_000

    def __post_init__(self):
        if self.k_perturbations < 1:
            raise ValueError("k_perturbations must be >= 1")
        if self.max_pairs < 1:
            raise ValueError("max_pairs must be >= 1")


@dataclass(frozen=True)
class ErmTask:
    dataset: SparseDataset
    loss: LossKind = LossKind.LOGISTIC
    reg: RegSpec = field(default_factory=RegSpec)
    noise: NoiseSpec = NONE

    def __post_init__(self):
        object.__setattr__(self, "loss", LossKind.parse(self.loss))
        if self.loss is LossKind.LOGISTIC and not np.all(np.abs(self.dataset.labels) == 1.0):
            raise TaskConfigError("logistic loss needs labels in {-1, +1}")

    @property
    def n(self):
        return self.dataset.n

    def epoch_length(self):
        return self.dataset.n

    def draw(self, rng):
        return draw_erm_sample(self, rng)


@dataclass(frozen=True)
class AucTask:
    dataset: SparseDataset
    reg: RegSpec = field(default_factory=RegSpec)
    noise: NoiseSpec = NONE
    x_tilde: np.ndarray = field(init=False, repr=False)

    loss = LossKind.SQUARED_HINGE

    def __post_init__(self):
        mu_pos, mu_neg = class_means(self.dataset)
        object.__setattr__(self, "x_tilde", mu_pos - mu_neg)

    @property
    def n_pos(self):
        return self.dataset.pos_ids.size

    @property
    def n_neg(self):
        return self.dataset.neg_ids.size

    @property
    def n(self):
        """Virtual sample count (number of positive/negative pairs)."""
        return self.n_pos * self.n_neg

    def epoch_length(self):
        return max(self.n_pos, self.n_neg)

    def draw(self, rng):
        return draw_auc_sample(self, rng)


def draw_erm_sample(task, rng):
    ds = task.dataset
    i = int(rng.integers(ds.n))
    x = ds.row(i)
    return Sample(i, perturb(x, task.noise, rng), ds.labels[i], expected_sample(x, task.noise))


def draw_auc_sample(task, rng):
    """Draw a (positive, negative) pair and return the perturbed difference."""
    ds = task.dataset
    i = int(ds.pos_ids[rng.integers(ds.pos_ids.size)])
    j = int(ds.neg_ids[rng.integers(ds.neg_ids.size)])
    zi, zj = ds.row(i), ds.row(j)
    x_hat = sparse_sub(perturb(zi, task.noise, rng), perturb(zj, task.noise, rng))
    x_bar = sparse_sub(expected_sample(zi, task.noise), expected_sample(zj, task.noise))
    return Sample((i, j), x_hat, 1.0, x_bar)


def ssag_xtilde(task):
    """Mean expected sample over the task's (virtual) sample set."""
    if isinstance(task, AucTask):
        return task.x_tilde.copy()
    ds = task.dataset
    out = np.zeros(ds.dim)
    for i in range(ds.n):
        axpy_sparse(1.0, expected_sample(ds.row(i), task.noise), out)
    return out / ds.n


def _margins(rows, theta, noise, rng):
    out = np.empty(len(rows))
    for k, x in enumerate(rows):
        xh = perturb(x, noise, rng)
        out[k] = xh.values @ theta[xh.indices]
    return out


def estimate_objective(task, theta, spec=EvalSpec()):
    """Monte-Carlo estimate of the regularized objective at ``theta``.

    Uses ``spec.k_perturbations`` draws per sample from a stream re-created
    from ``spec.eval_seed`` on every call, so successive evaluations share
    their noise.
    """
    theta = np.asarray(theta, dtype=np.float64)
    ds = task.dataset
    rng = RngStream(spec.eval_seed, 0xE7A1)
    k = 1 if task.noise.kind == "none" else spec.k_perturbations
    if isinstance(task, AucTask):
        n_pairs = task.n_pos * task.n_neg
        if n_pairs <= spec.max_pairs:
            pi, pj = np.meshgrid(ds.pos_ids, ds.neg_ids, indexing="ij")
            pi, pj = pi.ravel(), pj.ravel()
        else:
            pi = ds.pos_ids[rng.integers(task.n_pos, size=spec.max_pairs)]
            pj = ds.neg_ids[rng.integers(task.n_neg, size=spec.max_pairs)]
        rows = [ds.row(i) for i in range(ds.n)]
        total = 0.0
        for _ in range(k):
            # one draw per row; the two ends of a pair are distinct rows, hence independent
            s = _margins(rows, theta, task.noise, rng)
            total += loss_value_array(LossKind.SQUARED_HINGE, s[pi] - s[pj], 1.0).mean()
        data_term = total / k
    else:
        rows = [ds.row(i) for i in range(ds.n)]
        total = 0.0
        for _ in range(k):
            u = _margins(rows, theta, task.noise, rng)
            total += loss_value_array(task.loss, u, ds.labels).mean()
        data_term = total / k
    return data_term + task.reg.value(theta)


def auc_metric(scores, labels):
    """Rank-based AUC with ties counted one half."""
    scores = np.asarray(scores, dtype=np.float64)
    pos = np.asarray(labels) > 0
    n_pos = int(pos.sum())
    n_neg = pos.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both classes present")
    ranks = rankdata(scores)
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def scores(ds, theta):
    """Noise-free linear scores ``x_i^T theta`` for every row."""
    out = np.empty(ds.n)
    for i in range(ds.n):
        r = ds.row(i)
        out[i] = r.values @ theta[r.indices]
    return out
