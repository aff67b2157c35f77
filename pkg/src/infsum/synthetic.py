"""Small synthetic datasets for demos and checks."""

import numpy as np

from .data import SparseDataset, SparseVector


def make_classification(n, d, nnz, seed=0, pos_fraction=0.5, label_noise=0.1, scale=1.0,
                        nonnegative=False):
    """Sparse binary classification data from a random linear model.

    Each row has ``nnz`` nonzeros at random coordinates with values in
    ``[-1, 1]`` (``[0, 1]`` if ``nonnegative``), rescaled so that
    ``||x|| = scale``. Labels follow the sign of a random direction (offset to
    hit ``pos_fraction``) and are flipped with probability ``label_noise``,
    which keeps the problem non-separable.
    """
    rng = np.random.default_rng(seed)
    w = rng.standard_normal(d)
    rows = []
    margins = np.empty(n)
    for i in range(n):
        idx = np.sort(rng.choice(d, size=nnz, replace=False))
        vals = rng.uniform(0.0 if nonnegative else -1.0, 1.0, size=nnz)
        vals *= scale / np.linalg.norm(vals)
        rows.append(SparseVector(idx, vals))
        margins[i] = vals @ w[idx]
    thresh = np.quantile(margins, 1.0 - pos_fraction)
    labels = np.where(margins > thresh, 1.0, -1.0)
    flip = rng.random(n) < label_noise
    labels[flip] *= -1.0
    return SparseDataset.from_rows(rows, labels, d)


def make_separable(n_pos, n_neg, d, nnz, seed=0, margin=0.5):
    """Two classes separated along coordinate 0 by at least ``2 * margin``.

    Coordinate 0 is always present; the remaining ``nnz - 1`` nonzeros are
    random clutter.
    """
    rng = np.random.default_rng(seed)
    rows, labels = [], []
    for y, count in ((1.0, n_pos), (-1.0, n_neg)):
        for _ in range(count):
            idx = np.concatenate(([0], np.sort(rng.choice(np.arange(1, d), nnz - 1, replace=False))))
            vals = rng.uniform(-1.0, 1.0, size=nnz)
            vals[0] = y * (margin + rng.uniform(0.0, 1.0))
            rows.append(SparseVector(idx, vals))
            labels.append(y)
    return SparseDataset.from_rows(rows, labels, d)
