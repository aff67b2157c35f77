"""Sparse sample storage, LIBSVM ingestion, and the small linear-algebra kernels
shared by every optimizer.

Indices are 0-based everywhere inside the package; the 1-based LIBSVM
convention only exists at the parse/serialize boundary.
"""

import gzip
import io
import os

import numpy as np


class ParseError(ValueError):
    """Malformed LIBSVM input. Carries the offending 1-based line number."""

    def __init__(self, lineno, message):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class TaskConfigError(ValueError):
    pass


class SparseVector:
    """Sparse vector stored as ascending ``indices`` and matching ``values``."""

    __slots__ = ("indices", "values")

    def __init__(self, indices, values):
        indices = np.asarray(indices, dtype=np.int64).reshape(-1)
        values = np.asarray(values, dtype=np.float64).reshape(-1)
        if indices.shape != values.shape:
            raise ValueError("indices and values must have equal length")
        if indices.size and (indices[0] < 0 or np.any(np.diff(indices) <= 0)):
            raise ValueError("indices must be nonnegative and strictly ascending")
        if np.any(values == 0.0):
            raise ValueError("explicit zeros are not stored")
        if not np.all(np.isfinite(values)):
            raise ValueError("values must be finite")
        self.indices = indices
        self.values = values

    @classmethod
    def _raw(cls, indices, values):
        # trusted constructor for the hot path, no validation
        obj = cls.__new__(cls)
        obj.indices = indices
        obj.values = values
        return obj

    @classmethod
    def from_dense(cls, dense):
        dense = np.asarray(dense, dtype=np.float64)
        idx = np.flatnonzero(dense)
        return cls._raw(idx.astype(np.int64), dense[idx].copy())

    @property
    def nnz(self):
        return self.indices.size

    def sq_norm(self):
        return float(self.values @ self.values)

    def to_dense(self, dim):
        out = np.zeros(dim)
        out[self.indices] = self.values
        return out

    def __len__(self):
        return self.indices.size

    def __eq__(self, other):
        if not isinstance(other, SparseVector):
            return NotImplemented
        return np.array_equal(self.indices, other.indices) and np.array_equal(
            self.values, other.values
        )

    def __repr__(self):
        return f"SparseVector({self.indices.tolist()}, {self.values.tolist()})"


def densify(x, dim):
    return x.to_dense(dim)


def dot(a, b):
    """Inner product of a sparse vector with a dense one."""
    if a.indices.size == 0:
        return 0.0
    if a.indices[-1] >= b.shape[0]:
        raise IndexError(f"sparse index {a.indices[-1]} out of range for dim {b.shape[0]}")
    return float(a.values @ b[a.indices])


def axpy_sparse(alpha, a, b):
    """In place ``b += alpha * a`` touching only the support of ``a``."""
    if a.indices.size == 0 or alpha == 0.0:
        return
    if a.indices[-1] >= b.shape[0]:
        raise IndexError(f"sparse index {a.indices[-1]} out of range for dim {b.shape[0]}")
    # indices are unique, so fancy-index accumulation is safe
    b[a.indices] += alpha * a.values


def sparse_sub(a, b):
    """``a - b`` for two sparse vectors, merged on the union of supports.

    Coordinates that cancel exactly are dropped.
    """
    if b.indices.size == 0:
        return a
    idx = np.concatenate((a.indices, b.indices))
    vals = np.concatenate((a.values, -b.values))
    uniq, inv = np.unique(idx, return_inverse=True)
    out = np.bincount(inv, weights=vals, minlength=uniq.size)
    keep = out != 0.0
    return SparseVector._raw(uniq[keep], out[keep])


class SparseDataset:
    """Immutable row-compressed sample matrix with ±1 labels.

    Parameters
    ----------
    dim : int
        Feature dimension ``d``.
    offsets, indices, values : array_like
        CSR storage; row ``i`` occupies ``offsets[i]:offsets[i+1]``.
    labels : array_like
        Labels in {-1, +1} (or real targets for regression).
    """

    def __init__(self, dim, offsets, indices, values, labels):
        self.dim = int(dim)
        self.offsets = np.asarray(offsets, dtype=np.int64)
        self.indices = np.asarray(indices, dtype=np.int64)
        self.values = np.asarray(values, dtype=np.float64)
        self.labels = np.asarray(labels, dtype=np.float64)
        n = self.offsets.size - 1
        if self.dim < 1:
            raise ValueError("dim must be positive")
        if n < 1:
            raise ValueError("dataset needs at least one row")
        if self.labels.size != n:
            raise ValueError("one label per row required")
        if self.offsets[0] != 0 or self.offsets[-1] != self.indices.size:
            raise ValueError("offsets do not cover the index array")
        if np.any(np.diff(self.offsets) < 0):
            raise ValueError("offsets must be nondecreasing")
        if self.indices.size and (self.indices.min() < 0 or self.indices.max() >= self.dim):
            raise ValueError(f"row contains an index >= dim ({self.dim})")
        for arr in (self.offsets, self.indices, self.values, self.labels):
            arr.setflags(write=False)
        self.pos_ids = np.flatnonzero(self.labels > 0)
        self.neg_ids = np.flatnonzero(self.labels <= 0)
        self._rows = [
            SparseVector(self.indices[s:e], self.values[s:e])
            for s, e in zip(self.offsets[:-1], self.offsets[1:])
        ]

    @classmethod
    def from_rows(cls, rows, labels, dim):
        offsets = np.zeros(len(rows) + 1, dtype=np.int64)
        offsets[1:] = np.cumsum([r.nnz for r in rows])
        if rows:
            indices = np.concatenate([r.indices for r in rows])
            values = np.concatenate([r.values for r in rows])
        else:
            indices, values = np.zeros(0, np.int64), np.zeros(0)
        return cls(dim, offsets, indices, values, labels)

    @classmethod
    def from_dense(cls, X, labels):
        X = np.asarray(X, dtype=np.float64)
        return cls.from_rows([SparseVector.from_dense(r) for r in X], labels, X.shape[1])

    @property
    def n(self):
        return self.offsets.size - 1

    def row(self, i):
        return self._rows[i]

    def to_dense(self):
        X = np.zeros((self.n, self.dim))
        for i, r in enumerate(self._rows):
            X[i, r.indices] = r.values
        return X

    def subset(self, ids):
        return SparseDataset.from_rows([self._rows[i] for i in ids], self.labels[ids], self.dim)


def _map_label(token, lineno):
    try:
        y = float(token)
    except ValueError:
        raise ParseError(lineno, f"bad label {token!r}") from None
    if y == 1.0:
        return 1.0
    if y in (0.0, -1.0):
        return -1.0
    raise ParseError(lineno, f"unknown label value {token!r}")


def parse_libsvm(stream, expected_dim=None):
    """Parse LIBSVM text (``label idx:val ...``) into a :class:`SparseDataset`.

    Labels 0/-1 map to -1 and 1/+1 map to +1. Explicit zeros are dropped;
    duplicate or non-ascending indices are errors.
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    offsets = [0]
    indices, values, labels = [], [], []
    max_idx = -1
    for lineno, line in enumerate(stream, start=1):
        line = line.strip()
        if not line:
            continue
        tokens = line.split()
        labels.append(_map_label(tokens[0], lineno))
        prev = 0
        for tok in tokens[1:]:
            key, sep, val = tok.partition(":")
            if not sep:
                raise ParseError(lineno, f"malformed token {tok!r}")
            try:
                j = int(key)
                v = float(val)
            except ValueError:
                raise ParseError(lineno, f"malformed token {tok!r}") from None
            if j < 1:
                raise ParseError(lineno, f"index {j} is not 1-based")
            if j <= prev:
                what = "duplicate" if j == prev else "non-ascending"
                raise ParseError(lineno, f"{what} index {j}")
            if expected_dim is not None and j > expected_dim:
                raise ParseError(lineno, f"index {j} exceeds dimension {expected_dim}")
            if not np.isfinite(v):
                raise ParseError(lineno, f"non-finite value {val!r}")
            prev = j
            if v != 0.0:
                indices.append(j - 1)
                values.append(v)
        max_idx = max(max_idx, prev - 1)
        offsets.append(len(indices))
    if not labels:
        raise ParseError(0, "no samples")
    dim = expected_dim if expected_dim is not None else max_idx + 1
    return SparseDataset(max(dim, 1), offsets, indices, values, labels)


def load_libsvm(path, expected_dim=None):
    path = os.fspath(path)
    opener = gzip.open if path.endswith(".gz") else open
    with opener(path, "rt") as fh:
        return parse_libsvm(fh, expected_dim)


def serialize_libsvm(ds):
    """Canonical LIBSVM text: labels as ``+1``/``-1``, shortest round-trip floats."""
    lines = []
    for i in range(ds.n):
        r = ds.row(i)
        label = "+1" if ds.labels[i] > 0 else "-1"
        feats = " ".join(f"{j + 1}:{v!r}" for j, v in zip(r.indices.tolist(), r.values.tolist()))
        lines.append(f"{label} {feats}".rstrip() + "\n")
    return "".join(lines)


def class_means(ds):
    """Per-class dense coordinate means (positives, negatives)."""
    if ds.pos_ids.size == 0 or ds.neg_ids.size == 0:
        raise TaskConfigError("both classes must be nonempty")
    mu_pos = np.zeros(ds.dim)
    mu_neg = np.zeros(ds.dim)
    for i in ds.pos_ids:
        axpy_sparse(1.0, ds.row(i), mu_pos)
    for i in ds.neg_ids:
        axpy_sparse(1.0, ds.row(i), mu_neg)
    return mu_pos / ds.pos_ids.size, mu_neg / ds.neg_ids.size
