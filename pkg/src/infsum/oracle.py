"""Brute-force oracles for checking the stochastic machinery exactly.

For dropout noise the expectation over perturbations is a finite sum over
keep/drop masks, so objectives, gradients and estimator moments can be
computed exactly on small problems. Everything here is deliberately written
along a separate code path from the optimizers it checks.
"""

import itertools
import math

import numpy as np
import scipy.sparse as sp

from .data import SparseVector
from .losses import (
    loss_deriv,
    loss_deriv_array,
    loss_second_deriv_array,
    loss_value_array,
)

ENUMERATION_BUDGET = 1 << 20


class EnumerationBudgetError(RuntimeError):
    pass


class OracleFailure(RuntimeError):
    pass


def _masks(k):
    """All 2**k keep-patterns as a (2**k, k) boolean array."""
    if k == 0:
        return np.ones((1, 0), dtype=bool)
    codes = np.arange(1 << k)[:, None]
    return ((codes >> np.arange(k)) & 1).astype(bool)


class EnumerableProblem:
    """A small dropout (or noise-free) problem whose expectations are exact.

    The flattened ``atoms`` matrix holds one row per (sample, mask) pair with
    weight ``P(mask) / n``; objectives and gradients become weighted sums
    over it.
    """

    def __init__(self, dataset, noise, loss, reg, budget=ENUMERATION_BUDGET):
        if noise.kind not in ("dropout", "none"):
            raise ValueError("only dropout or noise-free problems are enumerable")
        p = noise.p if noise.kind == "dropout" else 0.0
        if p == 0.0:
            cost = dataset.n
        else:
            cost = sum(1 << dataset.row(i).nnz for i in range(dataset.n))
        if cost > budget:
            raise EnumerationBudgetError(f"enumeration needs {cost} terms, budget is {budget}")
        self.dataset, self.noise, self.loss, self.reg = dataset, noise, loss, reg
        self.p = p
        self.n, self.dim = dataset.n, dataset.dim
        self._build_atoms()

    def _build_atoms(self):
        p, n = self.p, self.n
        rows, cols, vals, weights, owner = [], [], [], [], []
        base = 0
        for i in range(n):
            x = self.dataset.row(i)
            k = x.nnz
            masks = _masks(k) if p > 0 else np.ones((1, k), dtype=bool)
            keeps = masks.sum(axis=1)
            prob = (1.0 - p) ** keeps * p ** (k - keeps)
            scale = 1.0 / (1.0 - p)
            r, c = np.nonzero(masks)
            rows.append(r + base)
            cols.append(x.indices[c])
            vals.append(x.values[c] * scale)
            weights.append(prob / n)
            owner.append(np.full(masks.shape[0], i))
            base += masks.shape[0]
        self.atoms = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(base, self.dim),
        )
        self.weights = np.concatenate(weights)
        self.owner = np.concatenate(owner)
        self.labels = self.dataset.labels[self.owner]
        self.atom_sq_norms = np.asarray(self.atoms.multiply(self.atoms).sum(axis=1)).ravel()

    @property
    def size(self):
        return self.weights.size


def exact_expectation_over_masks(problem, h):
    """``(1/n) sum_i sum_mask P(mask) h(i, x_hat)`` by explicit enumeration.

    ``h`` receives the row index and the perturbed :class:`SparseVector`
    and may return a scalar or an array.
    """
    p, n = problem.p, problem.n
    total = 0.0
    for i in range(n):
        x = problem.dataset.row(i)
        if p == 0.0:
            total = total + h(i, x) / n
            continue
        for keep in itertools.product((False, True), repeat=x.nnz):
            keep = np.array(keep, dtype=bool)
            k_keep = int(keep.sum())
            prob = (1.0 - p) ** k_keep * p ** (x.nnz - k_keep)
            x_hat = SparseVector._raw(x.indices[keep], x.values[keep] / (1.0 - p))
            total = total + (prob / n) * h(i, x_hat)
    return total


def exact_objective(problem, theta):
    """Exact regularized objective, including the l1 term when present."""
    u = problem.atoms @ theta
    data = problem.weights @ loss_value_array(problem.loss, u, problem.labels)
    return float(data) + problem.reg.value(theta)


def exact_gradient(problem, theta):
    """Exact gradient of the smooth part (data term plus l2)."""
    u = problem.atoms @ theta
    w = problem.weights * loss_deriv_array(problem.loss, u, problem.labels)
    return problem.atoms.T @ w + problem.reg.lambda2 * theta


def exact_hessian(problem, theta):
    u = problem.atoms @ theta
    w = problem.weights * loss_second_deriv_array(problem.loss, u, problem.labels)
    H = (problem.atoms.T @ sp.diags(w) @ problem.atoms).toarray()
    H[np.diag_indices_from(H)] += problem.reg.lambda2
    return H


def exact_a_star(problem, theta):
    """Optimal scalar control coefficient ``E[phi' ||x||^2] / E[||x||^2]``."""
    u = problem.atoms @ theta
    num = problem.weights @ (loss_deriv_array(problem.loss, u, problem.labels) * problem.atom_sq_norms)
    den = problem.weights @ problem.atom_sq_norms
    if den <= 0.0:
        raise OracleFailure("E||x_hat||^2 is zero; a* undefined")
    return float(num / den)


def mean_sample(problem):
    """Exact ``E[x_hat]`` over index and mask."""
    return problem.atoms.T @ problem.weights


def reference_saga(ds, theta0, loss, reg, index_sequence, schedule):
    """Textbook SAGA with a dense table of past gradients.

    Returns the list of directions and the iterates ``theta_1..theta_T``.
    """
    X = ds.to_dense()
    y = ds.labels
    n = ds.n
    theta = np.array(theta0, dtype=np.float64)
    table = np.array([loss_deriv(loss, X[i] @ theta, y[i]) * X[i] for i in range(n)])
    mean = table.sum(axis=0) / n
    directions, thetas = [], []
    for t, i in enumerate(index_sequence, start=1):
        g = loss_deriv(loss, X[i] @ theta, y[i]) * X[i]
        v = (g - table[i]) + mean + reg.lambda2 * theta
        theta = theta - schedule.eta(t) * v
        mean = mean + (g - table[i]) / n
        table[i] = g
        directions.append(v)
        thetas.append(theta.copy())
    return directions, thetas


def running_xtilde_estimator(x_tilde_prev, t, a, theta, x_hat, label, loss, reg):
    """Control-variate estimate using a running average of drawn samples.

    Returns ``(z_t, x_tilde_t)`` where ``x_tilde_t`` folds ``x_hat`` into the
    average with weight ``1/t``.
    """
    x_t = (1.0 - 1.0 / t) * x_tilde_prev
    x_t[x_hat.indices] += x_hat.values / t
    d = loss_deriv(loss, float(x_hat.values @ theta[x_hat.indices]), label)
    z = reg.lambda2 * theta + a * x_t
    z[x_hat.indices] += (d - a) * x_hat.values
    return z, x_t


def high_precision_minimizer(problem, tol=1e-12, max_iter=1_000_000):
    """Minimize the exact objective to ``||grad|| <= tol``.

    Damped Newton with Armijo backtracking, falling back to the gradient
    direction whenever the Newton direction is not a descent direction.
    """
    if problem.reg.lambda2 <= 0 or problem.reg.lambda1 != 0:
        raise ValueError("needs lambda2 > 0 and lambda1 == 0")
    theta = np.zeros(problem.dim)
    f = exact_objective(problem, theta)
    for _ in range(max_iter):
        g = exact_gradient(problem, theta)
        gnorm = float(np.linalg.norm(g))
        if gnorm <= tol:
            return theta, f
        try:
            step = -np.linalg.solve(exact_hessian(problem, theta), g)
        except np.linalg.LinAlgError:
            step = -g
        slope = float(g @ step)
        if not slope < 0:
            step, slope = -g, -gnorm**2
        s = 1.0
        while True:
            cand = theta + s * step
            fc = exact_objective(problem, cand)
            if fc <= f + 1e-4 * s * slope or s < 1e-20:
                break
            s *= 0.5
        if s < 1e-20:
            # objective no longer resolves the step; accept a full Newton step
            # only if it shrinks the gradient
            cand = theta + step
            if np.linalg.norm(exact_gradient(problem, cand)) >= gnorm:
                raise OracleFailure(f"stalled at gradient norm {gnorm:.3e}")
            fc = exact_objective(problem, cand)
        theta, f = cand, fc
    raise OracleFailure("no convergence within iteration budget")


def suboptimality(problem, theta, f_star):
    return exact_objective(problem, theta) - f_star


def dropout_moment_by_enumeration(x, p):
    """Exact ``(E[x_hat], E||x_hat||^2)`` for one sparse vector under dropout."""
    k = x.nnz
    mean = np.zeros(k)
    sq = 0.0
    for keep in itertools.product((False, True), repeat=k):
        keep = np.array(keep, dtype=bool)
        prob = math.prod((1.0 - p) if kk else p for kk in keep)
        vals = np.where(keep, x.values / (1.0 - p), 0.0)
        mean += prob * vals
        sq += prob * float(vals @ vals)
    return SparseVector._raw(x.indices, mean), sq
