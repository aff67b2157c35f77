"""Stochastic update rules for noisy linear-model objectives.

Every stepper consumes one :class:`~infsum.tasks.Sample` per call: a drawn
index, its perturbed features ``x_hat``, the label, and the expected features
``x_bar``. The step functions operate on small state dataclasses and return
the search direction they used, which the verification oracles inspect.

When ``reg.lambda1 > 0`` the gradient step is followed by the l1 prox.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .data import axpy_sparse, dot
from .losses import loss_deriv, prox
from .noise import expected_sample, perturb


@dataclass(frozen=True)
class StepSchedule:
    """Decreasing stepsize ``c / (gamma + t)``."""

    c: float
    gamma: float

    def __post_init__(self):
        if not (math.isfinite(self.c) and self.c > 0):
            raise ValueError("c must be positive and finite")
        if not (math.isfinite(self.gamma) and self.gamma > 0):
            raise ValueError("gamma must be positive and finite")

    def eta(self, t):
        if t < 1:
            raise ValueError("iteration counter starts at 1")
        return self.c / (self.gamma + t)


def eta(schedule, t):
    return schedule.eta(t)


def proximal_apply(reg, eta_t, theta_after_grad):
    return prox(reg, eta_t, theta_after_grad)


def _apply(theta, v, eta_t, reg):
    theta -= eta_t * v
    if reg.lambda1 > 0:
        theta[:] = prox(reg, eta_t, theta)


def sgd_step(theta, sample, loss, reg, eta_t):
    """Plain stochastic gradient step, in place. Returns the direction."""
    x = sample.x_hat
    d = loss_deriv(loss, dot(x, theta), sample.label)
    v = reg.lambda2 * theta
    axpy_sparse(d, x, v)
    _apply(theta, v, eta_t, reg)
    return v


@dataclass
class SSAGState:
    theta: np.ndarray
    x_tilde: np.ndarray
    a: float = 0.0
    a_num: float = 0.0
    a_den: float = 0.0
    t: int = 0
    beta_exponent: float = 0.75
    zero_norm_steps: int = 0

    @classmethod
    def create(cls, theta0, x_tilde, beta_exponent=0.75):
        return cls(np.array(theta0, dtype=np.float64), np.asarray(x_tilde, dtype=np.float64),
                   beta_exponent=beta_exponent)


def ssag_direction(state, x_hat, label, loss, reg):
    """``(d, v)`` with ``v = (d - a) x_hat + a x_tilde + lambda2 theta``."""
    d = loss_deriv(loss, dot(x_hat, state.theta), label)
    v = reg.lambda2 * state.theta
    if state.a != 0.0:
        v += state.a * state.x_tilde
    axpy_sparse(d - state.a, x_hat, v)
    return d, v


def ssag_step(state, sample, loss, reg, schedule):
    """One iteration of the scalar control-variate method.

    The control coefficient ``a`` is the ratio of two moving averages,
    ``E[phi' ||x||^2]`` over ``E[||x||^2]``, with weights ``t**-beta_exponent``.
    """
    t = state.t + 1
    x = sample.x_hat
    d, v = ssag_direction(state, x, sample.label, loss, reg)
    _apply(state.theta, v, schedule.eta(t), reg)

    sq = float(x.values @ x.values)
    beta = t ** (-state.beta_exponent)
    state.a_num = (1.0 - beta) * state.a_num + beta * d * sq
    state.a_den = (1.0 - beta) * state.a_den + beta * sq
    if state.a_den > 0.0:
        state.a = state.a_num / state.a_den
    else:
        state.a = 0.0
        state.zero_norm_steps += 1
    state.t = t
    return v


@dataclass
class SSAGAState:
    theta: np.ndarray
    a_table: np.ndarray
    m: np.ndarray
    t: int = 0

    @property
    def n(self):
        return self.a_table.size


def ssaga_init(ds, theta0, loss, noise, rng):
    """Seed the per-sample coefficients from one fresh perturbation each."""
    theta = np.array(theta0, dtype=np.float64)
    n = ds.n
    a = np.empty(n)
    m = np.zeros(ds.dim)
    for i in range(n):
        x = ds.row(i)
        x_hat = perturb(x, noise, rng)
        a[i] = loss_deriv(loss, dot(x_hat, theta), ds.labels[i])
        axpy_sparse(a[i], expected_sample(x, noise), m)
    m /= n
    return SSAGAState(theta, a, m)


def ssaga_step(state, i, sample, loss, reg, schedule):
    """One iteration with per-sample coefficients and running mean ``m``.

    Order matters: direction, parameter update, ``m`` update, then the
    table entry is overwritten.
    """
    t = state.t + 1
    x = sample.x_hat
    d = loss_deriv(loss, dot(x, state.theta), sample.label)
    a_i = state.a_table[i]
    v = reg.lambda2 * state.theta + state.m
    axpy_sparse(d - a_i, x, v)
    _apply(state.theta, v, schedule.eta(t), reg)
    axpy_sparse((d - a_i) / state.n, sample.x_bar, state.m)
    state.a_table[i] = d
    state.t = t
    return v


def ssaga_m_drift(state, x_bars):
    """Max abs gap between the running ``m`` and its from-scratch value."""
    fresh = np.zeros_like(state.m)
    for a_i, xb in zip(state.a_table, x_bars):
        axpy_sparse(a_i, xb, fresh)
    fresh /= state.n
    return float(np.max(np.abs(fresh - state.m))), fresh


@dataclass
class AdagradState:
    theta: np.ndarray
    accumulator: np.ndarray
    t: int = 0

    @classmethod
    def create(cls, theta0):
        theta = np.array(theta0, dtype=np.float64)
        return cls(theta, np.zeros_like(theta))


def adagrad_step(state, sample, loss, reg, base_eta, epsilon=1e-8):
    """Diagonal ADAGRAD step with the l2 term included densely."""
    x = sample.x_hat
    d = loss_deriv(loss, dot(x, state.theta), sample.label)
    g = reg.lambda2 * state.theta
    axpy_sparse(d, x, g)
    state.accumulator += g * g
    step = base_eta / (epsilon + np.sqrt(state.accumulator))
    state.theta -= step * g
    if reg.lambda1 > 0:
        thr = step * reg.lambda1
        state.theta[:] = np.sign(state.theta) * np.maximum(np.abs(state.theta) - thr, 0.0)
    state.t += 1
    return g


@dataclass
class AveragerState:
    theta_bar: np.ndarray
    gamma: float
    t: int = 0

    @classmethod
    def create(cls, dim, gamma):
        return cls(np.zeros(dim), float(gamma))


def average_weight(t, gamma):
    return 2.0 * (gamma + t - 1) / (t * (2.0 * gamma + t - 1))


def average_update(state, theta_prev):
    """Fold ``theta_{t-1}`` into the weighted running average."""
    t = state.t + 1
    rho = average_weight(t, state.gamma)
    state.theta_bar *= 1.0 - rho
    state.theta_bar += rho * theta_prev
    state.t = t


def closed_form_average(thetas, gamma):
    """Direct evaluation of the weighted average of ``thetas[0..T-1]``."""
    thetas = np.asarray(thetas, dtype=np.float64)
    T = thetas.shape[0]
    w = gamma + np.arange(T)
    return (2.0 / (T * (2.0 * gamma + T - 1))) * (w @ thetas)


# --- stepper objects used by the experiment loop -------------------------


class SGD:
    name = "sgd"

    def __init__(self, theta0, loss, reg, schedule):
        self.theta = np.array(theta0, dtype=np.float64)
        self.loss, self.reg, self.schedule = loss, reg, schedule
        self.t = 0

    def step(self, sample):
        self.t += 1
        return sgd_step(self.theta, sample, self.loss, self.reg, self.schedule.eta(self.t))


class SSAG:
    name = "ssag"

    def __init__(self, theta0, x_tilde, loss, reg, schedule, beta_exponent=0.75):
        self.state = SSAGState.create(theta0, x_tilde, beta_exponent)
        self.loss, self.reg, self.schedule = loss, reg, schedule

    @property
    def theta(self):
        return self.state.theta

    def step(self, sample):
        return ssag_step(self.state, sample, self.loss, self.reg, self.schedule)


class SSAGA:
    name = "ssaga"

    def __init__(self, state, loss, reg, schedule):
        self.state = state
        self.loss, self.reg, self.schedule = loss, reg, schedule

    @property
    def theta(self):
        return self.state.theta

    def step(self, sample):
        return ssaga_step(self.state, sample.index, sample, self.loss, self.reg, self.schedule)


class Adagrad:
    name = "adagrad"

    def __init__(self, theta0, loss, reg, base_eta, epsilon=1e-8):
        self.state = AdagradState.create(theta0)
        self.loss, self.reg = loss, reg
        self.base_eta, self.epsilon = base_eta, epsilon

    @property
    def theta(self):
        return self.state.theta

    def step(self, sample):
        return adagrad_step(self.state, sample, self.loss, self.reg, self.base_eta, self.epsilon)


@dataclass
class Averaged:
    """Wraps a stepper and maintains the weighted average of its iterates."""

    inner: object
    gamma: float
    avg: AveragerState = field(init=False)

    def __post_init__(self):
        self.avg = AveragerState.create(self.inner.theta.size, self.gamma)
        self.name = "ia-" + self.inner.name

    @property
    def theta(self):
        return self.inner.theta

    @property
    def theta_bar(self):
        return self.avg.theta_bar

    def step(self, sample):
        average_update(self.avg, self.inner.theta)
        return self.inner.step(sample)
