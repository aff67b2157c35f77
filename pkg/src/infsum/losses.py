"""Scalar losses of a linear prediction, the l2 regularizer and the l1 prox.

Scalar functions (``loss_value``, ``loss_deriv``) are written with ``math``
for the per-step hot path; the ``*_array`` variants are their vectorized
counterparts used by evaluation and the enumeration oracles.
"""

import enum
import math
from dataclasses import dataclass

import numpy as np


class LossKind(str, enum.Enum):
    LOGISTIC = "logistic"
    SQUARED_HINGE = "sqhinge"
    SQUARED = "squared"

    @classmethod
    def parse(cls, token):
        if isinstance(token, cls):
            return token
        aliases = {"squared_hinge": "sqhinge"}
        return cls(aliases.get(token, token))


@dataclass(frozen=True)
class RegSpec:
    lambda2: float = 0.0
    lambda1: float = 0.0

    def __post_init__(self):
        for name in ("lambda2", "lambda1"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and nonnegative")

    @property
    def mu(self):
        """Strong-convexity estimate used by stepsize heuristics."""
        return self.lambda2

    def value(self, theta):
        out = 0.5 * self.lambda2 * float(theta @ theta)
        if self.lambda1:
            out += self.lambda1 * float(np.abs(theta).sum())
        return out


def _log1pexp(z):
    # log(1 + e^z) without overflow
    if z > 0:
        return z + math.log1p(math.exp(-z))
    return math.log1p(math.exp(z))


def loss_value(kind, u, y):
    """Loss of prediction/margin ``u`` with label ``y``.

    For the squared hinge ``u`` is already the pairwise margin and ``y`` is
    ignored.
    """
    if kind is LossKind.LOGISTIC:
        return _log1pexp(-y * u)
    if kind is LossKind.SQUARED_HINGE:
        h = 1.0 - u
        return h * h if h > 0 else 0.0
    r = y - u
    return r * r


def loss_deriv(kind, u, y):
    """Derivative of :func:`loss_value` in ``u``; 0 at the squared-hinge kink."""
    if kind is LossKind.LOGISTIC:
        z = y * u
        # -y * sigmoid(-z), split on sign to keep exp bounded
        if z >= 0:
            e = math.exp(-z)
            return -y * e / (1.0 + e)
        return -y / (1.0 + math.exp(z))
    if kind is LossKind.SQUARED_HINGE:
        h = 1.0 - u
        return -2.0 * h if h > 0 else 0.0
    return 2.0 * (u - y)


def loss_second_deriv(kind, u, y):
    if kind is LossKind.LOGISTIC:
        s = 1.0 / (1.0 + math.exp(-abs(u)))
        return s * (1.0 - s)
    if kind is LossKind.SQUARED_HINGE:
        return 2.0 if u < 1.0 else 0.0
    return 2.0


def loss_value_array(kind, u, y):
    u = np.asarray(u, dtype=np.float64)
    if kind is LossKind.LOGISTIC:
        return np.logaddexp(0.0, -y * u)
    if kind is LossKind.SQUARED_HINGE:
        return np.maximum(0.0, 1.0 - u) ** 2
    return (y - u) ** 2


def loss_deriv_array(kind, u, y):
    u = np.asarray(u, dtype=np.float64)
    if kind is LossKind.LOGISTIC:
        z = y * u
        # -y * sigmoid(-z) = -y * exp(-logaddexp(0, z))
        return -y * np.exp(-np.logaddexp(0.0, z))
    if kind is LossKind.SQUARED_HINGE:
        return -2.0 * np.maximum(0.0, 1.0 - u)
    return 2.0 * (u - y)


def loss_second_deriv_array(kind, u, y):
    u = np.asarray(u, dtype=np.float64)
    if kind is LossKind.LOGISTIC:
        s = np.exp(-np.logaddexp(0.0, -np.abs(u)))
        return s * (1.0 - s)
    if kind is LossKind.SQUARED_HINGE:
        return np.where(u < 1.0, 2.0, 0.0)
    return np.full_like(u, 2.0)


def reg_grad(reg, theta):
    """Gradient of the smooth part ``(lambda2/2)||theta||^2``."""
    return reg.lambda2 * theta


def prox(reg, eta, q):
    """Soft-thresholding, the prox of ``eta * lambda1 * ||.||_1``."""
    if eta <= 0:
        raise ValueError("eta must be positive")
    thr = eta * reg.lambda1
    if thr == 0.0:
        return q
    return np.sign(q) * np.maximum(np.abs(q) - thr, 0.0)
