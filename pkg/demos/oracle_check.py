"""Check the SSAG direction is unbiased by enumerating every dropout mask.

The exact expectation of the stochastic direction, taken over the sample
index and the mask, should equal the exact gradient to rounding error.

    python3 demos/oracle_check.py
"""
import numpy as np

from infsum.losses import LossKind, RegSpec, loss_deriv
from infsum.noise import dropout
from infsum.oracle import EnumerableProblem, exact_a_star, exact_expectation_over_masks, exact_gradient
from infsum.synthetic import make_classification
from infsum.tasks import ErmTask, ssag_xtilde

ds = make_classification(4, 6, 4, seed=0)
prob = EnumerableProblem(ds, dropout(0.3), LossKind.LOGISTIC, RegSpec(1e-2))
theta = np.random.default_rng(0).normal(size=ds.dim)
x_tilde = ssag_xtilde(ErmTask(ds, "logistic", prob.reg, prob.noise))

for a in (0.0, 0.3, exact_a_star(prob, theta)):
    def direction(i, x):
        v = a * x_tilde + 1e-2 * theta
        d = loss_deriv(LossKind.LOGISTIC, x.values @ theta[x.indices], ds.labels[i])
        v[x.indices] += (d - a) * x.values
        return v

    err = np.abs(exact_expectation_over_masks(prob, direction) - exact_gradient(prob, theta)).max()
    print(f"a = {a:+.4f}: max |E[v] - grad F| = {err:.1e}")
