"""Compare SGD, SSAG and S-SAGA on a small dropout-regularized logistic problem.

Suboptimality is measured against the exact minimizer, which is cheap here
because every dropout mask of every row can be enumerated.

    python3 demos/quickstart.py
"""
import numpy as np

from infsum.harness import make_stepper, train
from infsum.losses import RegSpec
from infsum.noise import RngStream, dropout
from infsum.optimizers import StepSchedule
from infsum.oracle import EnumerableProblem, exact_objective, high_precision_minimizer
from infsum.synthetic import make_classification
from infsum.tasks import ErmTask

lam = 1e-2
ds = make_classification(50, 10, 6, seed=2, pos_fraction=0.2, scale=0.3, nonnegative=True)
task = ErmTask(ds, "logistic", RegSpec(lam), dropout(0.3))
prob = EnumerableProblem(ds, task.noise, task.loss, task.reg)
_, f_star = high_precision_minimizer(prob)
print(f"F* = {f_star:.10f}")

epochs = 50
for algo in ("sgd", "ssag", "ssaga"):
    curve = []
    stepper = make_stepper(algo, task, StepSchedule(2.0 / lam, 500.0), RngStream(0, 2))
    train(task, stepper, epochs, RngStream(0, 1),
          lambda e, th: curve.append(exact_objective(prob, th) - f_star))
    marks = "  ".join(f"ep{e}={curve[e - 1]:.2e}" for e in (1, 10, 25, 50))
    print(f"{algo:>6}: {marks}")
