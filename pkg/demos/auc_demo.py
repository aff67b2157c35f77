"""Pairwise AUC training with dropout, writing a CSV trace and a JSON summary.

    python3 demos/auc_demo.py /tmp/auc_run
"""
import json
import sys

from infsum.harness import RunConfig, run_experiment
from infsum.synthetic import make_separable

prefix = sys.argv[1] if len(sys.argv) > 1 else "auc_run"
train_set = make_separable(60, 40, 20, 6, seed=0, margin=0.3)
test_set = make_separable(60, 40, 20, 6, seed=1, margin=0.3)

cfg = RunConfig(task="auc", algorithms="sgd,ssag,adagrad", noise="dropout:0.3", lambda2=1e-2,
                gammas=(1000.0, 10000.0), epochs=10, repetitions=3, out_prefix=prefix)
run_experiment(cfg, train_set, test_set)

with open(prefix + ".summary.json") as f:
    summary = json.load(f)
print("epoch definition:", summary["epoch_definition"])
for cell in summary["cells"]:
    print(f"{cell['algorithm']:>8} gamma={cell['gamma']:<7g} "
          f"objective={cell['objective_mean'][-1]:.4f}  test auc={cell['test_auc_mean'][-1]:.3f}")
