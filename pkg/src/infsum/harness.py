"""Experiment runner: gamma sweeps, seeded repetitions, per-epoch traces."""

import csv
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .data import TaskConfigError, load_libsvm
from .losses import LossKind, RegSpec
from .noise import NoiseSpec, RngStream
from .optimizers import SGD, SSAG, SSAGA, Adagrad, Averaged, StepSchedule, ssaga_init
from .tasks import AucTask, ErmTask, EvalSpec, auc_metric, estimate_objective, scores, ssag_xtilde

log = logging.getLogger(__name__)

ALGORITHMS = ("sgd", "ssag", "ssaga", "adagrad")
CSV_HEADER = ["algorithm", "gamma", "repetition", "epoch", "train_objective", "test_auc",
              "wall_time_ms", "seed"]

# stream purposes inside one (gamma, repetition) cell
STREAM_TRAIN = 1
STREAM_INIT = 2


def stream_id(gamma_index, repetition, purpose):
    """Stream id for one cell: ``gamma_index << 32 | repetition << 8 | purpose``.

    Together with the master seed this keys every random draw of a run. Ids
    are distinct across the whole gamma x repetition grid; all algorithms in
    one cell share them, so they see the same index sequence up to the
    point where their consumption of draws diverges.
    """
    if not (0 <= repetition < 1 << 24 and 0 <= purpose < 1 << 8):
        raise ValueError("repetition or purpose out of range")
    return (gamma_index << 32) | (repetition << 8) | purpose


@dataclass
class RunConfig:
    train_path: Optional[str] = None
    task: str = "erm"
    algorithms: tuple = ("ssag",)
    test_path: Optional[str] = None
    loss: str = "logistic"
    noise: str = "dropout:0.3"
    lambda2: float = 1e-6
    lambda1: float = 0.0
    c: Optional[float] = None
    gammas: tuple = (100.0,)
    beta_exponent: float = 0.75
    epochs: int = 20
    repetitions: int = 5
    master_seed: int = 42
    eval: EvalSpec = field(default_factory=EvalSpec)
    iterate_averaging: bool = False
    base_eta: float = 0.1
    adagrad_eps: float = 1e-8
    out_prefix: Optional[str] = None
    jobs: int = 1
    record_timing: bool = False

    def __post_init__(self):
        if isinstance(self.algorithms, str):
            self.algorithms = tuple(a.strip() for a in self.algorithms.split(","))
        self.algorithms = tuple(self.algorithms)
        self.gammas = tuple(float(g) for g in self.gammas)
        if self.epochs < 1 or self.repetitions < 1:
            raise TaskConfigError("epochs and repetitions must be >= 1")
        if not self.gammas or any(g <= 0 for g in self.gammas):
            raise TaskConfigError("gamma list must be nonempty and positive")
        if self.lambda2 < 0 or self.lambda1 < 0:
            raise TaskConfigError("regularization weights must be nonnegative")
        for a in self.algorithms:
            if a not in ALGORITHMS:
                raise TaskConfigError(f"unknown algorithm {a!r}")
        if self.task not in ("erm", "auc"):
            raise TaskConfigError(f"unknown task {self.task!r}")
        if self.task == "auc" and "ssaga" in self.algorithms:
            raise TaskConfigError("ssaga needs a table over all n+ * n- pairs; not offered for auc")

    @property
    def stepsize_c(self):
        if self.c is not None:
            return self.c
        if self.lambda2 <= 0:
            raise TaskConfigError("c defaults to 2/lambda and needs lambda > 0")
        return 2.0 / self.lambda2


@dataclass
class TraceRecord:
    algorithm: str
    gamma: float
    repetition: int
    epoch: int
    train_objective: float
    test_auc: Optional[float]
    wall_time_ms: Optional[float]
    seed: int


def build_task(config, dataset):
    reg = RegSpec(config.lambda2, config.lambda1)
    noise = NoiseSpec.parse(config.noise)
    if config.task == "auc":
        return AucTask(dataset, reg, noise)
    return ErmTask(dataset, LossKind.parse(config.loss), reg, noise)


def make_stepper(algorithm, task, schedule, rng_init=None, *, theta0=None, beta_exponent=0.75,
                 base_eta=0.1, epsilon=1e-8, averaging=False):
    dim = task.dataset.dim
    theta0 = np.zeros(dim) if theta0 is None else theta0
    if algorithm == "sgd":
        s = SGD(theta0, task.loss, task.reg, schedule)
    elif algorithm == "ssag":
        s = SSAG(theta0, ssag_xtilde(task), task.loss, task.reg, schedule, beta_exponent)
    elif algorithm == "ssaga":
        if isinstance(task, AucTask):
            raise TaskConfigError("ssaga is not offered for the auc task")
        state = ssaga_init(task.dataset, theta0, task.loss, task.noise, rng_init)
        s = SSAGA(state, task.loss, task.reg, schedule)
    elif algorithm == "adagrad":
        s = Adagrad(theta0, task.loss, task.reg, base_eta, epsilon)
    else:
        raise TaskConfigError(f"unknown algorithm {algorithm!r}")
    return Averaged(s, schedule.gamma) if averaging else s


def train(task, stepper, epochs, rng, on_epoch=None):
    """Run ``epochs`` epochs; ``on_epoch(epoch, theta_out)`` after each one.

    ``theta_out`` is the averaged iterate for averaging steppers. Returns
    False if the iterate became non-finite.
    """
    steps = task.epoch_length()
    for epoch in range(1, epochs + 1):
        for _ in range(steps):
            stepper.step(task.draw(rng))
        out = stepper.theta_bar if isinstance(stepper, Averaged) else stepper.theta
        if not np.all(np.isfinite(stepper.theta)):
            return False
        if on_epoch is not None:
            on_epoch(epoch, out)
    return True


def estimate_smoothness(task):
    """Upper bound on the per-sample smoothness constant, for warnings only."""
    curv = {LossKind.LOGISTIC: 0.25, LossKind.SQUARED_HINGE: 2.0, LossKind.SQUARED: 2.0}[task.loss]
    ds = task.dataset
    sq = np.array([ds.row(i).sq_norm() for i in range(ds.n)])
    if task.noise.kind == "dropout":
        sq = sq / (1.0 - task.noise.p) ** 2
    max_sq = sq.max() * (4.0 if isinstance(task, AucTask) else 1.0)
    return curv * max_sq + task.reg.lambda2


def check_stepsize(config, task, gamma):
    """Log (never raise) when a checkable stepsize condition fails."""
    c = config.stepsize_c
    mu = task.reg.mu
    if mu > 0 and c * mu <= 1.0:
        log.warning("c=%g does not exceed 1/mu=%g; O(1/t) rate not guaranteed", c, 1.0 / mu)
    L = estimate_smoothness(task)
    eta1 = c / (gamma + 1.0)
    if eta1 > 1.0 / L:
        log.warning("gamma=%g gives eta_1=%.3g above 1/L_est=%.3g", gamma, eta1, 1.0 / L)


def run_cell(config, task, test_set, algorithm, gamma_index, repetition):
    """One (algorithm, gamma, repetition) run; returns its trace records."""
    gamma = config.gammas[gamma_index]
    sid = stream_id(gamma_index, repetition, STREAM_TRAIN)
    rng = RngStream(config.master_seed, sid)
    rng_init = RngStream(config.master_seed, stream_id(gamma_index, repetition, STREAM_INIT))
    schedule = StepSchedule(config.stepsize_c if algorithm != "adagrad" else 1.0, gamma)
    stepper = make_stepper(algorithm, task, schedule, rng_init,
                           beta_exponent=config.beta_exponent, base_eta=config.base_eta,
                           epsilon=config.adagrad_eps, averaging=config.iterate_averaging)
    name = stepper.name
    records = []
    start = time.perf_counter()

    def elapsed():
        # wall time breaks byte-identical reruns, so it is opt-in
        return (time.perf_counter() - start) * 1e3 if config.record_timing else None

    def on_epoch(epoch, theta):
        obj = estimate_objective(task, theta, config.eval)
        auc = None
        if test_set is not None:
            auc = auc_metric(scores(test_set, theta), test_set.labels)
        records.append(TraceRecord(name, gamma, repetition, epoch, obj, auc, elapsed(), sid))

    # divergence is detected from the iterate itself; numpy's overflow warnings add nothing
    with np.errstate(over="ignore", invalid="ignore"):
        ok = train(task, stepper, config.epochs, rng, on_epoch)
    if not ok:
        epoch = records[-1].epoch + 1 if records else 1
        log.warning("%s gamma=%g rep=%d diverged at epoch %d", name, gamma, repetition, epoch)
        records.append(TraceRecord(name, gamma, repetition, epoch, math.nan, None, elapsed(), sid))
    return records


def _run_cell_args(args):
    return run_cell(*args)


def run_experiment(config, train_set=None, test_set=None):
    """Run the full algorithm x gamma x repetition grid.

    Data is read from ``config.train_path``/``config.test_path`` unless
    datasets are passed directly. Records come back sorted by
    (algorithm, gamma, repetition, epoch) regardless of execution order.
    """
    if train_set is None:
        train_set = load_libsvm(config.train_path)
    if test_set is None and config.test_path:
        test_set = load_libsvm(config.test_path, expected_dim=train_set.dim)
    task = build_task(config, train_set)
    for a in config.algorithms:
        log.info("%s extra storage: %d bytes", a, memory_report(a, task.n, train_set.dim,
                                                                config.iterate_averaging))
    for g in config.gammas:
        if any(a != "adagrad" for a in config.algorithms):
            check_stepsize(config, task, g)
    cells = [(config, task, test_set, a, gi, r)
             for a in config.algorithms
             for gi in range(len(config.gammas))
             for r in range(config.repetitions)]
    if config.jobs > 1:
        with ProcessPoolExecutor(config.jobs) as pool:
            chunks = list(pool.map(_run_cell_args, cells))
    else:
        chunks = [run_cell(*c) for c in cells]
    records = [r for chunk in chunks for r in chunk]
    records.sort(key=lambda r: (r.algorithm, r.gamma, r.repetition, r.epoch))
    if config.out_prefix:
        emit_csv(records, config.out_prefix + ".csv")
        emit_summary_json(records, config.out_prefix + ".summary.json", config)
    return records


def _fmt(x):
    if x is None:
        return ""
    return format(x, ".17g")


def emit_csv(records, path):
    """Write one row per record; floats at 17 significant digits, None as empty."""
    if not records:
        raise ValueError("no records to write")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in records:
            w.writerow([r.algorithm, _fmt(r.gamma), r.repetition, r.epoch, _fmt(r.train_objective),
                        _fmt(r.test_auc), _fmt(r.wall_time_ms), r.seed])


def read_csv(path):
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(TraceRecord(
                row["algorithm"], float(row["gamma"]), int(row["repetition"]), int(row["epoch"]),
                float(row["train_objective"]),
                float(row["test_auc"]) if row["test_auc"] else None,
                float(row["wall_time_ms"]) if row["wall_time_ms"] else None,
                int(row["seed"]),
            ))
    return out


def summarize(records):
    """Per-(algorithm, gamma) epoch-wise mean/std and the best gamma per algorithm.

    Std is the population std across repetitions. Cells with a failed
    repetition are reported but excluded from best-gamma selection; ties go
    to the smallest gamma.
    """
    groups = {}
    for r in records:
        groups.setdefault((r.algorithm, r.gamma), {}).setdefault(r.repetition, []).append(r)
    cells = []
    for (alg, gamma), reps in sorted(groups.items()):
        failed = sum(any(not math.isfinite(x.train_objective) for x in rs) for rs in reps.values())
        epochs = min(len(rs) for rs in reps.values())
        curves = np.array([[x.train_objective for x in sorted(rs, key=lambda x: x.epoch)[:epochs]]
                           for rs in reps.values()])
        with np.errstate(invalid="ignore"):
            mean, std = curves.mean(axis=0), curves.std(axis=0)
        cell = {
            "algorithm": alg,
            "gamma": gamma,
            "repetitions": len(reps),
            "failed_repetitions": failed,
            "epochs": list(range(1, epochs + 1)),
            "objective_mean": mean.tolist(),
            "objective_std": std.tolist(),
        }
        aucs = [[x.test_auc for x in sorted(rs, key=lambda x: x.epoch)[:epochs]] for rs in reps.values()]
        if all(a is not None for row in aucs for a in row):
            arr = np.array(aucs, dtype=float)
            cell["test_auc_mean"] = arr.mean(axis=0).tolist()
            cell["test_auc_std"] = arr.std(axis=0).tolist()
        cells.append(cell)
    best = {}
    for cell in cells:
        if cell["failed_repetitions"]:
            continue
        final = cell["objective_mean"][-1]
        cur = best.get(cell["algorithm"])
        if cur is None or final < cur[1] or (final == cur[1] and cell["gamma"] < cur[0]):
            best[cell["algorithm"]] = (cell["gamma"], final)
    return {
        "cells": cells,
        "best_gamma": {a: {"gamma": g, "final_objective": f} for a, (g, f) in sorted(best.items())},
    }


def emit_summary_json(records, path, config=None):
    summary = summarize(records)
    if config is not None:
        summary["epoch_definition"] = (
            "n steps per epoch" if config.task == "erm" else "max(n+, n-) steps per epoch")
        cfg = asdict(config)
        cfg["eval"] = asdict(config.eval)
        summary["config"] = cfg
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    return summary


def memory_report(algorithm, n, d, iterate_averaging=False, bytes_per_real=8):
    """Extra storage in bytes beyond SGD's iterate.

    ssag keeps the dense mean sample plus three scalars; ssaga keeps one
    scalar per sample plus the dense running mean; adagrad keeps a dense
    accumulator. Iterate averaging adds one dense vector.
    """
    extra = {
        "sgd": 0,
        "ssag": d + 3,
        "ssaga": n + d,
        "adagrad": d,
    }
    if algorithm not in extra:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    reals = extra[algorithm] + (d if iterate_averaging else 0)
    return reals * bytes_per_real
