"""Stochastic optimization for finite sums of expectations over perturbed data."""

import logging

from .data import SparseDataset, SparseVector, load_libsvm, parse_libsvm, serialize_libsvm
from .losses import LossKind, RegSpec
from .noise import NoiseSpec, RngStream
from .optimizers import StepSchedule
from .tasks import AucTask, ErmTask, EvalSpec, auc_metric, estimate_objective

__version__ = "0.1.0"

logging.getLogger(__name__).addHandler(logging.NullHandler())
