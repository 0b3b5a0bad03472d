"""Optimizers, training loops and conversion schedules."""

from bipolar_morph.training.optim import SGD, Adam, Optimizer, make_optimizer
from bipolar_morph.training.trainer import (
    DepthReport,
    EvalReport,
    MethodResult,
    TrainConfig,
    Trainer,
    evaluate,
)

__all__ = [
    "SGD",
    "Adam",
    "DepthReport",
    "EvalReport",
    "MethodResult",
    "Optimizer",
    "TrainConfig",
    "Trainer",
    "evaluate",
    "make_optimizer",
]
