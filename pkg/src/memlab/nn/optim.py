"""Training hyperparameters, SGD with momentum, and plateau LR decay."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import NonFiniteError
from .tensor import Tensor

MONITORS = ("train_loss", "val_accuracy")


@dataclass
class TrainConfig:
    """Everything that parameterizes one training run.

    epochs/initial_lr/momentum/patience defaults follow the training recipe
    this library reproduces; decay_factor, min_lr and batch_size are this
    artifact's own defaults.
    """

    epochs: int = 200
    initial_lr: float = 0.1
    momentum: float = 0.9
    patience: int = 10
    decay_factor: float = 0.1
    min_lr: float = 1e-5
    batch_size: int = 32
    seed: int = 0
    monitor: str = "val_accuracy"

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.initial_lr <= 0:
            raise ValueError(f"initial_lr must be positive, got {self.initial_lr}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.patience < 1:
            raise ValueError(f"patience must be positive, got {self.patience}")
        if not 0.0 < self.decay_factor < 1.0:
            raise ValueError(
                f"decay_factor must be in (0, 1), got {self.decay_factor}"
            )
        if self.min_lr <= 0:
            raise ValueError(f"min_lr must be positive, got {self.min_lr}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be positive, got {self.batch_size}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")
        if self.monitor not in MONITORS:
            raise ValueError(
                f"monitor must be one of {MONITORS}, got {self.monitor!r}"
            )

    def fingerprint_items(self) -> list[tuple[str, str]]:
        return [(k, repr(getattr(self, k))) for k in (
            "epochs", "initial_lr", "momentum", "patience", "decay_factor",
            "min_lr", "batch_size", "seed", "monitor")]


class SgdMomentum:
    """Classical (heavy-ball) momentum:  v <- mu*v + g;  p <- p - lr*v.

    With momentum 0 this is exactly vanilla SGD.  Velocities are allocated
    zero, one per parameter, in parameter order.
    """

    def __init__(self, params: list[Tensor], lr: float, momentum: float):
        if lr <= 0:
            raise ValueError(f"lr must be positive, got {lr}")
        if not 0.0 <= momentum < 1.0:
            raise ValueError(f"momentum must be in [0, 1), got {momentum}")
        self.params = params
        self.lr = float(lr)
        self.momentum = float(momentum)
        self.velocity = [np.zeros_like(p.data) for p in params]

    def step(self) -> None:
        for p, v in zip(self.params, self.velocity):
            if p.grad is None:
                raise RuntimeError("optimizer step with missing gradient")
            if p.grad.shape != v.shape:
                raise ValueError(
                    f"gradient shape {p.grad.shape} != parameter shape {v.shape}"
                )
            v *= self.momentum
            v += p.grad
            p.data -= self.lr * v


class PlateauScheduler:
    """Multiply the LR by decay_factor after patience epochs without improvement.

    Improvement is strict (any amount counts); the first observed metric
    only sets the baseline.  The counter is reset both on improvement and
    on decay, and the LR never drops below min_lr nor ever rises.
    """

    def __init__(self, lr: float, patience: int, decay_factor: float,
                 min_lr: float, mode: str):
        if mode not in ("minimize", "maximize"):
            raise ValueError(f"mode must be minimize or maximize, got {mode!r}")
        if lr <= 0:
            raise ValueError(f"lr must be positive, got {lr}")
        self.lr = float(lr)
        self.patience = int(patience)
        self.decay_factor = float(decay_factor)
        self.min_lr = float(min_lr)
        self.mode = mode
        self.best_metric: float | None = None
        self.epochs_since_improvement = 0

    def _improved(self, metric: float) -> bool:
        if self.best_metric is None:
            return True
        if self.mode == "minimize":
            return metric < self.best_metric
        return metric > self.best_metric

    def step(self, metric: float) -> float:
        """Record one epoch's monitored metric; returns the LR to use next."""
        metric = float(metric)
        if math.isnan(metric):
            raise NonFiniteError("scheduler metric is NaN")
        if self._improved(metric):
            self.best_metric = metric
            self.epochs_since_improvement = 0
        else:
            self.epochs_since_improvement += 1
            if self.epochs_since_improvement > self.patience:
                self.lr = max(self.lr * self.decay_factor, self.min_lr)
                self.epochs_since_improvement = 0
        return self.lr
