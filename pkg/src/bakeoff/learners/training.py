"""Iterative training with patience-based early stopping and best-epoch restore."""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = ["DivergenceError", "EarlyStopping", "TrainingResult", "train_iterative", "Adam"]


class DivergenceError(FloatingPointError):
    """Training produced a non-finite loss; the trial is reported as failed."""


class EarlyStopping:
    """Tracks validation loss and signals a stop after ``patience`` stale epochs.

    Only strict improvement resets the counter.
    """

    def __init__(self, patience: int = 100):
        if patience < 1:
            raise ValueError("patience must be >= 1")
        self.patience = patience
        self.best = math.inf
        self.best_epoch = 0
        self.wait = 0

    def __call__(self, epoch: int, loss: float) -> tuple[bool, bool]:
        """Return ``(improved, stop)`` for the loss observed at ``epoch``."""
        if loss < self.best:
            self.best = loss
            self.best_epoch = epoch
            self.wait = 0
            return True, False
        self.wait += 1
        return False, self.wait >= self.patience


@dataclass
class TrainingResult:
    params: dict
    losses: list[float] = field(default_factory=list)
    best_epoch: int = 0
    stopped_epoch: int = 0
    reached_max_epochs: bool = False

    @property
    def best_loss(self) -> float:
        return self.losses[self.best_epoch - 1] if self.best_epoch else math.inf


def train_iterative(
    params: dict,
    run_epoch: Callable[[int], None],
    validate: Callable[[], float],
    patience: int = 100,
    max_epochs: int = 10_000,
) -> TrainingResult:
    """Run epochs until validation loss stalls for ``patience`` epochs.

    ``run_epoch(epoch)`` updates ``params`` in place (epochs are 1-based) and
    ``validate()`` returns the validation loss of the current parameters.
    The returned result holds a deep copy of the parameters from the best
    epoch. Hitting ``max_epochs`` is not an error; it is flagged on the result.
    """
    stopper = EarlyStopping(patience)
    best = copy.deepcopy(params)
    result = TrainingResult(best)
    for epoch in range(1, max_epochs + 1):
        run_epoch(epoch)
        loss = float(validate())
        if not math.isfinite(loss):
            raise DivergenceError(f"validation loss became {loss} at epoch {epoch}")
        result.losses.append(loss)
        improved, stop = stopper(epoch, loss)
        if improved:
            best = copy.deepcopy(params)
        result.stopped_epoch = epoch
        if stop:
            break
    else:
        result.reached_max_epochs = True
    result.params = best
    result.best_epoch = stopper.best_epoch
    return result


class Adam:
    """Adam with a fixed step size (no learning-rate schedule)."""

    def __init__(self, params: dict, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads: dict) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for k, g in grads.items():
            m, v = self.m[k], self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            self.params[k] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
