"""Pieces shared by the native learners: links, priors, output-head losses."""
from __future__ import annotations

import numpy as np
from scipy.special import expit, log_softmax, softmax

from ..data import Dataset, one_hot_matrix

__all__ = [
    "HyperparameterError",
    "check_hyperparameters",
    "link_probabilities",
    "prior_scores",
    "output_dim",
    "head_loss",
    "head_predictions",
    "TargetScaler",
    "encode_dense",
]


class HyperparameterError(ValueError):
    pass


def check_hyperparameters(hp: dict, defaults: dict, learner: str) -> dict:
    """Fill defaults and reject keys the learner does not declare."""
    unknown = set(hp) - set(defaults)
    if unknown:
        raise HyperparameterError(f"{learner}: unknown hyperparameters {sorted(unknown)}")
    return {**defaults, **hp}


def link_probabilities(raw: np.ndarray, task: str) -> np.ndarray:
    """Map raw scores to predictions.

    Binary: one logit column becomes ``[1 - p, p]``. Multiclass: softmax.
    Regression: the single column as a flat vector.
    """
    if task == "regression":
        return raw[:, 0].copy()
    if task == "binary":
        p = expit(raw[:, 0])
        return np.column_stack([1.0 - p, p])
    return softmax(raw, axis=1)


def prior_scores(y: np.ndarray, task: str, n_classes: int) -> np.ndarray:
    """Raw-score intercepts matching the training target distribution."""
    if task == "regression":
        return np.array([float(np.mean(y))])
    freq = np.bincount(y, minlength=n_classes) / max(y.size, 1)
    freq = np.clip(freq, 1e-6, 1.0 - 1e-6)
    if task == "binary":
        return np.array([np.log(freq[1] / freq[0])])
    return np.log(freq)


def output_dim(task: str, n_classes: int) -> int:
    return n_classes if task == "multiclass" else 1


def head_loss(out: np.ndarray, y: np.ndarray, task: str) -> tuple[float, np.ndarray]:
    """Mean training loss of a raw output block and its gradient w.r.t. ``out``."""
    n = out.shape[0]
    if task == "regression":
        r = out[:, 0] - y
        return float(np.mean(r**2)), (2.0 * r / n)[:, None]
    if task == "binary":
        z = out[:, 0]
        # log(1 + e^z) - y z, stable form
        loss = np.mean(np.logaddexp(0.0, z) - y * z)
        return float(loss), ((expit(z) - y) / n)[:, None]
    logp = log_softmax(out, axis=1)
    loss = -np.mean(logp[np.arange(n), y])
    d = np.exp(logp)
    d[np.arange(n), y] -= 1.0
    return float(loss), d / n


def head_predictions(out: np.ndarray, task: str) -> np.ndarray:
    return link_probabilities(out, task)


class TargetScaler:
    """Standardizes regression targets for gradient training; identity otherwise."""

    def __init__(self, y: np.ndarray, task: str):
        if task == "regression":
            self.mean = float(np.mean(y))
            std = float(np.std(y))
            self.std = std if std > 0 else 1.0
        else:
            self.mean, self.std = 0.0, 1.0
        self.task = task

    def forward(self, y):
        return (y - self.mean) / self.std if self.task == "regression" else y

    def inverse(self, preds):
        return preds * self.std + self.mean if self.task == "regression" else preds


def encode_dense(data, feature_meta, n_raw: int) -> np.ndarray:
    """One-hot design matrix from a Dataset or a raw matrix (NaN = missing)."""
    if isinstance(data, Dataset):
        X, mask = data.features, data.missing_mask
    else:
        X = np.asarray(data, dtype=np.float64)
        if X.ndim != 2:
            raise ValueError(f"expected a 2-D feature matrix, got shape {X.shape}")
        mask = np.isnan(X)
    if X.shape[1] != n_raw:
        raise ValueError(f"expected {n_raw} features, got {X.shape[1]}")
    return one_hot_matrix(X, mask, feature_meta)
