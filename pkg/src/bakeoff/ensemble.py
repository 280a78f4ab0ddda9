"""Combining fitted models into one predictive distribution and choosing member subsets.

Members are represented by their prediction arrays on a common set of rows:
``(n, k)`` probability matrices for classification, ``(n,)`` vectors for
regression. Nothing here refits a model.
"""
from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .metrics import task_loss

__all__ = [
    "LOSS_FLOOR",
    "EnsembleError",
    "EnsembleSpec",
    "combine_uniform",
    "compute_weights",
    "combine_weighted",
    "uncertainty_score",
    "member_uncertainties",
    "select_subset",
    "combine_per_example",
    "SubsetCurve",
    "subset_curve",
    "expected_random_curve",
    "write_weights",
]

LOSS_FLOOR = 1e-9
STRATEGIES = ("validation-loss", "per-example-uncertainty", "random")


class EnsembleError(ValueError):
    pass


def _stack(member_preds) -> np.ndarray:
    if len(member_preds) == 0:
        raise EnsembleError("no ensemble members")
    arrays = [np.asarray(p, dtype=np.float64) for p in member_preds]
    shape = arrays[0].shape
    for i, a in enumerate(arrays):
        if a.shape != shape:
            raise EnsembleError(f"member {i} predictions have shape {a.shape}, expected {shape}")
    if len(shape) not in (1, 2):
        raise EnsembleError("predictions must be (n,) or (n, k)")
    return np.stack(arrays)


def combine_uniform(member_preds) -> np.ndarray:
    """Per-row mean of the members' predictions."""
    P = _stack(member_preds)
    if P.shape[0] == 1:
        return P[0].copy()
    return P.sum(axis=0) / P.shape[0]


def compute_weights(val_losses, proportional: bool = False) -> np.ndarray:
    """Normalized member weights from validation losses.

    By default weights are inverse to the loss, so better members count more
    and equal losses give equal weights. ``proportional=True`` weights
    members by the loss itself. Losses below ``LOSS_FLOOR`` are raised to it.
    """
    l = np.asarray(val_losses, dtype=np.float64).reshape(-1)
    if l.size == 0:
        raise EnsembleError("no validation losses")
    if not np.all(np.isfinite(l)) or np.any(l < 0):
        raise EnsembleError("validation losses must be finite and non-negative")
    l = np.maximum(l, LOSS_FLOOR)
    raw = l if proportional else 1.0 / l
    return raw / raw.sum()


def _check_weights(w, k):
    w = np.asarray(w, dtype=np.float64).reshape(-1)
    if w.size != k:
        raise EnsembleError(f"{w.size} weights for {k} members")
    if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
        raise EnsembleError("weights must be non-negative and sum to 1")
    return w


def combine_weighted(member_preds, weights) -> np.ndarray:
    """Convex combination ``sum_k w_k p_k`` of the members' predictions."""
    P = _stack(member_preds)
    w = _check_weights(weights, P.shape[0])
    if np.all(w == w[0]):
        return combine_uniform(member_preds)
    return np.tensordot(w, P, axes=1)


@dataclass(frozen=True)
class EnsembleSpec:
    """Members (any objects with ``predict``), their validation losses and weights."""

    members: tuple
    val_losses: np.ndarray
    weights: np.ndarray
    mode: str = "weighted"

    @classmethod
    def build(cls, members, val_losses, mode: str = "weighted", proportional: bool = False) -> "EnsembleSpec":
        members = tuple(members)
        if not members:
            raise EnsembleError("no ensemble members")
        if len(val_losses) != len(members):
            raise EnsembleError("one validation loss per member is required")
        if mode == "uniform":
            w = np.full(len(members), 1.0 / len(members))
        elif mode == "weighted":
            w = compute_weights(val_losses, proportional)
        else:
            raise EnsembleError(f"unknown ensemble mode {mode!r}")
        return cls(members, np.asarray(val_losses, dtype=np.float64), w, mode)

    def __post_init__(self):
        _check_weights(self.weights, len(self.members))

    def predict(self, data) -> np.ndarray:
        preds = [m.predict(data) for m in self.members]
        return combine_weighted(preds, self.weights)


# --------------------------------------------------------------------------
# uncertainty and subsets


def uncertainty_score(pred, reference=None) -> float:
    """Entropy of one probability vector, or ``|pred - reference|`` for a scalar."""
    p = np.asarray(pred, dtype=np.float64)
    if p.ndim == 0:
        if reference is None:
            raise EnsembleError("regression uncertainty needs the ensemble mean as reference")
        return float(abs(p - reference))
    nz = p[p > 0]
    return float(-np.sum(nz * np.log(nz)))


def member_uncertainties(member_preds) -> np.ndarray:
    """``(K, n)`` uncertainty of each member on each row."""
    P = _stack(member_preds)
    if P.ndim == 2:
        return np.abs(P - P.mean(axis=0))
    with np.errstate(divide="ignore", invalid="ignore"):
        plogp = np.where(P > 0, P * np.log(P), 0.0)
    return -plogp.sum(axis=2)


def select_subset(val_losses, strategy: str, k: int, seed=0, member_preds=None):
    """Members to use for a size-``k`` ensemble.

    ``validation-loss`` and ``random`` return a sorted index array shared by
    all rows. ``per-example-uncertainty`` needs ``member_preds`` and returns a
    ``(n, k)`` array with each row's most confident members.
    """
    K = len(val_losses)
    if not 1 <= k <= K:
        raise EnsembleError(f"subset size {k} outside 1..{K}")
    if strategy == "validation-loss":
        order = np.lexsort((np.arange(K), np.asarray(val_losses, dtype=np.float64)))
        return np.sort(order[:k])
    if strategy == "random":
        return np.sort(np.random.default_rng(seed).permutation(K)[:k])
    if strategy == "per-example-uncertainty":
        if member_preds is None:
            raise EnsembleError("per-example selection needs member predictions")
        U = member_uncertainties(member_preds)
        if U.shape[0] != K:
            raise EnsembleError("one validation loss per member is required")
        return np.sort(np.argsort(U.T, axis=1, kind="stable")[:, :k], axis=1)
    raise EnsembleError(f"unknown subset strategy {strategy!r}; expected one of {STRATEGIES}")


def combine_per_example(member_preds, chosen) -> np.ndarray:
    """Uniform average over each row's own member set ``chosen[i]``."""
    P = _stack(member_preds)
    chosen = np.asarray(chosen)
    rows = np.arange(P.shape[1])[:, None]
    return P[chosen, rows].sum(axis=1) / chosen.shape[1]


@dataclass(frozen=True)
class SubsetCurve:
    k: np.ndarray
    loss: np.ndarray
    strategy: str


def subset_curve(member_preds, targets, task: str, val_losses, strategy: str, seed=0) -> SubsetCurve:
    """Loss of the uniformly combined size-k subset for k = 1..K."""
    P = _stack(member_preds)
    K = P.shape[0]
    if K < 2:
        raise EnsembleError("a subset curve needs at least two members")
    losses = np.empty(K)
    for k in range(1, K + 1):
        chosen = select_subset(val_losses, strategy, k, seed, P)
        if chosen.ndim == 2:
            combined = combine_per_example(P, chosen)
        else:
            combined = combine_uniform(P[chosen])
        losses[k - 1] = task_loss(combined, targets, task)
    return SubsetCurve(np.arange(1, K + 1), losses, strategy)


def expected_random_curve(member_preds, targets, task: str) -> SubsetCurve:
    """Mean loss over all size-k subsets, the expectation of the random-order curve.

    The first k members of a uniformly random order form a uniformly random
    k-subset, so this averages out the permutation noise of a single order.
    """
    P = _stack(member_preds)
    K = P.shape[0]
    if K < 2:
        raise EnsembleError("a subset curve needs at least two members")
    losses = np.array([
        np.mean([task_loss(combine_uniform(P[list(c)]), targets, task) for c in itertools.combinations(range(K), k)])
        for k in range(1, K + 1)
    ])
    return SubsetCurve(np.arange(1, K + 1), losses, "random-expected")


def write_weights(path, names: Sequence[str], weights) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["member", "weight"])
        for n, w in zip(names, weights):
            out.writerow([n, repr(float(w))])
