"""Evaluation losses, seed aggregation, relative deterioration and Friedman tests."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats

__all__ = [
    "PROB_CLAMP",
    "cross_entropy",
    "squared_error",
    "task_loss",
    "aggregate_seeds",
    "ComparisonMatrix",
    "relative_deterioration",
    "FriedmanResult",
    "friedman_test",
    "friedman_permutation_pvalue",
    "pairwise_friedman",
]

PROB_CLAMP = 1e-12


def cross_entropy(preds, labels) -> float:
    """Mean negative log-probability of the true class.

    Probabilities are clamped to ``[1e-12, 1 - 1e-12]`` before the log.
    """
    P = np.asarray(preds, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if P.ndim != 2 or P.shape[0] != y.shape[0]:
        raise ValueError(f"predictions {P.shape} do not match {y.shape[0]} labels")
    if y.size == 0:
        raise ValueError("empty input")
    if y.min() < 0 or y.max() >= P.shape[1]:
        raise ValueError("label outside the predicted class range")
    p = np.clip(P[np.arange(y.size), y], PROB_CLAMP, 1.0 - PROB_CLAMP)
    return float(-np.mean(np.log(p)))


def squared_error(preds, targets) -> dict[str, float]:
    """Return ``{"mse": ..., "rmse": ...}``."""
    yhat = np.asarray(preds, dtype=np.float64).reshape(-1)
    y = np.asarray(targets, dtype=np.float64).reshape(-1)
    if yhat.shape != y.shape:
        raise ValueError(f"length mismatch: {yhat.shape[0]} predictions, {y.shape[0]} targets")
    if y.size == 0:
        raise ValueError("empty input")
    mse = float(np.mean((yhat - y) ** 2))
    return {"mse": mse, "rmse": math.sqrt(mse)}


def task_loss(preds, targets, task: str) -> float:
    """Cross-entropy for classification tasks, MSE for regression."""
    if task == "regression":
        return squared_error(preds, targets)["mse"]
    return cross_entropy(preds, targets)


def aggregate_seeds(losses: Sequence[float]) -> dict[str, float]:
    """Mean and standard error of the mean (sample std / sqrt(n))."""
    x = np.asarray(losses, dtype=np.float64)
    if x.size == 0:
        raise ValueError("need at least one value")
    sem = float(np.std(x, ddof=1) / math.sqrt(x.size)) if x.size > 1 else 0.0
    return {"mean": float(x.mean()), "sem": sem}


@dataclass(frozen=True)
class ComparisonMatrix:
    """Models x datasets loss grid (lower is better).

    ``unseen[i, j]`` is true when dataset ``j`` was not used in the work
    that introduced model ``i``.
    """

    losses: np.ndarray
    unseen: np.ndarray
    models: tuple[str, ...]
    datasets: tuple[str, ...]

    def __post_init__(self):
        L = np.asarray(self.losses, dtype=np.float64)
        U = np.asarray(self.unseen, dtype=bool)
        if L.ndim != 2 or L.shape != (len(self.models), len(self.datasets)):
            raise ValueError(f"loss grid {L.shape} does not match labels")
        if U.shape != L.shape:
            raise ValueError(f"unseen mask {U.shape} does not match loss grid {L.shape}")
        object.__setattr__(self, "losses", L)
        object.__setattr__(self, "unseen", U)

    def row(self, model) -> int:
        return model if isinstance(model, (int, np.integer)) else self.models.index(model)


def relative_deterioration(matrix: ComparisonMatrix, model) -> float:
    """Percent excess of a model's loss over the per-dataset best.

    The ratio to the best model is averaged geometrically over the model's
    unseen datasets, then reported as ``(geomean - 1) * 100``.
    """
    i = matrix.row(model)
    cols = np.flatnonzero(matrix.unseen[i])
    if cols.size == 0:
        raise ValueError(f"model {matrix.models[i]!r} has no unseen datasets")
    sub = matrix.losses[:, cols]
    if np.isnan(sub).any():
        raise ValueError("NaN loss in a dataset used for the comparison")
    if np.any(sub <= 0):
        raise ValueError("relative deterioration needs strictly positive losses")
    ratios = sub[i] / sub.min(axis=0)
    return float((math.exp(np.mean(np.log(ratios))) - 1.0) * 100.0)


@dataclass(frozen=True)
class FriedmanResult:
    rank_sums: np.ndarray
    statistic: float
    dof: int
    p_value: float
    reject: bool
    alpha: float = 0.05
    n_datasets: int = 1

    @property
    def mean_ranks(self) -> np.ndarray:
        return self.rank_sums / self.n_datasets


def _ranks(losses: np.ndarray) -> np.ndarray:
    """Per-dataset ranks (columns), 1 = lowest loss, average ranks on ties."""
    return np.apply_along_axis(stats.rankdata, 0, losses)


def _statistic(rank_sums: np.ndarray, k: int, n: int) -> float:
    return 12.0 / (n * k * (k + 1)) * float(np.sum(rank_sums**2)) - 3.0 * n * (k + 1)


def friedman_permutation_pvalue(losses) -> float:
    """Exact p-value by enumerating every within-dataset reordering of the ranks."""
    L = np.asarray(losses, dtype=np.float64)
    k, n = L.shape
    R = _ranks(L)
    observed = _statistic(R.sum(axis=1), k, n)
    per_col = [sorted(set(itertools.permutations(R[:, j]))) for j in range(n)]
    total = hits = 0
    for combo in itertools.product(*per_col):
        sums = np.sum(np.array(combo), axis=0)
        total += 1
        hits += _statistic(sums, k, n) >= observed - 1e-9
    return hits / total


def friedman_test(losses, alpha: float = 0.05, exact: bool = False) -> FriedmanResult:
    """Friedman rank-sum test over a ``k models x N datasets`` loss grid.

    ``chi2_F = 12 / (N k (k+1)) * sum_j R_j**2 - 3 N (k+1)`` with the p-value
    from the chi-square tail with ``k - 1`` degrees of freedom, or from full
    enumeration when ``exact`` is set (allowed for ``k <= 3, N <= 6``).
    """
    L = np.asarray(losses, dtype=np.float64)
    if L.ndim != 2 or L.shape[0] < 2 or L.shape[1] < 2:
        raise ValueError(f"need at least 2 models and 2 datasets, got shape {L.shape}")
    if np.isnan(L).any():
        raise ValueError("NaN in loss grid")
    k, n = L.shape
    rank_sums = _ranks(L).sum(axis=1)
    chi2 = max(_statistic(rank_sums, k, n), 0.0)
    if exact:
        if k > 3 or n > 6:
            raise ValueError("exact enumeration supported only for k <= 3 and N <= 6")
        p = friedman_permutation_pvalue(L)
    else:
        p = float(stats.chi2.sf(chi2, k - 1))
    p = min(max(p, 0.0), 1.0)
    return FriedmanResult(rank_sums, chi2, k - 1, p, p < alpha, alpha, n)


def pairwise_friedman(losses, alpha: float = 0.05) -> np.ndarray:
    """Symmetric matrix of Friedman p-values for every 2 x N model pair.

    The diagonal is 1.
    """
    L = np.asarray(losses, dtype=np.float64)
    k = L.shape[0]
    P = np.ones((k, k))
    for a, b in itertools.combinations(range(k), 2):
        P[a, b] = P[b, a] = friedman_test(L[[a, b]], alpha).p_value
    return P
