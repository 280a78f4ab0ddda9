"""Second-order gradient-boosted decision trees with exact greedy splits.

Trees are grown level by level. Each level scans every allowed feature once
in presorted order, accumulating per-node gradient/hessian sums, and scores
every threshold between consecutive distinct values. Rows with a missing
value follow a per-node default direction chosen during the scan.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from ..data import Dataset, nan_matrix
from ..metrics import task_loss
from .base import HyperparameterError, check_hyperparameters, link_probabilities, prior_scores
from .training import DivergenceError, EarlyStopping

__all__ = ["gbdt_split_gain", "leaf_weight", "Tree", "GBDTModel", "fit_gbdt", "GBDT_DEFAULTS"]

GBDT_DEFAULTS = {
    "n_estimators": 100,
    "eta": 0.3,
    "max_depth": 6,
    "subsample": 1.0,
    "colsample_bytree": 1.0,
    "colsample_bylevel": 1.0,
    "min_child_weight": 1.0,
    "alpha": 0.0,
    "lambda": 1.0,
    "gamma": 0.0,
}
_INT_KEYS = ("n_estimators", "max_depth")
_HESS_FLOOR = 1e-16


def _threshold_l1(g, alpha):
    if alpha <= 0.0:
        return g
    return math.copysign(max(abs(g) - alpha, 0.0), g)


def leaf_weight(grad_sum: float, hess_sum: float, lam: float, alpha: float = 0.0) -> float:
    """Newton leaf value ``-G / (H + lambda)`` (``G`` soft-thresholded by ``alpha``)."""
    denom = hess_sum + lam
    if denom <= 0.0:
        return 0.0
    return -_threshold_l1(grad_sum, alpha) / denom


def gbdt_split_gain(grad_sum_L, hess_sum_L, grad_sum_R, hess_sum_R, lam, gamma, alpha=0.0) -> float:
    """Loss reduction of a split.

    ``0.5 * [G_L^2/(H_L+lam) + G_R^2/(H_R+lam) - (G_L+G_R)^2/(H_L+H_R+lam)] - gamma``.
    A child whose ``H + lam`` is zero contributes no score.
    """

    def score(g, h):
        d = h + lam
        if d <= 0.0:
            return 0.0
        g = _threshold_l1(g, alpha)
        return g * g / d

    return 0.5 * (
        score(grad_sum_L, hess_sum_L)
        + score(grad_sum_R, hess_sum_R)
        - score(grad_sum_L + grad_sum_R, hess_sum_L + hess_sum_R)
    ) - gamma


# --------------------------------------------------------------------------
# numba kernels


@numba.njit(cache=True)
def _score(g, h, lam, alpha):
    d = h + lam
    if d <= 0.0:
        return 0.0
    if alpha > 0.0:
        a = abs(g) - alpha
        if a <= 0.0:
            return 0.0
        g = a if g > 0 else -a
    return g * g / d


@numba.njit(cache=True)
def _grow_tree(X, order, grad, hess, in_sample, level_features, max_depth, lam, alpha, gamma, min_child_weight):
    """Grow one tree; returns flat node arrays.

    ``order[f]`` lists all rows sorted by feature ``f`` with NaN rows last.
    ``level_features[d]`` holds the feature ids allowed at depth ``d``
    (-1 padded).
    """
    n, p = X.shape
    cap = 2 ** (max_depth + 1)
    feat = np.full(cap, -1, np.int64)
    thr = np.zeros(cap)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    default_left = np.zeros(cap, np.bool_)
    G = np.zeros(cap)
    H = np.zeros(cap)
    n_nodes = 1

    node_of = np.full(n, -1, np.int64)
    for i in range(n):
        if in_sample[i]:
            node_of[i] = 0
            G[0] += grad[i]
            H[0] += hess[i]

    level_start = 0
    level_end = 1
    for depth in range(max_depth):
        width = level_end - level_start
        best_gain = np.zeros(width)
        best_feat = np.full(width, -1, np.int64)
        best_thr = np.zeros(width)
        best_left = np.zeros(width, np.bool_)
        gl = np.zeros(width)
        hl = np.zeros(width)
        gnm = np.zeros(width)
        hnm = np.zeros(width)
        cnm = np.zeros(width, np.int64)
        cnt = np.zeros(width, np.int64)
        for i in range(n):
            nd = node_of[i]
            if nd >= level_start and nd < level_end:
                cnt[nd - level_start] += 1
        last = np.zeros(width)
        seen = np.zeros(width, np.bool_)
        for fi in range(level_features.shape[1]):
            f = level_features[depth, fi]
            if f < 0:
                break
            gnm[:] = 0.0
            hnm[:] = 0.0
            cnm[:] = 0
            for r in range(n):
                i = order[f, r]
                nd = node_of[i]
                if nd >= level_start and nd < level_end and not np.isnan(X[i, f]):
                    gnm[nd - level_start] += grad[i]
                    hnm[nd - level_start] += hess[i]
                    cnm[nd - level_start] += 1
            gl[:] = 0.0
            hl[:] = 0.0
            seen[:] = False
            for r in range(n):
                i = order[f, r]
                x = X[i, f]
                if np.isnan(x):
                    break
                nd = node_of[i]
                if nd < level_start or nd >= level_end:
                    continue
                k = nd - level_start
                if seen[k] and x > last[k]:
                    t = 0.5 * (last[k] + x)
                    if t <= last[k]:
                        t = x
                    g_tot = G[nd]
                    h_tot = H[nd]
                    has_missing = cnm[k] < cnt[k]
                    g_miss = g_tot - gnm[k] if has_missing else 0.0
                    h_miss = h_tot - hnm[k] if has_missing else 0.0
                    parent = _score(g_tot, h_tot, lam, alpha)
                    # missing rows to the left first, right only if strictly better
                    for side in range(2):
                        if side == 0:
                            g_left = gl[k] + g_miss
                            h_left = hl[k] + h_miss
                        else:
                            if not has_missing:
                                break
                            g_left = gl[k]
                            h_left = hl[k]
                        g_right = g_tot - g_left
                        h_right = h_tot - h_left
                        if h_left < min_child_weight or h_right < min_child_weight:
                            continue
                        gain = 0.5 * (_score(g_left, h_left, lam, alpha) + _score(g_right, h_right, lam, alpha) - parent) - gamma
                        if gain > best_gain[k]:
                            best_gain[k] = gain
                            best_feat[k] = f
                            best_thr[k] = t
                            best_left[k] = side == 0
                gl[k] += grad[i]
                hl[k] += hess[i]
                last[k] = x
                seen[k] = True

        next_start = n_nodes
        for k in range(width):
            nd = level_start + k
            if best_feat[k] >= 0:
                feat[nd] = best_feat[k]
                thr[nd] = best_thr[k]
                default_left[nd] = best_left[k]
                left[nd] = n_nodes
                right[nd] = n_nodes + 1
                n_nodes += 2
        if n_nodes == next_start:
            break
        for i in range(n):
            nd = node_of[i]
            if nd >= level_start and nd < level_end and feat[nd] >= 0:
                x = X[i, feat[nd]]
                go_left = default_left[nd] if np.isnan(x) else x < thr[nd]
                child = left[nd] if go_left else right[nd]
                node_of[i] = child
                G[child] += grad[i]
                H[child] += hess[i]
        level_start = next_start
        level_end = n_nodes

    value = np.zeros(n_nodes)
    for nd in range(n_nodes):
        if feat[nd] < 0:
            d = H[nd] + lam
            g = G[nd]
            if alpha > 0.0:
                a = abs(g) - alpha
                g = 0.0 if a <= 0.0 else (a if g > 0 else -a)
            value[nd] = -g / d if d > 0.0 else 0.0
    return feat[:n_nodes], thr[:n_nodes], left[:n_nodes], right[:n_nodes], default_left[:n_nodes], value, G[:n_nodes], H[:n_nodes]


@numba.njit(cache=True)
def _predict_tree(X, feat, thr, left, right, default_left, value):
    n = X.shape[0]
    out = np.empty(n)
    for i in range(n):
        nd = 0
        while feat[nd] >= 0:
            x = X[i, feat[nd]]
            if np.isnan(x):
                nd = left[nd] if default_left[nd] else right[nd]
            elif x < thr[nd]:
                nd = left[nd]
            else:
                nd = right[nd]
        out[i] = value[nd]
    return out


# --------------------------------------------------------------------------
# model


@dataclass(frozen=True)
class Tree:
    """Flat binary tree; ``feature == -1`` marks a leaf carrying ``value``."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    default_left: np.ndarray
    value: np.ndarray
    grad_sum: np.ndarray
    hess_sum: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    @property
    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=np.int64)
        for nd in range(self.n_nodes):
            if self.feature[nd] >= 0:
                depth[self.left[nd]] = depth[self.right[nd]] = depth[nd] + 1
        return int(depth.max())

    def predict(self, X: np.ndarray) -> np.ndarray:
        return _predict_tree(X, self.feature, self.threshold, self.left, self.right, self.default_left, self.value)


@dataclass(frozen=True)
class GBDTModel:
    """Boosted ensemble; tree ``t`` contributes to output column ``t % n_outputs``.

    Leaf values are stored unshrunk; ``eta`` is applied at prediction time.
    """

    base_score: np.ndarray
    trees: tuple[Tree, ...]
    eta: float
    task: str
    n_classes: int
    n_features: int
    hyperparameters: dict = field(default_factory=dict)
    best_iteration: int = 0
    reached_max_epochs: bool = False
    val_losses: tuple[float, ...] = ()

    @property
    def n_outputs(self) -> int:
        return self.n_classes if self.task == "multiclass" else 1

    @property
    def best_epoch(self) -> int:
        return self.best_iteration

    @property
    def n_rounds(self) -> int:
        return len(self.trees) // self.n_outputs

    def raw_score(self, X: np.ndarray) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        raw = np.tile(self.base_score, (X.shape[0], 1))
        for t, tree in enumerate(self.trees):
            raw[:, t % self.n_outputs] += self.eta * tree.predict(X)
        return raw

    def predict(self, data) -> np.ndarray:
        X = nan_matrix(data) if isinstance(data, Dataset) else np.asarray(data, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got shape {X.shape}")
        return link_probabilities(self.raw_score(X), self.task)


def _grad_hess(raw: np.ndarray, y: np.ndarray, task: str):
    if task == "regression":
        return raw - y[:, None], np.ones_like(raw)
    P = link_probabilities(raw, task)
    if task == "binary":
        p = P[:, 1:2]
        return p - y[:, None], np.maximum(p * (1.0 - p), _HESS_FLOOR)
    Y = np.zeros_like(P)
    Y[np.arange(y.size), y] = 1.0
    return P - Y, np.maximum(P * (1.0 - P), _HESS_FLOOR)


def _coerce(hp: dict) -> dict:
    hp = check_hyperparameters(hp, GBDT_DEFAULTS, "gbdt")
    for k in _INT_KEYS:
        hp[k] = int(round(hp[k]))
    if hp["max_depth"] < 1 or hp["n_estimators"] < 0:
        raise HyperparameterError("max_depth must be >= 1 and n_estimators >= 0")
    for k in ("subsample", "colsample_bytree", "colsample_bylevel"):
        if not 0.0 < hp[k] <= 1.0:
            raise HyperparameterError(f"{k} must lie in (0, 1]")
    return hp


def fit_gbdt(train: Dataset, val: Dataset | None, hp: dict, seed: int = 0, early_stopping_rounds: int | None = 20) -> GBDTModel:
    """Boost trees on ``train``; with ``val`` the ensemble is cut at the best round.

    Row subsampling is drawn per tree, column subsampling per tree and again
    per level, all from a generator seeded by ``seed``.
    """
    hp = _coerce(hp)
    if train.n_samples == 0:
        raise ValueError("empty training set")
    X = np.ascontiguousarray(nan_matrix(train))
    y = train.target
    n, p = X.shape
    task = train.task
    k_out = train.n_classes if task == "multiclass" else 1
    base = prior_scores(y, task, train.n_classes)
    rng = np.random.default_rng(seed)

    order = np.empty((p, n), dtype=np.int64)
    for f in range(p):
        order[f] = np.argsort(X[:, f], kind="stable")

    raw = np.tile(base, (n, 1))
    Xv = np.ascontiguousarray(nan_matrix(val)) if val is not None else None
    raw_val = np.tile(base, (Xv.shape[0], 1)) if Xv is not None else None
    stopper = EarlyStopping(early_stopping_rounds) if (val is not None and early_stopping_rounds) else None
    val_losses: list[float] = []
    trees: list[Tree] = []
    best_round = 0
    stopped = False
    n_rows = max(1, int(round(hp["subsample"] * n)))
    n_cols = max(1, int(round(hp["colsample_bytree"] * p)))
    max_depth = hp["max_depth"]

    for rnd in range(1, hp["n_estimators"] + 1):
        grad, hess = _grad_hess(raw, y, task)
        if not (np.all(np.isfinite(grad)) and np.all(np.isfinite(hess))):
            raise DivergenceError(f"non-finite gradient in round {rnd}")
        for c in range(k_out):
            if n_rows < n:
                in_sample = np.zeros(n, dtype=np.bool_)
                in_sample[rng.choice(n, n_rows, replace=False)] = True
            else:
                in_sample = np.ones(n, dtype=np.bool_)
            tree_cols = np.sort(rng.choice(p, n_cols, replace=False)) if n_cols < p else np.arange(p)
            n_level = max(1, int(round(hp["colsample_bylevel"] * tree_cols.size)))
            levels = np.full((max_depth, tree_cols.size), -1, dtype=np.int64)
            for d in range(max_depth):
                cols = np.sort(rng.choice(tree_cols, n_level, replace=False)) if n_level < tree_cols.size else tree_cols
                levels[d, : cols.size] = cols
            arrays = _grow_tree(
                X, order, np.ascontiguousarray(grad[:, c]), np.ascontiguousarray(hess[:, c]), in_sample, levels,
                max_depth, float(hp["lambda"]), float(hp["alpha"]), float(hp["gamma"]), float(hp["min_child_weight"]),
            )
            tree = Tree(*arrays)
            trees.append(tree)
            raw[:, c] += hp["eta"] * tree.predict(X)
            if raw_val is not None:
                raw_val[:, c] += hp["eta"] * tree.predict(Xv)
        if raw_val is not None:
            loss = task_loss(link_probabilities(raw_val, task), val.target, task)
            if not math.isfinite(loss):
                raise DivergenceError(f"validation loss became {loss} in round {rnd}")
            val_losses.append(loss)
            if stopper is not None:
                improved, stop = stopper(rnd, loss)
                if improved:
                    best_round = rnd
                if stop:
                    stopped = True
                    break
        if stopper is None:
            best_round = rnd

    return GBDTModel(
        base_score=base,
        trees=tuple(trees[: best_round * k_out]),
        eta=float(hp["eta"]),
        task=task,
        n_classes=train.n_classes,
        n_features=p,
        hyperparameters=hp,
        best_iteration=best_round,
        reached_max_epochs=not stopped,
        val_losses=tuple(val_losses),
    )
