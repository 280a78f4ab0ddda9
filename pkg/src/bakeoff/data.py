"""Tabular data ingestion, standardization and train/validation/test splits.

All objects here are immutable once built: arrays are flagged read-only and
the containers are frozen dataclasses, so they can be shared between workers.
"""
from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

__all__ = [
    "DataError",
    "FeatureMeta",
    "Schema",
    "Dataset",
    "StandardizationStats",
    "Stratified",
    "Temporal",
    "Provided",
    "SplitBundle",
    "load_csv",
    "write_csv",
    "fit_standardizer",
    "standardize",
    "split",
    "one_hot_matrix",
    "nan_matrix",
    "synthetic_classification",
]

TASKS = ("binary", "multiclass", "regression")


class DataError(ValueError):
    """Raised for malformed tabular input or an impossible split request."""


def _frozen(a, dtype=None):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class FeatureMeta:
    name: str
    kind: str = "numeric"
    categories: tuple[str, ...] = ()

    @property
    def category_map(self) -> dict[str, int]:
        return {c: i for i, c in enumerate(self.categories)}


@dataclass(frozen=True)
class Schema:
    """Column roles for :func:`load_csv`.

    ``numeric=None`` means every column that is not the target, categorical
    or auxiliary is numeric. Auxiliary columns are kept (parsed as reals)
    for split policies but never become features. ``task="classification"``
    resolves to binary or multiclass from the number of observed labels.
    """

    target: str
    categorical: tuple[str, ...] = ()
    numeric: tuple[str, ...] | None = None
    aux: tuple[str, ...] = ()
    task: str = "classification"


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    target: np.ndarray
    task: str
    n_classes: int
    feature_meta: tuple[FeatureMeta, ...]
    missing_mask: np.ndarray
    class_labels: tuple[str, ...] = ()
    aux: Mapping[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        X = _frozen(self.features, np.float64)
        y = _frozen(self.target, np.int64 if self.task != "regression" else np.float64)
        mask = _frozen(self.missing_mask, bool)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "target", y)
        object.__setattr__(self, "missing_mask", mask)
        object.__setattr__(self, "aux", {k: _frozen(v, np.float64) for k, v in self.aux.items()})
        if self.task not in TASKS:
            raise DataError(f"unknown task {self.task!r}")
        if X.ndim != 2 or X.shape[0] != y.shape[0]:
            raise DataError(f"features {X.shape} do not match target length {y.shape[0]}")
        if mask.shape != X.shape:
            raise DataError("missing mask shape differs from features")
        if len(self.feature_meta) != X.shape[1]:
            raise DataError("feature_meta length differs from feature count")
        if self.task != "regression" and y.size and (y.min() < 0 or y.max() >= self.n_classes):
            raise DataError("class index outside [0, n_classes)")
        for j, meta in enumerate(self.feature_meta):
            if meta.kind == "categorical" and X.shape[0]:
                col = X[~mask[:, j], j]
                if col.size and col.max() >= len(meta.categories):
                    raise DataError(f"categorical code out of range in column {meta.name!r}")

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def is_classification(self) -> bool:
        return self.task != "regression"

    @property
    def numeric_columns(self) -> np.ndarray:
        return np.array([m.kind == "numeric" for m in self.feature_meta], dtype=bool)

    def take(self, idx) -> "Dataset":
        """Row subset sharing the schema (used as a train/val/test view)."""
        idx = np.asarray(idx, dtype=np.int64)
        return replace(
            self,
            features=self.features[idx],
            target=self.target[idx],
            missing_mask=self.missing_mask[idx],
            aux={k: v[idx] for k, v in self.aux.items()},
        )


def _parse_real(token: str, column: str, line: int) -> float:
    try:
        return float(token)
    except ValueError:
        raise DataError(f"non-numeric token {token!r} in numeric column {column!r} (line {line})") from None


def load_csv(path, schema: Schema) -> Dataset:
    """Read a header-first, comma-separated UTF-8 file into a :class:`Dataset`.

    Categorical codes and class indices are assigned in order of first
    appearance. Empty cells are recorded in ``missing_mask`` and stored as 0.0.
    """
    path = os.fspath(path)
    if not os.path.isfile(path):
        raise FileNotFoundError(f"dataset file not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: missing header row")
    header = [h.strip() for h in rows[0]]
    body = [r for r in rows[1:] if r and any(c.strip() for c in r)]
    if schema.target not in header:
        raise DataError(f"{path}: target column {schema.target!r} absent from header")
    if not body:
        raise DataError(f"{path}: zero data rows")
    for name in (*schema.categorical, *schema.aux, *(schema.numeric or ())):
        if name not in header:
            raise DataError(f"{path}: column {name!r} absent from header")

    skip = {schema.target, *schema.aux}
    if schema.numeric is None:
        feature_cols = [h for h in header if h not in skip]
    else:
        wanted = set(schema.numeric) | set(schema.categorical)
        feature_cols = [h for h in header if h in wanted]
    col_pos = {h: i for i, h in enumerate(header)}

    n, p = len(body), len(feature_cols)
    X = np.zeros((n, p))
    mask = np.zeros((n, p), dtype=bool)
    cats: list[dict[str, int]] = [dict() for _ in range(p)]
    for i, row in enumerate(body):
        if len(row) != len(header):
            raise DataError(f"{path}: line {i + 2} has {len(row)} fields, expected {len(header)}")
        for j, name in enumerate(feature_cols):
            tok = row[col_pos[name]].strip()
            if tok == "":
                mask[i, j] = True
            elif name in schema.categorical:
                X[i, j] = cats[j].setdefault(tok, len(cats[j]))
            else:
                X[i, j] = _parse_real(tok, name, i + 2)

    meta = tuple(
        FeatureMeta(name, "categorical", tuple(cats[j])) if name in schema.categorical else FeatureMeta(name)
        for j, name in enumerate(feature_cols)
    )
    aux = {}
    for name in schema.aux:
        aux[name] = np.array([_parse_real(r[col_pos[name]].strip(), name, i + 2) for i, r in enumerate(body)])

    raw_target = [r[col_pos[schema.target]].strip() for r in body]
    if any(t == "" for t in raw_target):
        raise DataError(f"{path}: empty target cell")
    if schema.task == "regression":
        y = np.array([_parse_real(t, schema.target, i + 2) for i, t in enumerate(raw_target)])
        return Dataset(X, y, "regression", 0, meta, mask, aux=aux)
    labels: dict[str, int] = {}
    y = np.array([labels.setdefault(t, len(labels)) for t in raw_target], dtype=np.int64)
    k = len(labels)
    if schema.task == "classification":
        task = "binary" if k <= 2 else "multiclass"
    elif schema.task in ("binary", "multiclass"):
        task = schema.task
    else:
        raise DataError(f"unknown task {schema.task!r}")
    return Dataset(X, y, task, max(k, 2), meta, mask, class_labels=tuple(labels), aux=aux)


def write_csv(dataset: Dataset, path, target_name: str = "target") -> None:
    """Write a dataset back in the :func:`load_csv` format.

    Categories and class labels are decoded, so loading the result with the
    matching schema reproduces the encoded matrix exactly.
    """
    header = [m.name for m in dataset.feature_meta] + list(dataset.aux) + [target_name]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(dataset.n_samples):
            cells = []
            for j, m in enumerate(dataset.feature_meta):
                if dataset.missing_mask[i, j]:
                    cells.append("")
                elif m.kind == "categorical":
                    cells.append(m.categories[int(dataset.features[i, j])])
                else:
                    cells.append(repr(float(dataset.features[i, j])))
            cells += [repr(float(v[i])) for v in dataset.aux.values()]
            if dataset.is_classification:
                t = int(dataset.target[i])
                cells.append(dataset.class_labels[t] if dataset.class_labels else str(t))
            else:
                cells.append(repr(float(dataset.target[i])))
            w.writerow(cells)


# --------------------------------------------------------------------------
# standardization


@dataclass(frozen=True)
class StandardizationStats:
    """Per-column training moments; NaN entries for categorical columns."""

    mean: np.ndarray
    std: np.ndarray
    constant: np.ndarray
    numeric: np.ndarray

    def __post_init__(self):
        for name in ("mean", "std", "constant", "numeric"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))


def fit_standardizer(dataset: Dataset, train_idx) -> StandardizationStats:
    """Population mean/std of the numeric columns over ``train_idx`` only.

    Missing cells are excluded from the moments.
    """
    train_idx = np.asarray(train_idx, dtype=np.int64)
    if train_idx.size == 0:
        raise DataError("cannot fit a standardizer on an empty training set")
    numeric = dataset.numeric_columns
    X = dataset.features[train_idx]
    present = ~dataset.missing_mask[train_idx]
    p = dataset.n_features
    mean = np.full(p, np.nan)
    std = np.full(p, np.nan)
    constant = np.zeros(p, dtype=bool)
    for j in np.flatnonzero(numeric):
        col = X[present[:, j], j]
        if col.size == 0:
            mean[j], std[j] = 0.0, 0.0
        else:
            mean[j] = col.mean()
            std[j] = np.sqrt(np.mean((col - mean[j]) ** 2))
        constant[j] = std[j] == 0.0
    return StandardizationStats(mean, std, constant, numeric)


def standardize(dataset: Dataset, stats: StandardizationStats) -> Dataset:
    """Apply ``(x - mean) / std`` to numeric columns; constant columns map to 0.

    Missing cells end at 0, i.e. imputed at the training mean.
    """
    if stats.mean.shape[0] != dataset.n_features:
        raise DataError(
            f"standardizer has {stats.mean.shape[0]} columns, dataset has {dataset.n_features}"
        )
    X = np.array(dataset.features, copy=True)
    for j in np.flatnonzero(stats.numeric):
        if stats.constant[j]:
            X[:, j] = 0.0
        else:
            X[:, j] = (X[:, j] - stats.mean[j]) / stats.std[j]
        X[dataset.missing_mask[:, j], j] = 0.0
    return replace(dataset, features=X)


# --------------------------------------------------------------------------
# learner-facing encodings


def nan_matrix(dataset: Dataset) -> np.ndarray:
    """Ordinal encoding with NaN at missing cells (the tree learner's input)."""
    X = np.array(dataset.features, copy=True)
    X[dataset.missing_mask] = np.nan
    return X


def one_hot_matrix(features: np.ndarray, missing_mask: np.ndarray, feature_meta: Sequence[FeatureMeta]) -> np.ndarray:
    """Numeric columns as-is, categorical columns expanded to indicator blocks.

    A missing categorical cell gives an all-zero block.
    """
    blocks = []
    for j, m in enumerate(feature_meta):
        if m.kind == "categorical":
            k = len(m.categories)
            codes = np.where(missing_mask[:, j], 0.0, np.nan_to_num(features[:, j])).astype(np.int64)
            block = np.zeros((features.shape[0], k))
            ok = ~missing_mask[:, j] & (codes >= 0) & (codes < k)
            block[np.flatnonzero(ok), codes[ok]] = 1.0
            blocks.append(block)
        else:
            col = np.where(missing_mask[:, j], 0.0, features[:, j])
            blocks.append(col[:, None])
    if not blocks:
        return np.zeros((features.shape[0], 0))
    return np.hstack(blocks)


# --------------------------------------------------------------------------
# splits


@dataclass(frozen=True)
class Stratified:
    """Random split with per-class proportions preserved.

    Two fractions give train/val (test supplied elsewhere); three give
    train/val/test. Regression targets are shuffled without stratification.
    """

    fractions: tuple[float, ...] = (0.7, 0.1, 0.2)


@dataclass(frozen=True)
class Temporal:
    field: str
    boundary: float
    val_tail_count: int


@dataclass(frozen=True)
class Provided:
    """Assignment file with one of train/val/test per dataset row."""

    path: str | None = None
    assignments: tuple[str, ...] | None = None


@dataclass(frozen=True)
class SplitBundle:
    train_idx: np.ndarray
    val_idx: np.ndarray
    test_idx: np.ndarray
    policy: object
    seed: int | None

    def __post_init__(self):
        for name in ("train_idx", "val_idx", "test_idx"):
            object.__setattr__(self, name, _frozen(np.sort(getattr(self, name)), np.int64))


def _apportion(total: int, fractions: np.ndarray) -> np.ndarray:
    """Largest-remainder rounding of ``total * fractions`` (ties to lower index)."""
    quota = total * fractions
    counts = np.floor(quota).astype(np.int64)
    rem = quota - counts
    order = np.argsort(-rem, kind="stable")
    counts[order[: total - counts.sum()]] += 1
    return counts


def _bounded_table(row_tot, col_tot, lo, hi):
    """Integer table with given margins and ``lo <= T <= hi`` cellwise, or None.

    Solved as a max flow from rows to columns over the slack ``hi - lo``.
    """
    from scipy.sparse import csr_matrix
    from scipy.sparse.csgraph import maximum_flow

    row_need = row_tot - lo.sum(axis=1)
    col_need = col_tot - lo.sum(axis=0)
    if np.any(row_need < 0) or np.any(col_need < 0) or row_need.sum() != col_need.sum():
        return None
    C, S = lo.shape
    src, sink = C + S, C + S + 1
    cap = np.zeros((C + S + 2, C + S + 2), dtype=np.int32)
    cap[src, :C] = row_need
    cap[:C, C : C + S] = hi - lo
    cap[C : C + S, sink] = col_need
    flow = maximum_flow(csr_matrix(cap), src, sink)
    if flow.flow_value != row_need.sum():
        return None
    F = flow.flow.toarray()[:C, C : C + S]
    return lo + np.maximum(F, 0)


def _stratified_counts(class_sizes: np.ndarray, fractions: np.ndarray) -> np.ndarray:
    """Class-by-split counts rounding ``class_size * fraction`` to floor or ceil.

    Split totals follow largest-remainder rounding of the sample count. Where
    possible each class also stays within one sample of its global share of
    every split, i.e. proportions differ from the global ones by at most
    ``1 / |split|``.
    """
    class_sizes = np.asarray(class_sizes, dtype=np.int64)
    n = int(class_sizes.sum())
    quota = np.outer(class_sizes, fractions)
    lo1, hi1 = np.floor(quota).astype(np.int64), np.ceil(quota).astype(np.int64)
    col_tot = _apportion(n, fractions)
    share = np.outer(class_sizes, col_tot) / n
    lo = np.maximum(lo1, np.ceil(share - 1 - 1e-9).astype(np.int64))
    hi = np.minimum(hi1, np.floor(share + 1 + 1e-9).astype(np.int64))
    for bounds in ((lo, hi), (lo1, hi1)):
        if np.all(bounds[0] <= bounds[1]):
            T = _bounded_table(class_sizes, col_tot, *bounds)
            if T is not None:
                return T
    raise DataError("no stratified allocation matches the split fractions")  # pragma: no cover


def split(dataset: Dataset, policy, seed: int | None = 0) -> SplitBundle:
    """Partition dataset rows according to ``policy``; deterministic in ``seed``."""
    n = dataset.n_samples
    if isinstance(policy, Stratified):
        fr = np.asarray(policy.fractions, dtype=np.float64)
        if fr.size not in (2, 3) or np.any(fr < 0) or not math.isclose(fr.sum(), 1.0, abs_tol=1e-9):
            raise DataError(f"split fractions must be 2 or 3 non-negative values summing to 1, got {policy.fractions}")
        rng = np.random.default_rng(seed)
        groups = dataset.target if dataset.is_classification else np.zeros(n, dtype=np.int64)
        classes = np.unique(groups)
        members = [np.flatnonzero(groups == c) for c in classes]
        counts = _stratified_counts(np.array([m.size for m in members]), fr)
        parts: list[list[np.ndarray]] = [[] for _ in range(fr.size)]
        for c, idx in enumerate(members):
            idx = rng.permutation(idx)
            start = 0
            for s in range(fr.size):
                parts[s].append(idx[start : start + counts[c, s]])
                start += counts[c, s]
        out = [np.concatenate(p) if p else np.zeros(0, np.int64) for p in parts]
        if len(out) == 2:
            out.append(np.zeros(0, dtype=np.int64))
        names = ("train", "val", "test")[: fr.size]
    elif isinstance(policy, Temporal):
        if policy.field not in dataset.aux:
            raise DataError(f"boundary field {policy.field!r} not present in dataset")
        col = dataset.aux[policy.field]
        early = np.flatnonzero(col < policy.boundary)
        test = np.flatnonzero(col >= policy.boundary)
        k = int(policy.val_tail_count)
        if k < 0 or k >= early.size:
            raise DataError(f"val_tail_count {k} leaves no training rows")
        out = [early[: early.size - k], early[early.size - k :], test]
        names = ("train", "val", "test")
    elif isinstance(policy, Provided):
        tags = policy.assignments
        if tags is None:
            if policy.path is None or not os.path.isfile(policy.path):
                raise FileNotFoundError(f"split assignment file not found: {policy.path}")
            with open(policy.path, encoding="utf-8") as fh:
                tags = tuple(t.strip() for t in fh if t.strip())
        if len(tags) != n:
            raise DataError(f"split assignment has {len(tags)} rows, dataset has {n}")
        tags = np.asarray(tags)
        bad = set(np.unique(tags)) - {"train", "val", "test"}
        if bad:
            raise DataError(f"unknown split labels {sorted(bad)}")
        out = [np.flatnonzero(tags == t) for t in ("train", "val", "test")]
        names = ("train", "val", "test")
    else:
        raise DataError(f"unknown split policy {policy!r}")

    for name, idx in zip(("train", "val", "test"), out):
        if name in names and idx.size == 0:
            raise DataError(f"{name} split is empty under {policy}")
    return SplitBundle(out[0], out[1], out[2], policy, seed)


# --------------------------------------------------------------------------
# synthetic data


def synthetic_classification(n_samples: int = 2000, n_features: int = 8, n_classes: int = 2,
                             seed: int = 0, noise: float = 1.0) -> Dataset:
    """Tabular task mixing linear, interaction and threshold effects.

    Scores per class combine a random linear term, pairwise products and a
    few axis-aligned steps, so tree and neural learners fit it differently.
    Labels are drawn from the softmax of the scores.
    """
    if n_features < 2 or n_classes < 2:
        raise ValueError("need at least 2 features and 2 classes")
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n_samples, n_features))
    W = rng.standard_normal((n_features, n_classes))
    scores = X @ W / math.sqrt(n_features)
    for c in range(n_classes):
        a, b = rng.choice(n_features, 2, replace=False)
        scores[:, c] += 1.5 * X[:, a] * X[:, b]
        j = rng.integers(n_features)
        scores[:, c] += 2.0 * (X[:, j] > rng.normal(scale=0.5))
    scores = scores / noise
    scores -= scores.max(axis=1, keepdims=True)
    P = np.exp(scores)
    P /= P.sum(axis=1, keepdims=True)
    u = rng.random(n_samples)[:, None]
    y = np.minimum((u > np.cumsum(P, axis=1)).sum(axis=1), n_classes - 1)
    meta = tuple(FeatureMeta(f"x{j}") for j in range(n_features))
    return Dataset(
        X, y, "binary" if n_classes == 2 else "multiclass", n_classes, meta,
        np.zeros_like(X, dtype=bool), tuple(str(c) for c in range(n_classes)),
    )
