"""Adapter for predictors that run as separate processes.

Protocol::

    CMD fit <train.csv> <val.csv> <hp-file> <model-out>
    CMD predict <model> <features.csv> <preds-out.csv>

Train/val CSVs carry a header of feature names plus ``target``; cells are the
encoded, standardized values with missing cells left empty. The hp file has
one ``key=value`` per line. Predictions come back as header-less CSV, one row
per input row: class probabilities for classification, a scalar for
regression.
"""
from __future__ import annotations

import csv
import os
import subprocess
import tempfile
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..data import Dataset

__all__ = ["ExternalLearnerError", "ExternalLearner", "ExternalModel", "write_matrix_csv", "read_predictions"]

ROW_SUM_TOL = 1e-6


class ExternalLearnerError(RuntimeError):
    pass


def _cell(v: float, missing: bool) -> str:
    return "" if missing else repr(float(v))


def write_matrix_csv(path, features, missing_mask, names, target=None) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(names) + (["target"] if target is not None else []))
        for i in range(features.shape[0]):
            row = [_cell(features[i, j], missing_mask[i, j]) for j in range(features.shape[1])]
            if target is not None:
                row.append(repr(target[i].item()))
            w.writerow(row)


def read_predictions(path, n_rows: int, task: str, n_classes: int) -> np.ndarray:
    """Parse and validate a predictions file; near-normalized rows are renormalized."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = [r for r in csv.reader(fh) if r]
        P = np.array([[float(c) for c in r] for r in rows], dtype=np.float64)
    except (OSError, ValueError) as exc:
        raise ExternalLearnerError(f"malformed predictions file {path}: {exc}") from None
    if P.shape[0] != n_rows:
        raise ExternalLearnerError(f"row-count mismatch: {P.shape[0]} prediction rows for {n_rows} samples")
    if n_rows == 0:
        return P.reshape(0, n_classes) if task != "regression" else P.reshape(0)
    if P.ndim != 2 or not np.all(np.isfinite(P)):
        raise ExternalLearnerError("malformed predictions: ragged or non-finite rows")
    if task == "regression":
        if P.shape[1] != 1:
            raise ExternalLearnerError(f"expected one value per row, got {P.shape[1]}")
        return P[:, 0]
    if P.shape[1] != n_classes:
        raise ExternalLearnerError(f"expected {n_classes} probabilities per row, got {P.shape[1]}")
    sums = P.sum(axis=1)
    if np.any(P < -ROW_SUM_TOL) or np.any(np.abs(sums - 1.0) > ROW_SUM_TOL):
        raise ExternalLearnerError("prediction rows are not probability distributions within 1e-6")
    P = np.clip(P, 0.0, None)
    return P / P.sum(axis=1, keepdims=True)


def _run(cmd: Sequence[str]):
    proc = subprocess.run(list(cmd), capture_output=True, text=True)
    if proc.returncode != 0:
        raise ExternalLearnerError(
            f"command {' '.join(cmd)!r} exited with status {proc.returncode}: {proc.stderr.strip()[-500:]}"
        )


@dataclass(frozen=True)
class ExternalModel:
    command: tuple[str, ...]
    model_path: str
    workdir: str
    task: str
    n_classes: int
    feature_names: tuple[str, ...]
    hyperparameters: dict = field(default_factory=dict)
    best_epoch: int = 0

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def predict(self, data) -> np.ndarray:
        if isinstance(data, Dataset):
            X, mask = data.features, data.missing_mask
        else:
            X = np.asarray(data, dtype=np.float64)
            mask = np.isnan(X)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got shape {X.shape}")
        with tempfile.TemporaryDirectory(dir=self.workdir) as tmp:
            feats = os.path.join(tmp, "features.csv")
            out = os.path.join(tmp, "preds.csv")
            write_matrix_csv(feats, X, mask, self.feature_names)
            _run([*self.command, "predict", self.model_path, feats, out])
            if not os.path.isfile(out):
                raise ExternalLearnerError(f"predictor wrote no output file {out}")
            return read_predictions(out, X.shape[0], self.task, self.n_classes)


@dataclass(frozen=True)
class ExternalLearner:
    """A learner reached through a command line (see module docstring)."""

    command: tuple[str, ...]
    name: str = "external"
    workdir: str | None = None

    def fit(self, train: Dataset, val: Dataset | None, hp: dict, seed: int = 0) -> ExternalModel:
        if train.n_samples == 0:
            raise ValueError("empty training set")
        # without a validation split the training rows stand in for it
        val = train if val is None else val
        workdir = self.workdir or tempfile.mkdtemp(prefix=f"{self.name}-")
        os.makedirs(workdir, exist_ok=True)
        fd, model_path = tempfile.mkstemp(prefix="model-", dir=workdir)
        os.close(fd)
        names = [m.name for m in train.feature_meta]
        with tempfile.TemporaryDirectory(dir=workdir) as tmp:
            tr = os.path.join(tmp, "train.csv")
            va = os.path.join(tmp, "val.csv")
            hp_path = os.path.join(tmp, "hp.txt")
            write_matrix_csv(tr, train.features, train.missing_mask, names, train.target)
            write_matrix_csv(va, val.features, val.missing_mask, names, val.target)
            with open(hp_path, "w", encoding="utf-8") as fh:
                for k in sorted(hp):
                    fh.write(f"{k}={hp[k]!r}\n")
                fh.write(f"seed={seed}\n")
            _run([*self.command, "fit", tr, va, hp_path, model_path])
        return ExternalModel(tuple(self.command), model_path, workdir, train.task, train.n_classes, tuple(names), dict(hp))
