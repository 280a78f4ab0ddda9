"""Result tables, curve files and cross-dataset comparison.

Table cells read ``mean ± sem`` with two decimals. Cross-entropy cells are
multiplied by 100 before formatting, and the lowest mean per dataset is
bolded.
"""
from __future__ import annotations

import csv
import os
import re
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .metrics import ComparisonMatrix, pairwise_friedman, relative_deterioration

__all__ = [
    "CE_FACTOR",
    "format_cell",
    "report_table",
    "parse_table",
    "emit_curves",
    "read_curves",
    "ComparisonReport",
    "compare",
    "read_long_csv",
    "comparison_matrix",
]

CE_FACTOR = 100.0
PM = "±"


def format_cell(mean: float, sem: float, scale: float = 1.0) -> str:
    return f"{mean * scale:.2f} {PM} {sem * scale:.2f}"


def report_table(results: Mapping[str, Mapping[str, tuple[float, float]]], scales: Mapping[str, float] | None = None,
                 models: Sequence[str] | None = None) -> str:
    """Markdown table with one row per model and one column per dataset.

    ``results[dataset][model] = (mean, sem)`` in raw units; ``scales``
    maps a dataset to its display factor (``CE_FACTOR`` for cross-entropy).
    The best mean in each column is wrapped in ``**``; absent cells show ``-``.
    """
    if not results:
        raise ValueError("no results to report")
    datasets = list(results)
    scales = dict(scales or {})
    if models is None:
        models = []
        for d in datasets:
            models += [m for m in results[d] if m not in models]
    lines = [
        "| Model | " + " | ".join(datasets) + " |",
        "|---|" + "---|" * len(datasets),
    ]
    best = {d: min(v[0] for v in results[d].values()) for d in datasets if results[d]}
    for m in models:
        cells = []
        for d in datasets:
            if m not in results[d]:
                cells.append("-")
                continue
            mean, sem = results[d][m]
            cell = format_cell(mean, sem, scales.get(d, 1.0))
            cells.append(f"**{cell}**" if mean == best[d] else cell)
        lines.append(f"| {m} | " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


_CELL = re.compile(rf"^\**(-?[0-9.]+) {PM} ([0-9.]+)\**$")


def parse_table(text: str) -> dict[str, dict[str, tuple[float, float]]]:
    """Inverse of :func:`report_table` on displayed (scaled) values."""
    rows = [l.strip() for l in text.strip().splitlines() if l.strip().startswith("|")]
    if len(rows) < 2:
        raise ValueError("not a result table")
    split = lambda l: [c.strip() for c in l.strip("|").split("|")]
    datasets = split(rows[0])[1:]
    out: dict = {d: {} for d in datasets}
    for line in rows[2:]:
        cells = split(line)
        for d, c in zip(datasets, cells[1:]):
            if c == "-":
                continue
            m = _CELL.match(c)
            if m is None:
                raise ValueError(f"unparseable cell {c!r}")
            out[d][cells[0]] = (float(m.group(1)), float(m.group(2)))
    return out


def emit_curves(path, x, mean, sem) -> None:
    """Write ``x,mean,sem`` rows; nothing is written for an empty series."""
    x, mean, sem = (np.asarray(a).reshape(-1) for a in (x, mean, sem))
    if x.size == 0:
        raise ValueError("empty series")
    if not (x.size == mean.size == sem.size):
        raise ValueError("x, mean and sem lengths differ")
    rows = [f"{int(a) if float(a).is_integer() else repr(float(a))},{float(m)!r},{float(s)!r}"
            for a, m, s in zip(x, mean, sem)]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("x,mean,sem\n" + "\n".join(rows) + "\n")


def read_curves(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0], data[:, 1], data[:, 2]


# --------------------------------------------------------------------------
# comparison across datasets


def read_long_csv(path, value: str) -> dict[tuple[str, str], str]:
    """``(model, dataset) -> value`` from a CSV with ``model,dataset,<value>`` columns."""
    if not os.path.isfile(path):
        raise FileNotFoundError(f"file not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if rows and not {"model", "dataset", value} <= set(rows[0]):
        raise ValueError(f"{path}: expected columns model,dataset,{value}")
    return {(r["model"].strip(), r["dataset"].strip()): r[value].strip() for r in rows}


def comparison_matrix(losses: Mapping[tuple[str, str], float], unseen: Mapping[tuple[str, str], object]) -> ComparisonMatrix:
    """Grid from long-form mappings; unseen entries absent from the mask are False."""
    models = sorted({m for m, _ in losses})
    datasets = sorted({d for _, d in losses})
    extra = set(unseen) - set(losses)
    if extra:
        raise ValueError(f"unseen mask names cells with no loss: {sorted(extra)[:3]}")
    L = np.full((len(models), len(datasets)), np.nan)
    U = np.zeros_like(L, dtype=bool)
    for (m, d), v in losses.items():
        L[models.index(m), datasets.index(d)] = float(v)
    for (m, d), v in unseen.items():
        U[models.index(m), datasets.index(d)] = str(v).strip().lower() in ("1", "true", "yes")
    if np.isnan(L).any():
        raise ValueError("loss grid has missing model/dataset cells")
    return ComparisonMatrix(L, U, tuple(models), tuple(datasets))


@dataclass(frozen=True)
class ComparisonReport:
    deterioration: dict
    omitted: tuple
    pvalues: np.ndarray
    models: tuple
    alpha: float
    text: str


def compare(matrix: ComparisonMatrix, alpha: float = 0.05) -> ComparisonReport:
    """Relative deterioration per model plus pairwise Friedman p-values."""
    if len(matrix.models) < 2 or len(matrix.datasets) < 2:
        raise ValueError("comparison needs at least 2 models and 2 datasets")
    det, omitted = {}, []
    for m in matrix.models:
        if matrix.unseen[matrix.row(m)].any():
            det[m] = relative_deterioration(matrix, m)
        else:
            omitted.append(m)
    P = pairwise_friedman(matrix.losses, alpha)
    lines = ["| Model | Deterioration (%) |", "|---|---|"]
    lines += [f"| {m} | {v:.2f} |" for m, v in det.items()]
    for m in omitted:
        lines.append(f"\nnote: {m} has no unseen datasets and is omitted")
    lines += ["", f"Pairwise Friedman p-values (* = reject at {1 - alpha:.0%})", ""]
    lines.append("| | " + " | ".join(matrix.models) + " |")
    lines.append("|---|" + "---|" * len(matrix.models))
    for i, m in enumerate(matrix.models):
        cells = [f"{P[i, j]:.4f}{'*' if i != j and P[i, j] < alpha else ''}" for j in range(len(matrix.models))]
        lines.append(f"| {m} | " + " | ".join(cells) + " |")
    return ComparisonReport(det, tuple(omitted), P, matrix.models, alpha, "\n".join(lines) + "\n")
