"""Budgeted optimization loop, trial log persistence and plateau curves."""
from __future__ import annotations

import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..metrics import aggregate_seeds
from .space import SearchSpace, sample
from .tpe import TPEConfig, tpe_suggest

__all__ = [
    "DEFAULT_BUDGET",
    "TrialRecord",
    "OptimizationError",
    "OptimizeResult",
    "optimize",
    "trial_seeds",
    "format_record",
    "parse_record",
    "load_history",
    "PlateauCurve",
    "plateau_curve",
    "plateau_iteration",
]

log = logging.getLogger(__name__)

DEFAULT_BUDGET = 1000


class OptimizationError(RuntimeError):
    pass


@dataclass
class TrialRecord:
    id: int
    params: dict
    seed: int
    val_loss: float
    status: str = "ok"
    learner: str = ""
    seconds: float = 0.0
    epochs: int = 0
    test_metrics: dict = field(default_factory=dict)
    error: str = ""


@dataclass
class OptimizeResult:
    best: TrialRecord
    history: list[TrialRecord]

    def best_so_far(self) -> np.ndarray:
        return plateau_curve(self.history).mean


def trial_seeds(master_seed: int, trial_id: int) -> tuple[int, int]:
    """(suggestion seed, objective seed) for a trial, independent of run order."""
    a, b = np.random.SeedSequence([int(master_seed), int(trial_id)]).generate_state(2)
    return int(a), int(b)


# --------------------------------------------------------------------------
# persistence: one tab-separated line of key=value fields per trial


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    s = str(v)
    if any(ch in s for ch in "\t\n="):
        raise ValueError(f"value {s!r} cannot be stored in a key=value log")
    return s


def _parse(s: str):
    for cast in (int, float):
        try:
            return cast(s)
        except ValueError:
            pass
    return {"True": True, "False": False}.get(s, s)


def format_record(rec: TrialRecord) -> str:
    fields = [
        ("id", rec.id),
        ("learner", rec.learner or "-"),
        ("seed", rec.seed),
        ("status", rec.status),
        ("val_loss", rec.val_loss),
        ("epochs", rec.epochs),
    ]
    fields += [(f"p.{k}", v) for k, v in rec.params.items()]
    fields += [(f"t.{k}", v) for k, v in sorted(rec.test_metrics.items())]
    return "\t".join(f"{k}={_fmt(v)}" for k, v in fields)


def parse_record(line: str) -> TrialRecord:
    kv = {}
    for tok in line.rstrip("\n").split("\t"):
        k, sep, v = tok.partition("=")
        if not sep:
            raise ValueError(f"malformed trial field {tok!r}")
        kv[k] = v
    params = {k[2:]: _parse(v) for k, v in kv.items() if k.startswith("p.")}
    tests = {k[2:]: _parse(v) for k, v in kv.items() if k.startswith("t.")}
    learner = kv.get("learner", "-")
    return TrialRecord(
        id=int(kv["id"]),
        params=params,
        seed=int(kv["seed"]),
        val_loss=float(kv["val_loss"]),
        status=kv["status"],
        learner="" if learner == "-" else learner,
        epochs=int(kv.get("epochs", 0)),
        test_metrics=tests,
    )


def load_history(path) -> list[TrialRecord]:
    """Read a trial log; a trailing partial line from an interrupted write is dropped."""
    if not os.path.isfile(path):
        return []
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    lines = text.split("\n")
    complete = lines[:-1] if not text.endswith("\n") else lines
    records = [parse_record(l) for l in complete if l.strip()]
    timing = _timing_path(path)
    if os.path.isfile(timing):
        with open(timing, encoding="utf-8") as fh:
            secs = dict(l.split("\t") for l in fh.read().splitlines() if "\t" in l)
        for r in records:
            r.seconds = float(secs.get(str(r.id), 0.0))
    return records


def _timing_path(path) -> str:
    return os.fspath(path) + ".timing"


def _append(path, rec: TrialRecord) -> None:
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(format_record(rec) + "\n")
    # wall-clock times live beside the log so the log itself is reproducible
    with open(_timing_path(path), "a", encoding="utf-8") as fh:
        fh.write(f"{rec.id}\t{rec.seconds:.6f}\n")


# --------------------------------------------------------------------------


def _evaluate(objective, params, trial_id, seed, learner) -> TrialRecord:
    t0 = time.perf_counter()
    epochs = 0
    try:
        out = objective(params, seed)
        if isinstance(out, dict):
            loss = float(out["val_loss"])
            epochs = int(out.get("epochs", 0))
        else:
            loss = float(out)
        status, error = ("ok", "") if math.isfinite(loss) else ("failed", f"non-finite loss {loss}")
    except Exception as exc:  # a failing configuration costs one trial, not the run
        log.warning("trial %d failed: %s", trial_id, exc)
        loss, status, error = math.nan, "failed", f"{type(exc).__name__}: {exc}"
    if status == "failed":
        loss = math.nan
    return TrialRecord(trial_id, dict(params), seed, loss, status, learner, time.perf_counter() - t0, epochs, error=error)


def optimize(
    objective: Callable[[dict, int], float | dict],
    space: SearchSpace,
    budget: int = DEFAULT_BUDGET,
    seed: int = 0,
    config: TPEConfig | None = TPEConfig(),
    warm_start: dict | None = None,
    history: Sequence[TrialRecord] = (),
    log_path=None,
    learner: str = "",
    workers: int = 1,
) -> OptimizeResult:
    """Minimize ``objective(params, seed)`` over ``space`` with exactly ``budget`` trials.

    ``config=None`` gives pure random search. A ``warm_start`` configuration
    is evaluated as trial 0 of a fresh run. Trials already in ``history`` (or
    in ``log_path``) count against the budget and are not re-evaluated.
    With ``workers > 1`` trials run in batches; every suggestion in a batch
    is made against the history as it stood when the batch was dispatched.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    history = list(history)
    if log_path is not None and not history:
        history = load_history(log_path)
    history.sort(key=lambda r: r.id)
    next_id = history[-1].id + 1 if history else 0

    def suggest(trial_id, snapshot):
        s_seed, _ = trial_seeds(seed, trial_id)
        if trial_id == 0 and warm_start is not None:
            return dict(warm_start)
        if config is None:
            return sample(space, np.random.default_rng(s_seed))
        return tpe_suggest(snapshot, space, config, s_seed)

    pool = ThreadPoolExecutor(workers) if workers > 1 else None
    try:
        while len(history) < budget:
            batch = range(next_id, next_id + min(max(workers, 1), budget - len(history)))
            snapshot = list(history)
            jobs = [(i, suggest(i, snapshot), trial_seeds(seed, i)[1]) for i in batch]
            if pool is None:
                records = [_evaluate(objective, p, i, s, learner) for i, p, s in jobs]
            else:
                records = list(pool.map(lambda j: _evaluate(objective, j[1], j[0], j[2], learner), jobs))
            for rec in records:
                history.append(rec)
                if log_path is not None:
                    _append(log_path, rec)
            next_id += len(records)
    finally:
        if pool is not None:
            pool.shutdown()

    ok = [r for r in history if r.status == "ok"]
    if not ok:
        raise OptimizationError(f"all {len(history)} trials failed")
    best = min(ok, key=lambda r: (r.val_loss, r.id))
    return OptimizeResult(best, history)


# --------------------------------------------------------------------------


@dataclass(frozen=True)
class PlateauCurve:
    iterations: np.ndarray
    mean: np.ndarray
    sem: np.ndarray
    plateau_iteration: int


def _best_so_far(history: Sequence[TrialRecord]) -> np.ndarray:
    losses = np.array([r.val_loss if r.status == "ok" else np.nan for r in sorted(history, key=lambda r: r.id)])
    best = np.full(losses.size, np.nan)
    cur = np.nan
    for i, v in enumerate(losses):
        if not np.isnan(v) and (np.isnan(cur) or v < cur):
            cur = v
        best[i] = cur
    return best


def plateau_iteration(best: np.ndarray, rho: float) -> int:
    """First 1-based iteration after which the remaining relative gain is below ``rho``."""
    final = best[-1]
    for i, b in enumerate(best):
        if np.isnan(b):
            continue
        gain = (b - final) / abs(b) if b != 0 else 0.0
        if gain < rho:
            return i + 1
    return len(best)


def plateau_curve(histories, rho: float = 0.01) -> PlateauCurve:
    """Best-so-far validation loss per iteration.

    ``histories`` is one trial list or a list of them (one per seed); with
    several, curves are cut to the shortest and reported as mean and SEM.
    """
    if len(histories) == 0:
        raise ValueError("empty history")
    runs = histories if isinstance(histories[0], (list, tuple)) else [histories]
    curves = [_best_so_far(h) for h in runs]
    n = min(c.size for c in curves)
    if n == 0:
        raise ValueError("empty history")
    stack = np.vstack([c[:n] for c in curves])
    mean = np.empty(n)
    sem = np.empty(n)
    for i in range(n):
        col = stack[:, i]
        col = col[~np.isnan(col)]
        if col.size:
            agg = aggregate_seeds(col)
            mean[i], sem[i] = agg["mean"], agg["sem"]
        else:
            mean[i] = sem[i] = np.nan
    return PlateauCurve(np.arange(1, n + 1), mean, sem, plateau_iteration(mean, rho))
