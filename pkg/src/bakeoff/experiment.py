"""Experiment configuration and the tune -> train -> ensemble -> report pipeline.

A configuration is an INI file::

    [dataset]
    path = data.csv
    target = label
    categorical = colour, shape
    task = classification

    [split]
    policy = stratified
    fractions = 0.7, 0.1, 0.2

    [hpo]
    budget = 50

    [learner:gbdt]
    kind = gbdt
    space = gbdt_desk

Everything a stage produces lands in the output directory, so stages can
run as separate processes and an interrupted tune resumes from its log.
"""
from __future__ import annotations

import configparser
import csv
import logging
import os
import shlex
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import ensemble as ens
from .data import Dataset, Provided, Schema, SplitBundle, Stratified, Temporal, fit_standardizer, load_csv, split, standardize
from .hpo import TPEConfig, load_history, optimize, plateau_curve, preset
from .learners import ExternalLearner, NATIVE_LEARNERS, default_hyperparameters, fit
from .metrics import aggregate_seeds, squared_error, task_loss
from .report import CE_FACTOR, emit_curves, report_table

__all__ = [
    "ExperimentError",
    "LearnerConfig",
    "ExperimentConfig",
    "ExperimentReport",
    "load_config",
    "prepare",
    "tune",
    "train",
    "build_ensembles",
    "curves",
    "report",
    "run",
    "final_seeds",
]

log = logging.getLogger(__name__)

SEED_ENV = "BAKEOFF_SEED"


class ExperimentError(RuntimeError):
    pass


@dataclass(frozen=True)
class LearnerConfig:
    name: str
    kind: str = ""
    command: str = ""
    space: str = ""

    def learner(self):
        if self.command:
            return ExternalLearner(shlex.split(self.command), self.name)
        return self.kind

    def search_space(self):
        if self.space:
            return preset(self.space)
        from .hpo import NATIVE_PRESET

        if self.kind in NATIVE_PRESET:
            return preset(NATIVE_PRESET[self.kind])
        raise ExperimentError(f"learner {self.name!r}: no search space given")


@dataclass(frozen=True)
class ExperimentConfig:
    dataset_path: str
    schema: Schema
    learners: tuple[LearnerConfig, ...]
    name: str = "dataset"
    split_policy: object = Stratified()
    split_seed: int = 0
    budget: int = 50
    workers: int = 1
    algorithm: str = "tpe"
    warm_start: bool = True
    patience: int = 20
    max_epochs: int = 300
    seeds: tuple[int, ...] = ()
    seed_count: int = 4
    ensemble_mode: str = "weighted"
    subset_strategy: str = "validation-loss"
    subset_k: int = 0
    retrain_full: bool = False
    standardize: bool = True
    master_seed: int = 0
    out_dir: str = "out"

    def __post_init__(self):
        if not self.learners:
            raise ExperimentError("at least one learner is required")
        if self.budget < 1:
            raise ExperimentError("hpo budget must be >= 1")
        if self.seed_count < 1 and not self.seeds:
            raise ExperimentError("seed count must be >= 1")
        names = [l.name for l in self.learners]
        if len(set(names)) != len(names):
            raise ExperimentError("learner names must be unique")
        for l in self.learners:
            if not l.command and l.kind not in NATIVE_LEARNERS:
                raise ExperimentError(f"learner {l.name!r}: unknown kind {l.kind!r}")
        if self.algorithm not in ("tpe", "random"):
            raise ExperimentError(f"unknown hpo algorithm {self.algorithm!r}")

    @property
    def final_seeds(self) -> tuple[int, ...]:
        return self.seeds or final_seeds(self.master_seed, self.seed_count)

    def learner_dir(self, name) -> str:
        return os.path.join(self.out_dir, name)


def final_seeds(master_seed: int, count: int) -> tuple[int, ...]:
    # a separate stream from the per-trial seeds
    return tuple(int(s) for s in np.random.SeedSequence([int(master_seed), 2**31, count]).generate_state(count))


def _split_list(s: str) -> tuple[str, ...]:
    return tuple(t.strip() for t in s.split(",") if t.strip())


def load_config(path, out_dir=None, workers=None, env=None) -> ExperimentConfig:
    """Parse an INI configuration; ``BAKEOFF_SEED`` in ``env`` overrides the master seed."""
    if not os.path.isfile(path):
        raise FileNotFoundError(f"config file not found: {path}")
    cp = configparser.ConfigParser()
    cp.read(path, encoding="utf-8")
    base = os.path.dirname(os.path.abspath(path))
    env = os.environ if env is None else env

    def get(section, key, fallback=None, cast=str):
        if not cp.has_option(section, key):
            return fallback
        raw = cp.get(section, key).strip()
        if cast is bool:
            return cp.getboolean(section, key)
        return cast(raw)

    if not cp.has_section("dataset"):
        raise ExperimentError("config lacks a [dataset] section")
    ds_path = get("dataset", "path")
    if not ds_path:
        raise ExperimentError("[dataset] path is required")
    if not os.path.isabs(ds_path):
        ds_path = os.path.join(base, ds_path)
    schema = Schema(
        target=get("dataset", "target", "target"),
        categorical=_split_list(get("dataset", "categorical", "")),
        numeric=_split_list(get("dataset", "numeric")) if cp.has_option("dataset", "numeric") else None,
        aux=_split_list(get("dataset", "aux", "")),
        task=get("dataset", "task", "classification"),
    )

    kind = get("split", "policy", "stratified")
    if kind == "stratified":
        policy = Stratified(tuple(float(f) for f in _split_list(get("split", "fractions", "0.7,0.1,0.2"))))
    elif kind == "temporal":
        policy = Temporal(get("split", "field"), get("split", "boundary", cast=float), get("split", "val_tail_count", cast=int))
    elif kind == "provided":
        p = get("split", "assignments")
        policy = Provided(p if os.path.isabs(p) else os.path.join(base, p))
    else:
        raise ExperimentError(f"unknown split policy {kind!r}")

    learners = []
    for sec in cp.sections():
        if sec.startswith("learner:"):
            name = sec.split(":", 1)[1].strip()
            learners.append(LearnerConfig(name, get(sec, "kind", name if name in NATIVE_LEARNERS else ""),
                                          get(sec, "command", ""), get(sec, "space", "")))

    master = get("run", "master_seed", 0, int)
    if env.get(SEED_ENV, "").strip():
        master = int(env[SEED_ENV])
    out = out_dir or get("run", "out", "out")
    if not os.path.isabs(out) and out_dir is None:
        out = os.path.join(base, out)
    seeds = tuple(int(s) for s in _split_list(get("seeds", "list", "")))
    return ExperimentConfig(
        dataset_path=ds_path,
        schema=schema,
        learners=tuple(learners),
        name=get("dataset", "name", os.path.splitext(os.path.basename(ds_path))[0]),
        split_policy=policy,
        split_seed=get("split", "seed", master, int),
        budget=get("hpo", "budget", 50, int),
        workers=workers if workers is not None else get("hpo", "workers", 1, int),
        algorithm=get("hpo", "algorithm", "tpe"),
        warm_start=get("hpo", "warm_start", True, bool),
        patience=get("hpo", "patience", 20, int),
        max_epochs=get("hpo", "max_epochs", 300, int),
        seeds=seeds,
        seed_count=get("seeds", "count", len(seeds) or 4, int),
        ensemble_mode=get("ensemble", "mode", "weighted"),
        subset_strategy=get("ensemble", "strategy", "validation-loss"),
        subset_k=get("ensemble", "k", 0, int),
        retrain_full=get("run", "retrain_full", False, bool),
        standardize=get("run", "standardize", True, bool),
        master_seed=master,
        out_dir=out,
    )


# --------------------------------------------------------------------------
# stages


@dataclass(frozen=True)
class Prepared:
    train: Dataset
    val: Dataset
    test: Dataset
    bundle: SplitBundle

    @property
    def task(self) -> str:
        return self.train.task


def prepare(config: ExperimentConfig) -> Prepared:
    """Load, split and standardize with statistics from the training rows only."""
    data = load_csv(config.dataset_path, config.schema)
    bundle = split(data, config.split_policy, config.split_seed)
    if bundle.test_idx.size == 0:
        raise ExperimentError("the split produced no test rows; use three fractions or another policy")
    if config.standardize:
        data = standardize(data, fit_standardizer(data, bundle.train_idx))
    return Prepared(data.take(bundle.train_idx), data.take(bundle.val_idx), data.take(bundle.test_idx), bundle)


def _trial_log(config, name) -> str:
    return os.path.join(config.learner_dir(name), "trials.log")


def _model_epochs(model) -> int:
    return int(getattr(model, "best_epoch", 0) or 0)


def tune(config: ExperimentConfig, prep: Prepared | None = None, resume: bool = True) -> dict:
    """Run the HPO budget for every learner; returns ``name -> OptimizeResult``."""
    prep = prep or prepare(config)
    results = {}
    for lc in config.learners:
        os.makedirs(config.learner_dir(lc.name), exist_ok=True)
        path = _trial_log(config, lc.name)
        done = load_history(path)
        if done and not resume:
            raise ExperimentError(f"{path} already holds {len(done)} trials; resume or choose another output directory")
        space = lc.search_space()
        learner = lc.learner()

        def objective(params, seed, learner=learner):
            model = fit(learner, prep.train, prep.val, params, seed, config.patience, config.max_epochs)
            loss = task_loss(model.predict(prep.val), prep.val.target, prep.task)
            return {"val_loss": loss, "epochs": _model_epochs(model)}

        warm = None
        if config.warm_start and lc.kind in NATIVE_LEARNERS:
            defaults = default_hyperparameters(lc.kind)
            warm = defaults if space.contains(defaults) else None
        res = optimize(
            objective, space, config.budget, config.master_seed,
            TPEConfig() if config.algorithm == "tpe" else None,
            warm_start=warm, history=done, log_path=path, learner=lc.name, workers=config.workers,
        )
        log.info("%s: best validation loss %.6g (trial %d)", lc.name, res.best.val_loss, res.best.id)
        results[lc.name] = res
    return results


def _best_trial(config, name):
    ok = [r for r in load_history(_trial_log(config, name)) if r.status == "ok"]
    if not ok:
        raise ExperimentError(f"no successful trials for {name!r}; run tune first")
    return min(ok, key=lambda r: (r.val_loss, r.id))


def _test_metrics(preds, test: Dataset) -> dict:
    if test.task == "regression":
        return squared_error(preds, test.target)
    return {"ce": task_loss(preds, test.target, test.task)}


def train(config: ExperimentConfig, prep: Prepared | None = None) -> dict:
    """Retrain each learner's best configuration under every final seed.

    Writes ``<learner>/final.csv`` and per-seed validation/test predictions.
    Returns ``name -> list of per-seed rows``.
    """
    prep = prep or prepare(config)
    out = {}
    for lc in config.learners:
        best = _best_trial(config, lc.name)
        train_set, val_set, epochs = prep.train, prep.val, None
        if config.retrain_full:
            # fold validation rows back in; the epoch count comes from the tuned trial
            train_set = _concat(prep.train, prep.val)
            val_set, epochs = None, max(best.epochs, 1)
        rows = []
        for s in config.final_seeds:
            model = fit(lc.learner(), train_set, val_set, best.params, s, config.patience, config.max_epochs, epochs)
            pv, pt = model.predict(prep.val), model.predict(prep.test)
            row = {"seed": s, "val_loss": task_loss(pv, prep.val.target, prep.task), "test_loss": task_loss(pt, prep.test.target, prep.task)}
            row.update({f"test_{k}": v for k, v in _test_metrics(pt, prep.test).items()})
            rows.append(row)
            np.savez(os.path.join(config.learner_dir(lc.name), f"preds_{s}.npz"), val=pv, test=pt)
        _write_rows(os.path.join(config.learner_dir(lc.name), "final.csv"), rows)
        out[lc.name] = rows
    return out


def _concat(a: Dataset, b: Dataset) -> Dataset:
    from dataclasses import replace

    return replace(
        a,
        features=np.vstack([a.features, b.features]),
        target=np.concatenate([a.target, b.target]),
        missing_mask=np.vstack([a.missing_mask, b.missing_mask]),
        aux={k: np.concatenate([a.aux[k], b.aux[k]]) for k in a.aux},
    )


def _write_rows(path, rows: Sequence[dict]) -> None:
    keys = list(rows[0])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(keys)
        for r in rows:
            w.writerow([repr(float(r[k])) if isinstance(r[k], float) else r[k] for k in keys])


def _read_rows(path) -> list[dict]:
    if not os.path.isfile(path):
        raise ExperimentError(f"{path} not found; run the earlier stages first")
    with open(path, encoding="utf-8", newline="") as fh:
        return [{k: (int(v) if k == "seed" else float(v)) for k, v in r.items()} for r in csv.DictReader(fh)]


def _load_preds(config, name, seed):
    path = os.path.join(config.learner_dir(name), f"preds_{seed}.npz")
    if not os.path.isfile(path):
        raise ExperimentError(f"{path} not found; run train first")
    with np.load(path) as z:
        return z["val"], z["test"]


def build_ensembles(config: ExperimentConfig, prep: Prepared | None = None) -> dict:
    """Combine the learners seed by seed; writes ``ensemble.csv`` and weights.

    Returns ``{"rows": per-seed rows, "subset": {strategy: (K, seeds) loss array}}``.
    """
    prep = prep or prepare(config)
    names = [l.name for l in config.learners]
    K = len(names)
    if K < 2:
        raise ExperimentError("an ensemble needs at least two learners")
    k = config.subset_k or K
    rows, subset = [], {s: [] for s in ens.STRATEGIES}
    for seed in config.final_seeds:
        preds = [_load_preds(config, n, seed) for n in names]
        val_losses = [task_loss(pv, prep.val.target, prep.task) for pv, _ in preds]
        vals, tests = [p[0] for p in preds], [p[1] for p in preds]
        if k < K:
            chosen = ens.select_subset(val_losses, config.subset_strategy, k, seed, vals)
            if chosen.ndim == 2:
                raise ExperimentError("per-example subsets are reported through subset curves only")
            vals, tests = [vals[i] for i in chosen], [tests[i] for i in chosen]
            sub_losses = [val_losses[i] for i in chosen]
        else:
            sub_losses = val_losses
        row = {"seed": seed}
        for mode in ("uniform", "weighted"):
            w = np.full(len(vals), 1.0 / len(vals)) if mode == "uniform" else ens.compute_weights(sub_losses)
            cv, ct = ens.combine_weighted(vals, w), ens.combine_weighted(tests, w)
            row[f"{mode}_val_loss"] = task_loss(cv, prep.val.target, prep.task)
            row[f"{mode}_test_loss"] = task_loss(ct, prep.test.target, prep.task)
            if mode == "weighted":
                ens.write_weights(os.path.join(config.out_dir, f"weights_{seed}.csv"), names if k == K else
                                  [names[i] for i in chosen], w)
        rows.append(row)
        all_tests = [p[1] for p in preds]
        for strat in ens.STRATEGIES:
            c = ens.subset_curve(all_tests, prep.test.target, prep.task, val_losses, strat, seed)
            subset[strat].append(c.loss)
    _write_rows(os.path.join(config.out_dir, "ensemble.csv"), rows)
    return {"rows": rows, "subset": {s: np.array(v) for s, v in subset.items() if v}}


def curves(config: ExperimentConfig, subset: dict | None = None) -> list[str]:
    """Write HPO plateau curves and subset-size curves under ``curves/``."""
    d = os.path.join(config.out_dir, "curves")
    os.makedirs(d, exist_ok=True)
    written = []
    for lc in config.learners:
        hist = load_history(_trial_log(config, lc.name))
        if not hist:
            continue
        pc = plateau_curve(hist)
        path = os.path.join(d, f"hpo_{lc.name}.csv")
        emit_curves(path, pc.iterations, pc.mean, pc.sem)
        written.append(path)
    for strat, losses in (subset or {}).items():
        agg = [aggregate_seeds(losses[:, j]) for j in range(losses.shape[1])]
        path = os.path.join(d, f"subset_{strat}.csv")
        emit_curves(path, np.arange(1, losses.shape[1] + 1), [a["mean"] for a in agg], [a["sem"] for a in agg])
        written.append(path)
    return written


@dataclass
class ExperimentReport:
    table: str
    test: dict
    val: dict
    ensemble_rows: list = field(default_factory=list)
    best_trials: dict = field(default_factory=dict)


def report(config: ExperimentConfig, task: str | None = None) -> ExperimentReport:
    """Render the mean ± SEM table from persisted results; writes ``report.md``."""
    task = task or ("regression" if config.schema.task == "regression" else "classification")
    regression = task == "regression"
    metric = "test_loss"  # MSE for regression, cross-entropy otherwise
    test, val = {}, {}
    for lc in config.learners:
        rows = _read_rows(os.path.join(config.learner_dir(lc.name), "final.csv"))
        a = aggregate_seeds([r[metric] for r in rows])
        test[lc.name] = (a["mean"], a["sem"])
        val[lc.name] = float(np.mean([r["val_loss"] for r in rows]))
    ens_rows = []
    path = os.path.join(config.out_dir, "ensemble.csv")
    if len(config.learners) > 1 and os.path.isfile(path):
        ens_rows = _read_rows(path)
        for mode in ("uniform", "weighted"):
            a = aggregate_seeds([r[f"{mode}_test_loss"] for r in ens_rows])
            test[f"ensemble ({mode})"] = (a["mean"], a["sem"])
            val[f"ensemble ({mode})"] = float(np.mean([r[f"{mode}_val_loss"] for r in ens_rows]))
    table = report_table({config.name: test}, {config.name: 1.0 if regression else CE_FACTOR})
    with open(os.path.join(config.out_dir, "report.md"), "w", encoding="utf-8") as fh:
        fh.write(table)
    return ExperimentReport(table, test, val, ens_rows)


def run(config: ExperimentConfig, resume: bool = True) -> ExperimentReport:
    """Full protocol: tune, retrain under the final seeds, ensemble, curves, report."""
    try:
        os.makedirs(config.out_dir, exist_ok=True)
    except OSError as exc:
        raise ExperimentError(f"cannot create output directory {config.out_dir}: {exc}") from exc
    if not os.access(config.out_dir, os.W_OK):
        raise ExperimentError(f"output directory {config.out_dir} is not writable")
    prep = prepare(config)
    hpo = tune(config, prep, resume)
    train(config, prep)
    subset = build_ensembles(config, prep)["subset"] if len(config.learners) > 1 else None
    curves(config, subset)
    rep = report(config, "regression" if prep.task == "regression" else "classification")
    rep.best_trials = {n: r.best for n, r in hpo.items()}
    return rep
