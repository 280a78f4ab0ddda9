"""Command-line entry point: ``bakeoff <stage> --config PATH [--out DIR]``."""
from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from . import experiment as ex
from .data import DataError
from .report import compare, comparison_matrix, read_long_csv

STAGES = ("ingest", "tune", "train", "ensemble", "compare", "report", "curves", "run")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bakeoff", description="Tune, train, ensemble and compare tabular learners.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name in STAGES:
        s = sub.add_parser(name)
        if name == "compare":
            s.add_argument("--results", required=True, help="CSV with model,dataset,loss columns")
            s.add_argument("--unseen", required=True, help="CSV with model,dataset,unseen columns")
            s.add_argument("--alpha", type=float, default=0.05)
            s.add_argument("--out", help="directory for comparison.md")
            continue
        s.add_argument("--config", required=True)
        s.add_argument("--out", help="output directory (overrides the config)")
        s.add_argument("--workers", type=int, help="parallel HPO trials")
        s.add_argument("--resume", action="store_true", help="continue trial logs already in the output directory")
    return p


def _ingest(cfg: ex.ExperimentConfig) -> str:
    prep = ex.prepare(cfg)
    os.makedirs(cfg.out_dir, exist_ok=True)
    path = os.path.join(cfg.out_dir, "dataset.npz")
    b = prep.bundle
    np.savez(path, train_idx=b.train_idx, val_idx=b.val_idx, test_idx=b.test_idx)
    return (f"{cfg.name}: task {prep.task}, {prep.train.n_features} features, "
            f"{b.train_idx.size}/{b.val_idx.size}/{b.test_idx.size} train/val/test rows")


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "compare":
            losses = {k: float(v) for k, v in read_long_csv(args.results, "loss").items()}
            res = compare(comparison_matrix(losses, read_long_csv(args.unseen, "unseen")), args.alpha)
            if args.out:
                os.makedirs(args.out, exist_ok=True)
                with open(os.path.join(args.out, "comparison.md"), "w", encoding="utf-8") as fh:
                    fh.write(res.text)
            print(res.text, end="")
            return 0

        cfg = ex.load_config(args.config, out_dir=args.out, workers=args.workers)
        if args.command == "ingest":
            print(_ingest(cfg))
        elif args.command == "tune":
            for name, r in ex.tune(cfg, resume=args.resume).items():
                print(f"{name}: best val loss {r.best.val_loss:.6g} at trial {r.best.id} of {len(r.history)}")
        elif args.command == "train":
            for name, rows in ex.train(cfg).items():
                print(f"{name}: {len(rows)} seeds trained")
        elif args.command == "ensemble":
            res = ex.build_ensembles(cfg)
            for r in res["rows"]:
                print(f"seed {r['seed']}: weighted test loss {r['weighted_test_loss']:.6g}")
        elif args.command == "curves":
            for path in ex.curves(cfg, ex.build_ensembles(cfg)["subset"] if len(cfg.learners) > 1 else None):
                print(path)
        elif args.command == "report":
            print(ex.report(cfg).table, end="")
        elif args.command == "run":
            if not args.resume and any(os.path.isfile(ex._trial_log(cfg, l.name)) for l in cfg.learners):
                raise ex.ExperimentError(f"{cfg.out_dir} already holds trial logs; pass --resume to continue them")
            print(ex.run(cfg, resume=True).table, end="")
    except (FileNotFoundError, DataError, ex.ExperimentError, ValueError, KeyError) as exc:
        print(f"bakeoff {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
