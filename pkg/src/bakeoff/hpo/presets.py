"""Named search spaces.

The ``xgboost``, ``catboost``, ``node``, ``tabnet``, ``dnf_net`` and
``cnn_1d`` presets reproduce the published per-model ranges. Parameter names
follow the native learner keys where a native counterpart exists (``xgboost``
-> ``gbdt``, ``node`` -> ``soft_odt``, ``cnn_1d`` -> ``mlp``). The ``*_desk``
presets narrow those ranges so a full tune fits in minutes on a laptop.
"""
from __future__ import annotations

import math

from .space import Choice, IntUniform, LogUniform, SearchSpace, Uniform

__all__ = ["PRESETS", "preset", "NATIVE_PRESET"]

e = math.exp
_BATCH = Choice((512, 1024, 2048, 4096, 8192))


def _reg():
    return Choice((0.0, LogUniform(e(-16), e(2))))


PRESETS = {
    "xgboost": lambda: SearchSpace({
        "n_estimators": Uniform(100, 4000),
        "eta": LogUniform(e(-7), 1.0),
        "max_depth": IntUniform(1, 10),
        "subsample": Uniform(0.2, 1.0),
        "colsample_bytree": Uniform(0.2, 1.0),
        "colsample_bylevel": Uniform(0.2, 1.0),
        "min_child_weight": LogUniform(e(-16), e(5)),
        "alpha": _reg(),
        "lambda": _reg(),
        "gamma": _reg(),
    }),
    "catboost": lambda: SearchSpace({
        "learning_rate": LogUniform(e(-5), 1.0),
        "random_strength": IntUniform(1, 20),
        "max_size": IntUniform(0, 25),
        "l2_leaf_reg": LogUniform(1.0, 10.0),
        "bagging_temperature": Uniform(0.0, 1.0),
        "leaf_estimation_iterations": IntUniform(1, 20),
    }),
    # the published list repeats the learning rate; the first range is kept
    "node": lambda: SearchSpace({
        "learning_rate": LogUniform(e(-5), 1.0),
        "num_layers": IntUniform(1, 10),
        "tree_count": Choice((256, 512, 1024, 2048)),
        "tree_depth": IntUniform(4, 9),
        "tree_output_dim": IntUniform(1, 5),
        "batch_size": _BATCH,
    }),
    "tabnet": lambda: SearchSpace({
        "learning_rate": LogUniform(e(-5), 1.0),
        "feature_dim": IntUniform(20, 60),
        "output_dim": IntUniform(20, 60),
        "n_steps": IntUniform(1, 8),
        "bn_epsilon": Uniform(e(-5), e(-1)),
        "relaxation_factor": Uniform(0.3, 2.0),
        "batch_size": _BATCH,
    }),
    # "discrete uniform [1e-2, 2]" has non-integer bounds; sampled continuously
    "dnf_net": lambda: SearchSpace({
        "n_formulas": IntUniform(256, 2048),
        "feature_selection_beta": Uniform(1e-2, 2.0),
        "learning_rate": LogUniform(e(-4), 0.5),
        "batch_size": _BATCH,
    }),
    "cnn_1d": lambda: SearchSpace({
        "hidden_size": IntUniform(100, 4000),
        "num_layers": IntUniform(1, 6),
        "learning_rate": LogUniform(e(-4), 0.5),
        "batch_size": _BATCH,
    }),
    "gbdt_desk": lambda: SearchSpace({
        "n_estimators": Uniform(10, 200),
        "eta": LogUniform(e(-4), 1.0),
        "max_depth": IntUniform(1, 6),
        "subsample": Uniform(0.5, 1.0),
        "colsample_bytree": Uniform(0.5, 1.0),
        "colsample_bylevel": Uniform(0.5, 1.0),
        "min_child_weight": LogUniform(e(-4), e(2)),
        "alpha": _reg(),
        "lambda": _reg(),
        "gamma": _reg(),
    }),
    "soft_odt_desk": lambda: SearchSpace({
        "learning_rate": LogUniform(e(-6), e(-1)),
        "num_layers": IntUniform(1, 2),
        "tree_count": Choice((8, 16, 32)),
        "tree_depth": IntUniform(2, 5),
        "tree_output_dim": IntUniform(1, 3),
        "batch_size": Choice((128, 256, 512)),
    }),
    "mlp_desk": lambda: SearchSpace({
        "hidden_size": IntUniform(16, 128),
        "num_layers": IntUniform(1, 3),
        "learning_rate": LogUniform(e(-8), e(-2)),
        "batch_size": Choice((128, 256, 512)),
    }),
}

NATIVE_PRESET = {"gbdt": "gbdt_desk", "soft_odt": "soft_odt_desk", "mlp": "mlp_desk"}


def preset(name: str) -> SearchSpace:
    try:
        return PRESETS[name]()
    except KeyError:
        raise KeyError(f"unknown search-space preset {name!r}; known: {sorted(PRESETS)}") from None
