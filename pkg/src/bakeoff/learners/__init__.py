"""Predictor contract and the native learners.

Every fitted model has ``predict(data)`` taking a :class:`~bakeoff.data.Dataset`
or a raw feature matrix (NaN = missing) and returning an ``(n, k)``
probability matrix for classification or an ``(n,)`` vector for regression.
"""
from __future__ import annotations

from .base import HyperparameterError
from .external import ExternalLearner, ExternalLearnerError, ExternalModel
from .gbdt import GBDT_DEFAULTS, GBDTModel, fit_gbdt, gbdt_split_gain, leaf_weight
from .neural import MLP_DEFAULTS, SOFT_ODT_DEFAULTS, NeuralModel, fit_mlp, fit_soft_odt
from .training import Adam, DivergenceError, EarlyStopping, TrainingResult, train_iterative

__all__ = [
    "NATIVE_LEARNERS",
    "fit",
    "predict",
    "default_hyperparameters",
    "HyperparameterError",
    "DivergenceError",
    "EarlyStopping",
    "TrainingResult",
    "train_iterative",
    "Adam",
    "GBDTModel",
    "NeuralModel",
    "ExternalLearner",
    "ExternalModel",
    "ExternalLearnerError",
    "gbdt_split_gain",
    "leaf_weight",
    "fit_gbdt",
    "fit_soft_odt",
    "fit_mlp",
]

NATIVE_LEARNERS = {
    "gbdt": GBDT_DEFAULTS,
    "soft_odt": SOFT_ODT_DEFAULTS,
    "mlp": MLP_DEFAULTS,
}


def default_hyperparameters(kind: str) -> dict:
    return dict(NATIVE_LEARNERS[kind])


def fit(kind, train, val, hp, seed=0, patience=100, max_epochs=1000, epochs=None):
    """Train a learner and return the state with the best validation loss.

    ``kind`` is a native learner name or an :class:`ExternalLearner`. For
    GBDT, ``patience`` counts boosting rounds. With ``val=None`` the model
    trains for a fixed ``epochs`` (rounds for GBDT) without early stopping.
    """
    if train.n_samples == 0:
        raise ValueError("empty training set")
    if isinstance(kind, ExternalLearner):
        return kind.fit(train, val, hp, seed)
    if kind == "gbdt":
        hp = dict(hp)
        if epochs is not None:
            hp["n_estimators"] = epochs
        return fit_gbdt(train, val, hp, seed, early_stopping_rounds=patience)
    if kind == "soft_odt":
        return fit_soft_odt(train, val, hp, seed, patience=patience, max_epochs=max_epochs, epochs=epochs)
    if kind == "mlp":
        return fit_mlp(train, val, hp, seed, patience=patience, max_epochs=max_epochs, epochs=epochs)
    raise ValueError(f"unknown learner {kind!r}")


def predict(model, features):
    return model.predict(features)
