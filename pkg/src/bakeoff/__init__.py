"""Tabular learner bake-off: native learners, budgeted TPE tuning, ensembles and rank tests."""
from . import data, ensemble, experiment, hpo, learners, metrics, report
from .data import Dataset, Schema, load_csv, split, synthetic_classification
from .ensemble import combine_uniform, combine_weighted, compute_weights
from .experiment import ExperimentConfig, load_config, run
from .learners import fit, predict
from .metrics import aggregate_seeds, cross_entropy, friedman_test, relative_deterioration

__version__ = "0.1.0"
