"""Search spaces, TPE suggestions and the budgeted optimization loop."""
from .optimize import (
    DEFAULT_BUDGET,
    OptimizationError,
    OptimizeResult,
    PlateauCurve,
    TrialRecord,
    format_record,
    load_history,
    optimize,
    parse_record,
    plateau_curve,
    plateau_iteration,
    trial_seeds,
)
from .presets import NATIVE_PRESET, PRESETS, preset
from .space import Choice, IntUniform, LogUniform, SearchSpace, SpaceError, Uniform, sample
from .tpe import TPEConfig, tpe_suggest

__all__ = [
    "DEFAULT_BUDGET",
    "OptimizationError",
    "OptimizeResult",
    "PlateauCurve",
    "TrialRecord",
    "format_record",
    "load_history",
    "optimize",
    "parse_record",
    "plateau_curve",
    "plateau_iteration",
    "trial_seeds",
    "NATIVE_PRESET",
    "PRESETS",
    "preset",
    "Choice",
    "IntUniform",
    "LogUniform",
    "SearchSpace",
    "SpaceError",
    "Uniform",
    "sample",
    "TPEConfig",
    "tpe_suggest",
]
