"""Search-space dimensions, sampling, and the flat encoding used by TPE.

A space maps names to dimensions. A :class:`Choice` option may be a constant,
another dimension, or a mapping of sub-dimensions (a conditional branch).
Internally a configuration is an *assignment*: one entry per active random
variable, keyed by a path label (``"alpha"`` holds the branch index of the
``alpha`` choice and ``"alpha/1"`` the value drawn inside branch 1).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Mapping

import numpy as np

__all__ = [
    "SpaceError",
    "Uniform",
    "LogUniform",
    "IntUniform",
    "Choice",
    "SearchSpace",
    "Variable",
    "sample",
]


class SpaceError(ValueError):
    pass


@dataclass(frozen=True)
class Uniform:
    low: float
    high: float

    def __post_init__(self):
        if not self.low < self.high:
            raise SpaceError(f"uniform bounds must satisfy low < high, got [{self.low}, {self.high}]")

    # internal coordinates are where TPE places its kernels
    @property
    def internal_bounds(self):
        return float(self.low), float(self.high)

    def to_internal(self, v):
        return float(v)

    def from_internal(self, x):
        return float(min(max(x, self.low), self.high))

    def from_unit(self, u):
        return self.low + (self.high - self.low) * u

    def contains(self, v) -> bool:
        return isinstance(v, (int, float, np.floating, np.integer)) and self.low <= v <= self.high


@dataclass(frozen=True)
class LogUniform:
    """``exp(U(log low, log high))``."""

    low: float
    high: float

    def __post_init__(self):
        if not 0 < self.low < self.high:
            raise SpaceError(f"log-uniform bounds must satisfy 0 < low < high, got [{self.low}, {self.high}]")

    @property
    def internal_bounds(self):
        return math.log(self.low), math.log(self.high)

    def to_internal(self, v):
        return math.log(v)

    def from_internal(self, x):
        return float(min(max(math.exp(x), self.low), self.high))

    def from_unit(self, u):
        lo, hi = self.internal_bounds
        return self.from_internal(lo + (hi - lo) * u)

    def contains(self, v) -> bool:
        return isinstance(v, (int, float, np.floating, np.integer)) and self.low <= v <= self.high


@dataclass(frozen=True)
class IntUniform:
    """Discrete uniform over the integers ``low..high`` inclusive."""

    low: int
    high: int

    def __post_init__(self):
        if int(self.low) != self.low or int(self.high) != self.high:
            raise SpaceError("discrete-uniform bounds must be integers")
        if not self.low < self.high:
            raise SpaceError(f"discrete-uniform bounds must satisfy low < high, got [{self.low}, {self.high}]")

    @property
    def internal_bounds(self):
        return self.low - 0.5, self.high + 0.5

    def to_internal(self, v):
        return float(v)

    def from_internal(self, x):
        return int(min(max(round(x), self.low), self.high))

    def from_unit(self, u):
        return int(min(self.low + math.floor(u * (self.high - self.low + 1)), self.high))

    def contains(self, v) -> bool:
        return isinstance(v, (int, np.integer)) and self.low <= v <= self.high


@dataclass(frozen=True)
class Choice:
    options: tuple

    def __post_init__(self):
        if len(self.options) == 0:
            raise SpaceError("choice needs at least one option")
        object.__setattr__(self, "options", tuple(self.options))


_CONTINUOUS = (Uniform, LogUniform, IntUniform)


def _is_dimension(x) -> bool:
    return isinstance(x, (*_CONTINUOUS, Choice))


@dataclass(frozen=True)
class Variable:
    """One random variable of the flattened space.

    ``dist`` is a continuous dimension, or an int (the option count) for a
    choice branch index. The variable is active when every
    ``(label, branch)`` pair in ``conditions`` holds.
    """

    label: str
    dist: Any
    conditions: tuple[tuple[str, int], ...] = ()

    @property
    def is_categorical(self) -> bool:
        return isinstance(self.dist, int)


class SearchSpace:
    """Ordered collection of named dimensions."""

    def __init__(self, dims: Mapping[str, Any]):
        if not dims:
            raise SpaceError("empty search space")
        self.dims = dict(dims)
        self.variables: list[Variable] = []
        self._names: list[str] = []
        self._flatten(self.dims, "", ())
        if len(set(self._names)) != len(self._names):
            raise SpaceError("duplicate parameter names inside conditional branches")

    def __repr__(self):
        return f"SearchSpace({self.dims!r})"

    def _flatten(self, dims, prefix, conditions):
        for name, dim in dims.items():
            self._names.append(name)
            self._add(f"{prefix}{name}", dim, conditions)

    def _add(self, label, dim, conditions):
        if isinstance(dim, Choice):
            self.variables.append(Variable(label, len(dim.options), conditions))
            for i, opt in enumerate(dim.options):
                cond = conditions + ((label, i),)
                if _is_dimension(opt):
                    self._add(f"{label}/{i}", opt, cond)
                elif isinstance(opt, Mapping):
                    self._flatten(opt, f"{label}/{i}/", cond)
        elif isinstance(dim, _CONTINUOUS):
            self.variables.append(Variable(label, dim, conditions))
        else:
            raise SpaceError(f"{label}: unsupported dimension {dim!r}")

    @property
    def names(self) -> list[str]:
        return list(self._names)

    # ----------------------------------------------------------------------

    def sample_assignment(self, rng: np.random.Generator) -> dict:
        out: dict = {}
        for var in self.variables:
            if not all(out.get(lbl) == b for lbl, b in var.conditions):
                continue
            u = rng.random()
            if var.is_categorical:
                out[var.label] = min(int(u * var.dist), var.dist - 1)
            else:
                out[var.label] = var.dist.from_unit(u)
        return out

    def materialize(self, assignment: Mapping) -> dict:
        """Turn an assignment into the flat ``name -> value`` hyperparameter map."""
        hp: dict = {}
        self._materialize(self.dims, "", assignment, hp)
        return hp

    def _materialize(self, dims, prefix, assignment, hp):
        for name, dim in dims.items():
            hp[name] = self._value(f"{prefix}{name}", dim, assignment, hp)

    def _value(self, label, dim, assignment, hp):
        if isinstance(dim, Choice):
            i = assignment[label]
            opt = dim.options[i]
            if _is_dimension(opt):
                return self._value(f"{label}/{i}", opt, assignment, hp)
            if isinstance(opt, Mapping):
                self._materialize(opt, f"{label}/{i}/", assignment, hp)
                return i
            return opt
        v = assignment[label]
        return int(v) if isinstance(dim, IntUniform) else float(v)

    def encode(self, hp: Mapping) -> dict:
        """Inverse of :meth:`materialize`; the first matching choice branch wins."""
        out: dict = {}
        self._encode(self.dims, "", hp, out)
        return out

    def _encode(self, dims, prefix, hp, out):
        for name, dim in dims.items():
            if name not in hp:
                raise SpaceError(f"parameter {name!r} missing")
            self._encode_value(f"{prefix}{name}", dim, hp[name], hp, out)

    def _encode_value(self, label, dim, value, hp, out):
        if isinstance(dim, Choice):
            for i, opt in enumerate(dim.options):
                if _is_dimension(opt):
                    if isinstance(opt, Choice) or opt.contains(value):
                        out[label] = i
                        self._encode_value(f"{label}/{i}", opt, value, hp, out)
                        return
                elif isinstance(opt, Mapping):
                    if value == i and all(k in hp for k in opt):
                        out[label] = i
                        self._encode(opt, f"{label}/{i}/", hp, out)
                        return
                elif value == opt:
                    out[label] = i
                    return
            raise SpaceError(f"{label}: value {value!r} matches no choice option")
        if not dim.contains(value):
            raise SpaceError(f"{label}: value {value!r} outside {dim}")
        out[label] = value

    def contains(self, hp: Mapping) -> bool:
        try:
            self.encode(hp)
        except SpaceError:
            return False
        return True


def sample(space: SearchSpace, rng) -> dict:
    """Draw one configuration from the prior.

    ``rng`` is a seed or a ``numpy.random.Generator``.
    """
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    return space.materialize(space.sample_assignment(rng))
