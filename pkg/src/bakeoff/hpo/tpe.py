"""Tree-structured Parzen estimator suggestions.

Completed trials are split at the ``gamma`` quantile of validation loss into
a good and a bad set. Each random variable gets a density per set (truncated
Gaussian kernels for continuous variables, smoothed counts for choices).
Candidates are drawn from the good densities and the one with the largest
good/bad log-density ratio is returned.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import log_ndtr, logsumexp
from scipy.stats import truncnorm

from .space import IntUniform, SearchSpace, Variable

__all__ = ["TPEConfig", "ParzenEstimator", "CategoricalEstimator", "tpe_suggest"]


@dataclass(frozen=True)
class TPEConfig:
    gamma: float = 0.25
    n_startup: int = 20
    n_candidates: int = 24
    prior_weight: float = 1.0


def _log_mass(a, b):
    """log(Phi(b) - Phi(a)) for a < b, stable in both tails."""
    a, b = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float))
    upper = a > 0
    # mirror the right tail so the difference is taken where Phi is small
    lo = np.where(upper, -b, a)
    hi = np.where(upper, -a, b)
    log_hi = log_ndtr(hi)
    log_lo = log_ndtr(lo)
    with np.errstate(divide="ignore"):
        return log_hi + np.log1p(-np.exp(np.minimum(log_lo - log_hi, 0.0)))


class ParzenEstimator:
    """Mixture of truncated Gaussians on the variable's internal interval.

    One kernel per observation plus a broad prior kernel. Each observation's
    bandwidth is the larger gap to its sorted neighbours (the interval
    bounds act as outer neighbours), floored at ``(high - low) / sqrt(n)``
    and capped at ``high - low``.
    """

    def __init__(self, obs: Sequence[float], low: float, high: float, prior_weight: float = 1.0, discrete: bool = False):
        self.low, self.high = low, high
        self.discrete = discrete
        width = high - low
        obs = np.sort(np.asarray(obs, dtype=np.float64))
        n = obs.size
        if n:
            padded = np.concatenate([[low], obs, [high]])
            gaps = np.maximum(padded[1:-1] - padded[:-2], padded[2:] - padded[1:-1])
            sigma = np.clip(gaps, width / math.sqrt(n), width)
        else:
            sigma = np.zeros(0)
        self.mu = np.concatenate([obs, [0.5 * (low + high)]])
        self.sigma = np.concatenate([sigma, [width]])
        w = np.concatenate([np.ones(n), [prior_weight]])
        self.weights = w / w.sum()
        self._log_norm = _log_mass((low - self.mu) / self.sigma, (high - self.mu) / self.sigma)

    def log_pdf(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))[:, None]
        if self.discrete:
            a = (np.maximum(x - 0.5, self.low) - self.mu) / self.sigma
            b = (np.minimum(x + 0.5, self.high) - self.mu) / self.sigma
            comp = _log_mass(a, b)
        else:
            z = (x - self.mu) / self.sigma
            comp = -0.5 * z * z - np.log(self.sigma) - 0.5 * math.log(2 * math.pi)
        return logsumexp(comp - self._log_norm + np.log(self.weights), axis=1)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        k = rng.choice(self.mu.size, size=size, p=self.weights)
        mu, sigma = self.mu[k], self.sigma[k]
        x = truncnorm.rvs((self.low - mu) / sigma, (self.high - mu) / sigma, loc=mu, scale=sigma, random_state=rng)
        x = np.clip(np.atleast_1d(x), self.low, self.high)
        if self.discrete:
            x = np.clip(np.round(x), self.low + 0.5, self.high - 0.5)
        return x


class CategoricalEstimator:
    def __init__(self, obs: Sequence[int], n_options: int, prior_weight: float = 1.0):
        counts = np.bincount(np.asarray(obs, dtype=np.int64), minlength=n_options).astype(np.float64)
        p = counts + prior_weight
        self.p = p / p.sum()

    def log_pdf(self, x) -> np.ndarray:
        return np.log(self.p[np.atleast_1d(np.asarray(x, dtype=np.int64))])

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.choice(self.p.size, size=size, p=self.p)


def _estimator(var: Variable, values, prior_weight):
    if var.is_categorical:
        return CategoricalEstimator(values, var.dist, prior_weight)
    lo, hi = var.dist.internal_bounds
    internal = [var.dist.to_internal(v) for v in values]
    return ParzenEstimator(internal, lo, hi, prior_weight, discrete=isinstance(var.dist, IntUniform))


def _active(var: Variable, assignment) -> bool:
    return all(assignment.get(lbl) == b for lbl, b in var.conditions)


def _split(history, gamma):
    """Good/bad assignments; failed trials sit in the bad set with loss +inf."""
    scored = []
    n_ok = 0
    for rec in history:
        if rec.status == "ok" and math.isfinite(rec.val_loss):
            scored.append((rec.val_loss, rec.id, rec))
            n_ok += 1
        elif rec.status == "failed":
            scored.append((math.inf, rec.id, rec))
    scored.sort(key=lambda t: (t[0], t[1]))
    n_good = min(max(1, math.ceil(gamma * len(scored))), n_ok)
    return [t[2] for t in scored[:n_good]], [t[2] for t in scored[n_good:]]


def tpe_suggest(history, space: SearchSpace, config: TPEConfig = TPEConfig(), seed=0) -> dict:
    """Next configuration to evaluate; deterministic in ``(history, seed)``.

    With fewer than ``n_startup`` successful trials this is a prior sample
    drawn with the same generator a random search would use.
    """
    rng = np.random.default_rng(seed)
    n_ok = sum(1 for r in history if r.status == "ok" and math.isfinite(r.val_loss))
    if n_ok < max(config.n_startup, 1):
        return space.materialize(space.sample_assignment(rng))

    good, bad = _split(history, config.gamma)
    good_a = [space.encode(r.params) for r in good]
    bad_a = [space.encode(r.params) for r in bad]

    models = {}
    for var in space.variables:
        g_vals = [a[var.label] for a in good_a if var.label in a]
        b_vals = [a[var.label] for a in bad_a if var.label in a]
        models[var.label] = (_estimator(var, g_vals, config.prior_weight), _estimator(var, b_vals, config.prior_weight))

    m = config.n_candidates
    cands = [dict() for _ in range(m)]
    for var in space.variables:
        good_est = models[var.label][0]
        draws = good_est.sample(rng, m)
        for c, x in zip(cands, draws):
            if not _active(var, c):
                continue
            if var.is_categorical:
                c[var.label] = int(x)
            else:
                c[var.label] = var.dist.from_internal(float(x))

    score = np.zeros(m)
    for var in space.variables:
        good_est, bad_est = models[var.label]
        idx = [i for i, c in enumerate(cands) if var.label in c]
        if not idx:
            continue
        if var.is_categorical:
            xs = [cands[i][var.label] for i in idx]
        else:
            xs = [var.dist.to_internal(cands[i][var.label]) for i in idx]
        score[idx] += good_est.log_pdf(xs) - bad_est.log_pdf(xs)
    return space.materialize(cands[int(np.argmax(score))])
