"""Kolmogorov-Smirnov tests and small statistical helpers.

p-values use the asymptotic Kolmogorov distribution, ``P(K > sqrt(n) D)``;
they are approximate for small samples.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np
from scipy import special, stats

from ..point_process import ValidationError

MIN_KS_SAMPLES = 8


def kolmogorov_sf(x: float) -> float:
    return float(special.kolmogorov(x)) if x > 0 else 1.0


def ks_test(samples: Sequence[float] | np.ndarray,
            cdf: Callable[[np.ndarray], np.ndarray]) -> tuple[float, float]:
    """One-sample KS statistic against ``cdf`` and its asymptotic p-value."""
    x = np.sort(np.asarray(samples, dtype=float))
    n = len(x)
    if n == 0:
        raise ValidationError("ks_test needs a non-empty sample")
    if n < MIN_KS_SAMPLES:
        raise ValidationError(f"ks_test needs at least {MIN_KS_SAMPLES} samples")
    f = np.asarray(cdf(x), dtype=float)
    i = np.arange(1, n + 1)
    stat = float(max(np.max(i / n - f), np.max(f - (i - 1) / n)))
    return stat, kolmogorov_sf(math.sqrt(n) * stat)


def two_sample_ks(a: Sequence[float] | np.ndarray,
                  b: Sequence[float] | np.ndarray) -> tuple[float, float]:
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    if len(a) == 0 or len(b) == 0:
        raise ValidationError("two_sample_ks needs non-empty samples")
    if min(len(a), len(b)) < MIN_KS_SAMPLES:
        raise ValidationError(f"two_sample_ks needs at least {MIN_KS_SAMPLES} samples each")
    grid = np.concatenate([a, b])
    fa = np.searchsorted(a, grid, side="right") / len(a)
    fb = np.searchsorted(b, grid, side="right") / len(b)
    stat = float(np.max(np.abs(fa - fb)))
    n_eff = len(a) * len(b) / (len(a) + len(b))
    return stat, kolmogorov_sf(math.sqrt(n_eff) * stat)


def exponential_cdf(rate: float) -> Callable[[np.ndarray], np.ndarray]:
    return lambda x: np.where(x > 0, -np.expm1(-rate * np.asarray(x)), 0.0)


def ball_marginal_cdf(k: int) -> Callable[[np.ndarray], np.ndarray]:
    """CDF of one coordinate of a uniform point in the unit ball of R^k.

    The squared coordinate is Beta(1/2, (k+1)/2).
    """
    def cdf(u):
        u = np.clip(np.asarray(u, dtype=float), -1.0, 1.0)
        half = 0.5 * special.betainc(0.5, (k + 1) / 2.0, u * u)
        return 0.5 + np.sign(u) * half

    return cdf


def clopper_pearson(successes: int, n: int, level: float = 0.99) -> tuple[float, float]:
    """Two-sided exact binomial confidence interval."""
    alpha = 1.0 - level
    lo = 0.0 if successes == 0 else float(stats.beta.ppf(alpha / 2, successes, n - successes + 1))
    hi = 1.0 if successes == n else float(stats.beta.ppf(1 - alpha / 2, successes + 1, n - successes))
    return lo, hi


def linear_fit(x: Sequence[float], y: Sequence[float]) -> tuple[float, float, float]:
    """Least-squares slope, intercept and R^2."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 2:
        raise ValidationError("need at least two points for a fit")
    xm, ym = x.mean(), y.mean()
    sxx = float(np.sum((x - xm) ** 2))
    slope = float(np.sum((x - xm) * (y - ym)) / sxx)
    intercept = float(ym - slope * xm)
    resid = y - (intercept + slope * x)
    sst = float(np.sum((y - ym) ** 2))
    r2 = 1.0 if sst == 0 else 1.0 - float(np.sum(resid ** 2)) / sst
    return slope, intercept, r2


def mean_stderr(values: Sequence[float] | np.ndarray) -> tuple[float, float, int]:
    v = np.asarray(values, dtype=float)
    n = len(v)
    if n == 0:
        return math.nan, math.nan, 0
    se = float(v.std(ddof=1) / math.sqrt(n)) if n > 1 else math.nan
    return float(v.mean()), se, n
