"""Non-overlapping batch means estimates of asymptotic variance."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

MIN_BATCHES = 10
MIN_LENGTH = 10_000


@dataclass(frozen=True)
class BatchMeansEstimate:
    estimate: float
    se: float
    batch_size: int
    n_batches: int


def batch_means(x, batch_size: int | None = None, min_length: int = MIN_LENGTH) -> BatchMeansEstimate:
    """Asymptotic variance of the mean of a scalar series.

    The series is cut into ``a`` batches of size ``b = floor(sqrt(n))``
    (leftover values at the end are dropped); the estimate is ``b`` times
    the sample variance of the batch means and the standard error uses the
    chi-squared approximation with ``a - 1`` degrees of freedom.
    """
    x = np.asarray(x, dtype=float).ravel()
    n = x.size
    if n < min_length:
        raise ValueError(f"series of length {n} is shorter than {min_length}")
    b = int(math.isqrt(n)) if batch_size is None else int(batch_size)
    a = n // b
    if a < MIN_BATCHES:
        raise ValueError(f"only {a} batches; need at least {MIN_BATCHES}")
    means = x[: a * b].reshape(a, b).mean(axis=1)
    est = float(b * np.var(means, ddof=1))
    return BatchMeansEstimate(est, est * math.sqrt(2.0 / (a - 1)), b, a)


def batch_means_variance(trace, f=None, burnin: int = 0, **kw):
    """``(estimate, se)`` for ``f`` along a chain.

    ``trace`` is a :class:`~sandwich_gap.hitrun.ChainTrace` or an array of
    states.  ``f`` maps the state array ``(n, k)`` to a series; with
    ``f=None`` every coordinate is used and arrays are returned.
    """
    states = getattr(trace, "states", trace)
    states = np.asarray(states, dtype=float)[burnin:]
    if f is not None:
        r = batch_means(f(states), **kw)
        return r.estimate, r.se
    if states.ndim == 1:
        r = batch_means(states, **kw)
        return r.estimate, r.se
    res = [batch_means(states[:, i], **kw) for i in range(states.shape[1])]
    return np.array([r.estimate for r in res]), np.array([r.se for r in res])


def ratio_with_se(num, se_num, den, se_den):
    """``num / den`` with a delta-method standard error."""
    num, den = np.asarray(num, dtype=float), np.asarray(den, dtype=float)
    r = num / den
    se = np.abs(r) * np.sqrt((np.asarray(se_num) / num) ** 2 + (np.asarray(se_den) / den) ** 2)
    return r, se
