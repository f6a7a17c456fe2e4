"""Compiled inner loops for hit-and-run on the logistic posterior.

The target is ``log pi(t) = -|t|^2/2 + sum_i y_i a_i - softplus(a_i)`` with
``a = Xi t``.  Along a line ``t + u w`` with ``b = Xi w`` everything needed is
``O(n)`` once ``b`` is known, and ``a`` is updated incrementally.

Random numbers come from pools filled by the caller so that every chain is
driven by a counter-based numpy generator.  A block routine returns early
when its line pool runs low; the caller refills and resumes at the returned
step.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

HYBRID = 0
ITERATED = 1
IDEAL = 2

MAX_REJECT = 100000
NEWTON_ITERS = 200


@njit(cache=True)
def _softplus(t):
    if t > 0:
        return t + math.log1p(math.exp(-t))
    return math.log1p(math.exp(t))


@njit(cache=True)
def _sigmoid(t):
    if t >= 0:
        return 1.0 / (1.0 + math.exp(-t))
    e = math.exp(t)
    return e / (1.0 + e)


@njit(cache=True)
def line_logdens(a, b, y, tw, u):
    """``log pi(t + u w)`` up to the constant ``-|t|^2/2``, with
    ``tw = t . w`` and ``|w| = 1``."""
    s = -tw * u - 0.5 * u * u
    for i in range(a.shape[0]):
        z = a[i] + u * b[i]
        s += y[i] * z - _softplus(z)
    return s


@njit(cache=True)
def _line_derivs(a, b, y, tw, u):
    g = -tw - u
    h = -1.0
    for i in range(a.shape[0]):
        p = _sigmoid(a[i] + u * b[i])
        g += b[i] * (y[i] - p)
        h -= b[i] * b[i] * p * (1.0 - p)
    return g, h


@njit(cache=True)
def line_mode(a, b, y, tw):
    """Maximizer of the strictly concave line log-density.

    Newton steps safeguarded by a bisection bracket on the derivative.
    Returns ``nan`` if no bracket is found.
    """
    g0, _ = _line_derivs(a, b, y, tw, 0.0)
    lo, hi = 0.0, 0.0
    step = 1.0
    if g0 > 0:
        for _ in range(NEWTON_ITERS):
            hi += step
            gh, _ = _line_derivs(a, b, y, tw, hi)
            if gh <= 0:
                break
            lo = hi
            step *= 2.0
        else:
            return np.nan
    elif g0 < 0:
        for _ in range(NEWTON_ITERS):
            lo -= step
            gl, _ = _line_derivs(a, b, y, tw, lo)
            if gl >= 0:
                break
            hi = lo
            step *= 2.0
        else:
            return np.nan
    else:
        return 0.0
    u = 0.5 * (lo + hi)
    for _ in range(NEWTON_ITERS):
        g, h = _line_derivs(a, b, y, tw, u)
        if g > 0:
            lo = u
        else:
            hi = u
        un = u - g / h
        if un <= lo or un >= hi:
            un = 0.5 * (lo + hi)
        if abs(un - u) <= 1e-12 * (1.0 + abs(u)) or hi - lo <= 1e-14 * (1.0 + abs(u)):
            return un
        u = un
    return u


@njit(cache=True)
def run_block(kind, Xi, y, theta, a, start, stop, dirs, znorm, zunif, ptr0,
              lam_div, lam_fixed, states, acc, lams):
    """Advance the chain from step ``start`` to at most ``stop``.

    ``dirs[j]`` is the raw Gaussian vector for step ``start + j``.  Returns
    ``(next_step, line_ptr, status)`` where ``status`` is 0 for completion,
    1 for an exhausted line pool and 2 for a numerical failure.
    """
    n, k = Xi.shape
    ptr = ptr0
    npool = znorm.shape[0]
    b = np.empty(n)
    w = np.empty(k)
    for t in range(start, stop):
        raw = dirs[t - start]
        nr = 0.0
        for j in range(k):
            nr += raw[j] * raw[j]
        nr = math.sqrt(nr)
        tw = 0.0
        for j in range(k):
            w[j] = raw[j] / nr
            tw += theta[j] * w[j]
        bb = 0.0
        for i in range(n):
            s = 0.0
            for j in range(k):
                s += Xi[i, j] * w[j]
            b[i] = s
            bb += s * s
        c2 = 1.0 + 0.25 * bb
        if kind == IDEAL:
            if npool - ptr < 64:
                return t, ptr, 1
            m = line_mode(a, b, y, tw)
            if not math.isfinite(m):
                return t, ptr, 2
            fm = line_logdens(a, b, y, tw, m)
            u = m
            done = False
            tries = 0
            while tries < MAX_REJECT:
                if ptr >= npool:
                    return t, ptr, 1
                cand = m + znorm[ptr]
                lu = math.log(zunif[ptr])
                ptr += 1
                tries += 1
                if lu <= line_logdens(a, b, y, tw, cand) - fm + 0.5 * (cand - m) ** 2:
                    u = cand
                    done = True
                    break
            if not done:
                return t, ptr, 2
            acc[t] = 1.0 / tries
            lams[t] = tries
        else:
            if kind == HYBRID:
                lam = 1
            elif lam_fixed > 0:
                lam = lam_fixed
            else:
                lam = int(math.ceil(c2 / lam_div - 1e-12))
                if lam < 1:
                    lam = 1
            if npool - ptr < lam:
                return t, ptr, 1
            sig = 1.0 / math.sqrt(c2)
            u = 0.0
            fu = line_logdens(a, b, y, tw, 0.0)
            nacc = 0
            for _ in range(lam):
                cand = u + sig * znorm[ptr]
                lu = math.log(zunif[ptr])
                ptr += 1
                fc = line_logdens(a, b, y, tw, cand)
                if lu <= fc - fu:
                    u = cand
                    fu = fc
                    nacc += 1
            acc[t] = nacc / lam
            lams[t] = lam
        for j in range(k):
            theta[j] += u * w[j]
        for i in range(n):
            a[i] += u * b[i]
        for j in range(k):
            states[t + 1, j] = theta[j]
    return stop, ptr, 0
