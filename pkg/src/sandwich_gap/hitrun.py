"""Hit-and-run samplers with one-dimensional line moves.

Three kernels are provided for a log-concave target on ``R^k``:

* :func:`hybrid_step` draws a direction and makes one random-walk
  Metropolis move along it with scale ``1/sqrt(c2(w))``;
* :func:`iterated_step` repeats that line move ``lambda(w)`` times along the
  same direction;
* :func:`ideal_step` resamples the line coordinate from the exact
  conditional law.

The generic implementations work for any :class:`LogDensityTarget`; chains
for :class:`LogisticTarget` are driven by compiled loops.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit, log_expit

from . import _fastchain as fc
from .fixtures import rng_for

DEFAULT_LAMBDA_DIVISOR = 10.0


class ChainDivergenceError(RuntimeError):
    """A chain produced a non-finite state or density."""


# ---------------------------------------------------------------------------
# targets


class LogDensityTarget:
    """Log-density known up to a constant, with directional curvature bounds
    ``c1(w) <= -w^T Hess(x) w <= c2(w)`` for unit ``w``."""

    dim: int

    def logpdf(self, x) -> float:
        raise NotImplementedError

    def grad(self, x) -> np.ndarray:
        raise NotImplementedError

    def c1(self, w) -> float:
        raise NotImplementedError

    def c2(self, w) -> float:
        raise NotImplementedError

    def line(self, x, w) -> Callable[[np.ndarray], np.ndarray]:
        """Vectorized ``u -> log pi(x + u w)``."""
        x = np.asarray(x, dtype=float)
        w = np.asarray(w, dtype=float)
        return lambda u: np.array([self.logpdf(x + ui * w) for ui in np.atleast_1d(u)])


@dataclass(frozen=True)
class GaussianTarget(LogDensityTarget):
    """Centered Gaussian with the given precision matrix."""

    precision: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.precision, dtype=float))
        if A.shape[0] != A.shape[1] or np.linalg.eigvalsh(A).min() <= 0:
            raise ValueError("precision must be symmetric positive definite")
        object.__setattr__(self, "precision", A)

    @classmethod
    def standard(cls, k: int) -> "GaussianTarget":
        return cls(np.eye(k))

    @property
    def dim(self) -> int:
        return self.precision.shape[0]

    def logpdf(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(-0.5 * x @ self.precision @ x)

    def grad(self, x):
        return -self.precision @ np.asarray(x, dtype=float)

    def c1(self, w) -> float:
        w = np.asarray(w, dtype=float)
        return float(w @ self.precision @ w)

    c2 = c1

    def line(self, x, w):
        x = np.asarray(x, dtype=float)
        w = np.asarray(w, dtype=float)
        A = self.precision
        q0, q1, q2 = x @ A @ x, w @ A @ x, w @ A @ w
        return lambda u: -0.5 * (q0 + 2 * q1 * np.asarray(u) + q2 * np.asarray(u) ** 2)


@dataclass(frozen=True)
class LogisticTarget(LogDensityTarget):
    """Posterior of logistic regression under a standard normal prior.

    Directional curvature lies in ``[1, 1 + |Xi w|^2 / 4]``.
    """

    Xi: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        Xi = np.ascontiguousarray(np.atleast_2d(np.asarray(self.Xi, dtype=float)))
        y = np.ascontiguousarray(np.asarray(self.y, dtype=float).ravel())
        if Xi.shape[0] != y.size:
            raise ValueError("design and response lengths differ")
        if np.any((y != 0) & (y != 1)):
            raise ValueError("responses must be 0 or 1")
        object.__setattr__(self, "Xi", Xi)
        object.__setattr__(self, "y", y)

    @classmethod
    def no_data(cls, k: int) -> "LogisticTarget":
        """Empty design: the posterior is the standard normal prior."""
        return cls(np.zeros((0, k)), np.zeros(0))

    @property
    def dim(self) -> int:
        return self.Xi.shape[1]

    @property
    def curvature_matrix(self) -> np.ndarray:
        return self.Xi.T @ self.Xi / 4.0 + np.eye(self.dim)

    @property
    def xi(self) -> float:
        return conditioning_number(self.Xi)

    def logpdf(self, x) -> float:
        x = np.asarray(x, dtype=float)
        z = self.Xi @ x
        return float(-0.5 * x @ x + np.sum(self.y * z + log_expit(-z)))

    def grad(self, x):
        x = np.asarray(x, dtype=float)
        return -x + self.Xi.T @ (self.y - expit(self.Xi @ x))

    def hessian(self, x):
        p = expit(self.Xi @ np.asarray(x, dtype=float))
        return -np.eye(self.dim) - (self.Xi.T * (p * (1 - p))) @ self.Xi

    def c1(self, w) -> float:
        return 1.0

    def c2(self, w) -> float:
        b = self.Xi @ np.asarray(w, dtype=float)
        return float(1.0 + 0.25 * b @ b)

    def line(self, x, w):
        x = np.asarray(x, dtype=float)
        w = np.asarray(w, dtype=float)
        a, b = self.Xi @ x, self.Xi @ w
        xx, xw, ww = x @ x, x @ w, w @ w

        def f(u):
            u = np.asarray(u, dtype=float)
            z = a[:, None] + np.atleast_1d(u)[None, :] * b[:, None]
            val = (-0.5 * (xx + 2 * xw * np.atleast_1d(u) + ww * np.atleast_1d(u) ** 2)
                   + np.sum(self.y[:, None] * z + log_expit(-z), axis=0))
            return val if u.ndim else val[0]

        return f

    def map_estimate(self, tol: float = 1e-10, max_iter: int = 100) -> np.ndarray:
        """Posterior mode by Newton's method (the objective is strongly concave)."""
        x = np.zeros(self.dim)
        for _ in range(max_iter):
            g = self.grad(x)
            step = np.linalg.solve(self.hessian(x), g)
            x = x - step
            if np.max(np.abs(step)) < tol:
                break
        return x


def conditioning_number(Xi, tol: float = 1e-12, max_iter: int = 10000) -> float:
    """Spectral norm of ``Xi^T Xi / 4 + I`` by power iteration."""
    Xi = np.atleast_2d(np.asarray(Xi, dtype=float))
    k = Xi.shape[1]
    if Xi.shape[0] == 0:
        return 1.0
    v = np.ones(k) / math.sqrt(k)
    lam = 0.0
    for _ in range(max_iter):
        u = Xi.T @ (Xi @ v) / 4.0 + v
        new = float(np.linalg.norm(u))
        v = u / new
        if abs(new - lam) <= tol * new:
            break
        lam = new
    return new


# ---------------------------------------------------------------------------
# single steps


def sample_direction(rng, k: int) -> np.ndarray:
    """Uniform direction on the unit sphere of ``R^k``."""
    if k < 1:
        raise ValueError("k must be positive")
    z = rng.standard_normal(k)
    while not np.any(z):
        z = rng.standard_normal(k)
    return z / np.linalg.norm(z)


def line_scale(target: LogDensityTarget, w) -> float:
    """Proposal scale ``sigma_w = 1 / sqrt(c2(w))``."""
    return 1.0 / math.sqrt(target.c2(w))


def _check_finite(v, what="log-density"):
    if not math.isfinite(v):
        raise ChainDivergenceError(f"non-finite {what}")


def rwm_line_step(target: LogDensityTarget, x, w, rng, sigma: Optional[float] = None):
    """One random-walk Metropolis move along ``w``; returns ``(x', accepted)``."""
    x = np.asarray(x, dtype=float)
    f = target.line(x, w)
    f0 = float(f(0.0))
    _check_finite(f0)
    sig = line_scale(target, w) if sigma is None else sigma
    u = sig * rng.standard_normal()
    lu = math.log(rng.random())
    fu = float(f(u))
    if lu <= fu - f0:
        return x + u * np.asarray(w), True
    return x, False


def default_lambda(target: LogDensityTarget, w, divisor: float = DEFAULT_LAMBDA_DIVISOR) -> int:
    """``ceil(c2(w) / (divisor c1(w)))``, at least one."""
    return max(1, math.ceil(target.c2(w) / (divisor * target.c1(w)) - 1e-12))


def hybrid_step(target, x, rng):
    w = sample_direction(rng, target.dim)
    return rwm_line_step(target, x, w, rng)


def iterated_step(target, x, rng, schedule: Optional[Callable] = None):
    """``lambda(w)`` line moves along one direction; returns ``(x', n_accepted, lambda)``."""
    w = sample_direction(rng, target.dim)
    lam = default_lambda(target, w) if schedule is None else int(schedule(w))
    sig = line_scale(target, w)
    n_acc = 0
    for _ in range(lam):
        x, ok = rwm_line_step(target, x, w, rng, sigma=sig)
        n_acc += ok
    return x, n_acc, lam


def _bracket_mode(f, sigma, max_iter=200):
    """Mode of a concave ``f``: bracket the sign change of a finite-difference
    slope, then solve with Brent's method."""
    h = 1e-6 * sigma

    def slope(u):
        return float(f(u + h) - f(u - h)) / (2 * h)

    s0 = slope(0.0)
    if s0 == 0:
        return 0.0
    direction = 1.0 if s0 > 0 else -1.0
    prev, step = 0.0, sigma
    for _ in range(max_iter):
        cand = direction * step
        if direction * slope(cand) <= 0:
            lo, hi = sorted((prev, cand))
            break
        prev = cand
        step *= 2.0
    else:
        raise ChainDivergenceError("mode bracketing failed")
    if slope(lo) * slope(hi) > 0:
        return hi if slope(hi) == 0 else lo
    return brentq(slope, lo, hi, xtol=1e-10 * sigma)


def ideal_line_draw(target, x, w, rng, method: str = "rejection"):
    """Draw ``u`` from the density proportional to ``pi(x + u w)``.

    ``"rejection"`` is exact: curvature at least ``c1`` makes the Gaussian
    with variance ``1/c1`` centred at the mode an envelope.  ``"grid"``
    inverts the CDF on a grid of spacing ``1e-3 sigma`` over ``+-10 sigma``
    around the mode with ``sigma = 1/sqrt(c1)``.
    """
    f = target.line(x, w)
    c1 = target.c1(w)
    sig = 1.0 / math.sqrt(c1)
    m = _bracket_mode(f, sig)
    fm = float(f(m))
    _check_finite(fm)
    if method == "rejection":
        for tries in range(1, fc.MAX_REJECT + 1):
            u = m + sig * rng.standard_normal()
            if math.log(rng.random()) <= float(f(u)) - fm + 0.5 * c1 * (u - m) ** 2:
                return u
        raise ChainDivergenceError("rejection sampler did not accept")
    if method == "grid":
        grid = m + sig * np.linspace(-10.0, 10.0, 20001)
        dens = np.exp(f(grid) - fm)
        cdf = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(grid))])
        return float(np.interp(rng.random() * cdf[-1], cdf, grid))
    raise ValueError(f"unknown method {method!r}")


def ideal_step(target, x, rng, method: str = "rejection"):
    w = sample_direction(rng, target.dim)
    u = ideal_line_draw(target, x, w, rng, method)
    return np.asarray(x, dtype=float) + u * w


# ---------------------------------------------------------------------------
# chains


@dataclass(frozen=True)
class Stepper:
    """Immutable sampler configuration.

    ``kind`` is ``"hybrid"``, ``"iterated"`` or ``"ideal"``.  ``lam_fixed``
    overrides the iteration schedule; ``lam_divisor`` sets
    ``lambda(w) = ceil(c2(w) / (lam_divisor c1(w)))``.
    """

    target: LogDensityTarget
    kind: str = "hybrid"
    lam_divisor: float = DEFAULT_LAMBDA_DIVISOR
    lam_fixed: int = 0
    method: str = "rejection"

    def __post_init__(self):
        if self.kind not in ("hybrid", "iterated", "ideal"):
            raise ValueError(f"unknown sampler {self.kind!r}")

    def step(self, x, rng):
        """``(x', acceptance fraction, inner count)``."""
        t = self.target
        if self.kind == "hybrid":
            x, ok = hybrid_step(t, x, rng)
            return x, float(ok), 1
        if self.kind == "iterated":
            sched = (lambda w: self.lam_fixed) if self.lam_fixed > 0 else (
                lambda w: default_lambda(t, w, self.lam_divisor))
            x, n_acc, lam = iterated_step(t, x, rng, sched)
            return x, n_acc / lam, lam
        return ideal_step(t, x, rng, self.method), 1.0, 1


@dataclass
class ChainTrace:
    """States ``x_0..x_n`` with per-step acceptance and inner-step counts.

    For the ideal sampler ``inner`` counts rejection proposals.
    """

    seed: int
    states: np.ndarray
    accepted: np.ndarray
    inner: np.ndarray
    wall_time: float
    steps: int
    chain_id: int = 0

    @property
    def tau(self) -> float:
        return self.wall_time / max(self.steps, 1)

    @property
    def acceptance_rate(self) -> float:
        return float(np.mean(self.accepted)) if self.steps else float("nan")

    def to_csv(self, path) -> None:
        k = self.states.shape[1]
        header = ",".join(["step"] + [f"x{i + 1}" for i in range(k)] + ["accepted"])
        acc = np.concatenate([[np.nan], self.accepted])
        data = np.column_stack([np.arange(self.steps + 1), self.states, acc])
        np.savetxt(path, data, delimiter=",", header=header, comments="", fmt="%.17g")


_KIND_CODE = {"hybrid": fc.HYBRID, "iterated": fc.ITERATED, "ideal": fc.IDEAL}


def _fast_eligible(stepper: Stepper) -> bool:
    return isinstance(stepper.target, LogisticTarget) and (
        stepper.kind != "ideal" or stepper.method == "rejection")


def run_chain(stepper: Stepper, x0, n: int, seed: int, chain_id: int = 0,
              block: int = 20000, fast: Optional[bool] = None) -> ChainTrace:
    """Run ``n`` steps from ``x0``; deterministic in ``(seed, chain_id)``.

    Directions and line moves use separate streams so that samplers started
    with the same seed share their direction sequence.
    """
    if n < 1:
        raise ValueError("n must be positive")
    x0 = np.asarray(x0, dtype=float).copy()
    k = stepper.target.dim
    if x0.shape != (k,):
        raise ValueError(f"x0 must have shape ({k},)")
    fast = _fast_eligible(stepper) if fast is None else fast
    if fast:
        return _run_fast(stepper, x0, n, seed, chain_id, block)
    rng = rng_for(seed, chain_id)
    states = np.empty((n + 1, k))
    states[0] = x0
    acc = np.empty(n)
    inner = np.empty(n, dtype=np.int64)
    x = x0
    t0 = time.perf_counter()
    for t in range(n):
        x, acc[t], inner[t] = stepper.step(x, rng)
        if not np.all(np.isfinite(x)):
            raise ChainDivergenceError(f"non-finite state at step {t + 1}")
        states[t + 1] = x
    return ChainTrace(seed, states, acc, inner, time.perf_counter() - t0, n, chain_id)


def _run_fast(stepper, x0, n, seed, chain_id, block):
    tg = stepper.target
    k = tg.dim
    dir_rng = rng_for(seed, chain_id, 0)
    line_rng = rng_for(seed, chain_id, 1)
    code = _KIND_CODE[stepper.kind]
    states = np.empty((n + 1, k))
    states[0] = x0
    acc = np.empty(n)
    inner = np.empty(n, dtype=np.int64)
    theta = x0.copy()
    if stepper.kind == "iterated" and stepper.lam_fixed <= 0:
        per_step = max(1, math.ceil(conditioning_number(tg.Xi) / stepper.lam_divisor))
    elif stepper.kind == "iterated":
        per_step = stepper.lam_fixed
    elif stepper.kind == "ideal":
        per_step = 4 * max(1, math.ceil(math.sqrt(conditioning_number(tg.Xi))))
    else:
        per_step = 1
    t0 = time.perf_counter()
    t = 0
    while t < n:
        stop = min(n, t + block)
        dirs = dir_rng.standard_normal((stop - t, k))
        dstart = t
        grow = 1
        while t < stop:
            m = max(64, (stop - t) * per_step) * grow
            znorm = line_rng.standard_normal(m)
            zunif = line_rng.random(m)
            zunif[zunif == 0.0] = np.finfo(float).tiny
            a = tg.Xi @ theta
            nt, _, status = fc.run_block(code, tg.Xi, tg.y, theta, a, t, stop, dirs[t - dstart:],
                                         znorm, zunif, 0, stepper.lam_divisor, stepper.lam_fixed,
                                         states, acc, inner)
            if status == 2:
                raise ChainDivergenceError(f"line sampler failed at step {nt + 1}")
            if nt > t and not np.all(np.isfinite(states[nt])):
                raise ChainDivergenceError(f"non-finite state at step {nt}")
            grow = 2 * grow if nt == t else 1
            t = nt
    return ChainTrace(seed, states, acc, inner, time.perf_counter() - t0, n, chain_id)


def warm_up(stepper: Stepper) -> None:
    """Trigger compilation so that timings exclude it."""
    if _fast_eligible(stepper):
        run_chain(stepper, np.zeros(stepper.target.dim), 2, seed=0)
