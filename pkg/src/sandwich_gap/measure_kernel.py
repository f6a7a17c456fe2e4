"""Finite-state measures, Markov kernels and the L^2 operator computations
built on them.

Functions act on column vectors: a matrix ``J`` of shape ``(m, n)`` maps a
function ``f`` on an ``n``-point space to ``J @ f`` on an ``m``-point space.
A Markov kernel is therefore a row-stochastic square matrix.

Spectral quantities are computed in symmetrized coordinates.  For a measure
``mu`` with full support, ``D^{1/2} J D^{-1/2}`` is symmetric exactly when
``J`` is self-adjoint in ``L^2(mu)``; an orthonormal basis of the complement
of ``sqrt(mu)`` then spans the image of ``L^2_0(mu)``.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from functools import cached_property
from typing import TextIO, Union

import numpy as np

STOCHASTIC_TOL = 1e-12
SELF_ADJOINT_TOL = 1e-10
EIG_TOL = 1e-9


class DimensionError(ValueError):
    """Operands live on incompatible state spaces."""


class ZeroWeightError(ValueError):
    """A measure with zero-weight states was passed where full support is
    required.  Use :func:`restrict_to_support` first."""


class NotSelfAdjointError(ValueError):
    pass


class NotPSDError(ValueError):
    pass


class NoSpectralGapError(ValueError):
    """Raised when the operator norm on L^2_0 equals one."""


@dataclass(frozen=True, eq=False)
class FiniteMeasure:
    """Probability weights over an enumerated finite state space."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.ndim != 1 or w.size == 0:
            raise DimensionError("weights must be a non-empty vector")
        if np.any(w < 0):
            raise ValueError("negative weight")
        if abs(w.sum() - 1.0) > STOCHASTIC_TOL:
            raise ValueError(f"weights sum to {w.sum()!r}, not 1")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def normalized(cls, w) -> "FiniteMeasure":
        w = np.asarray(w, dtype=float)
        return cls(w / w.sum())

    @classmethod
    def uniform(cls, n: int) -> "FiniteMeasure":
        return cls(np.full(n, 1.0 / n))

    @property
    def n(self) -> int:
        return self.weights.size

    @cached_property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.weights > 0)

    @property
    def full_support(self) -> bool:
        return self.support.size == self.n

    def mean(self, f) -> float:
        return float(self.weights @ np.asarray(f, dtype=float))

    def inner(self, f, g) -> float:
        return float(np.sum(self.weights * np.asarray(f) * np.asarray(g)))

    def norm2(self, f) -> float:
        """Squared L^2 norm."""
        return self.inner(f, f)

    def center(self, f) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        return f - self.mean(f)

    def variance(self, f) -> float:
        return self.norm2(self.center(f))

    @cached_property
    def l0_basis(self) -> np.ndarray:
        """Orthonormal ``(n, n-1)`` basis of the complement of ``sqrt(w)``.

        Built from a Householder reflection that sends ``e_0`` to ``sqrt(w)``.
        """
        _require_full_support(self)
        r = np.sqrt(self.weights)
        n = r.size
        e = np.zeros(n)
        e[0] = 1.0
        v = e - r
        nv = np.linalg.norm(v)
        if nv < 1e-15:
            H = np.eye(n)
        else:
            v /= nv
            H = np.eye(n) - 2.0 * np.outer(v, v)
        return H[:, 1:].copy()

    @cached_property
    def l0_function_basis(self) -> np.ndarray:
        """Columns form an orthonormal basis of ``L^2_0(mu)`` (original coordinates)."""
        return self.l0_basis / np.sqrt(self.weights)[:, None]


@dataclass(frozen=True, eq=False)
class FiniteKernel:
    """Row-stochastic square matrix over an enumerated state space."""

    matrix: np.ndarray

    def __post_init__(self):
        K = np.array(self.matrix, dtype=float)
        if K.ndim != 2 or K.shape[0] != K.shape[1]:
            raise DimensionError("kernel must be a square matrix")
        if np.any(K < -STOCHASTIC_TOL):
            raise ValueError("kernel has negative entries")
        dev = np.max(np.abs(K.sum(axis=1) - 1.0))
        if dev > STOCHASTIC_TOL:
            raise ValueError(f"rows do not sum to 1 (max deviation {dev:.3g})")
        K = np.clip(K, 0.0, None)
        K.setflags(write=False)
        object.__setattr__(self, "matrix", K)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def __matmul__(self, other):
        return self.matrix @ _as_matrix(other)


@dataclass(frozen=True, eq=False)
class SelfAdjointOperator:
    """Square matrix self-adjoint in ``L^2(measure)``; need not be stochastic."""

    matrix: np.ndarray
    measure: FiniteMeasure

    def __post_init__(self):
        J = np.array(self.matrix, dtype=float)
        w = self.measure.weights
        if J.shape != (w.size, w.size):
            raise DimensionError("operator and measure dimensions differ")
        DJ = w[:, None] * J
        asym = np.max(np.abs(DJ - DJ.T)) if J.size else 0.0
        if asym > SELF_ADJOINT_TOL:
            raise NotSelfAdjointError(f"D J - J^T D has max entry {asym:.3g}")
        J.setflags(write=False)
        object.__setattr__(self, "matrix", J)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True, eq=False)
class CenteredFunction:
    """Element of ``L^2_0(measure)``."""

    values: np.ndarray
    measure: FiniteMeasure

    def __post_init__(self):
        f = np.array(self.values, dtype=float)
        if f.shape != (self.measure.n,):
            raise DimensionError("function and measure dimensions differ")
        if abs(self.measure.mean(f)) > 1e-10:
            raise ValueError("function is not centered")
        f.setflags(write=False)
        object.__setattr__(self, "values", f)

    @classmethod
    def from_values(cls, f, measure: FiniteMeasure) -> "CenteredFunction":
        return cls(measure.center(f), measure)


Operator = Union[FiniteKernel, SelfAdjointOperator, np.ndarray]


def _as_matrix(K) -> np.ndarray:
    if isinstance(K, (FiniteKernel, SelfAdjointOperator)):
        return K.matrix
    return np.asarray(K, dtype=float)


def _as_measure(mu) -> FiniteMeasure:
    return mu if isinstance(mu, FiniteMeasure) else FiniteMeasure(mu)


def _require_full_support(mu: FiniteMeasure):
    if not mu.full_support:
        raise ZeroWeightError(
            f"{mu.n - mu.support.size} zero-weight state(s); restrict to the support first"
        )


def _check_dims(K: np.ndarray, mu: FiniteMeasure):
    if K.shape != (mu.n, mu.n):
        raise DimensionError(f"operator shape {K.shape} vs measure size {mu.n}")


# ---------------------------------------------------------------------------
# L^2_0 coordinates


def l0_matrix(J, mu_in, mu_out=None) -> np.ndarray:
    """Matrix of ``J: L^2_0(mu_in) -> L^2_0(mu_out)`` in orthonormal coordinates.

    The output component along constants is discarded, so the result is the
    compression of ``J`` to mean-zero functions.
    """
    J = _as_matrix(J)
    mu_in = _as_measure(mu_in)
    mu_out = mu_in if mu_out is None else _as_measure(mu_out)
    if J.shape != (mu_out.n, mu_in.n):
        raise DimensionError(f"map shape {J.shape} vs ({mu_out.n}, {mu_in.n})")
    _require_full_support(mu_in)
    _require_full_support(mu_out)
    A = np.sqrt(mu_out.weights)[:, None] * J / np.sqrt(mu_in.weights)[None, :]
    return mu_out.l0_basis.T @ A @ mu_in.l0_basis


def _sym_l0(K, mu: FiniteMeasure, tol: float = SELF_ADJOINT_TOL) -> np.ndarray:
    K = _as_matrix(K)
    _check_dims(K, mu)
    _require_full_support(mu)
    s = np.sqrt(mu.weights)
    A = s[:, None] * K / s[None, :]
    asym = np.max(np.abs(A - A.T))
    if asym > tol * max(1.0, np.max(np.abs(A))):
        raise NotSelfAdjointError(f"operator is not self-adjoint (asymmetry {asym:.3g})")
    G = l0_matrix(K, mu)
    if G.size:
        asym = np.max(np.abs(G - G.T))
        if asym > tol * max(1.0, np.max(np.abs(G))):
            raise NotSelfAdjointError(f"operator is not self-adjoint (asymmetry {asym:.3g})")
    return 0.5 * (G + G.T)


def l0_spectrum(K, mu) -> np.ndarray:
    """Ascending eigenvalues of a self-adjoint operator restricted to ``L^2_0(mu)``."""
    mu = _as_measure(mu)
    G = _sym_l0(K, mu)
    return np.linalg.eigvalsh(G)


def dirichlet_matrix(K, mu) -> np.ndarray:
    """Symmetric matrix of the Dirichlet form on ``L^2_0(mu)`` (orthonormal coordinates)."""
    mu = _as_measure(mu)
    G = _sym_l0(K, mu)
    return np.eye(G.shape[0]) - G


def _spectral_extremes(K, mu):
    mu = _as_measure(mu)
    if mu.n == 1:
        # L^2_0 is trivial; the configuration behaves like exact resampling.
        return 0.0, 0.0
    ev = l0_spectrum(K, mu)
    lo, hi = ev[0], ev[-1]
    if lo < -1.0 - EIG_TOL or hi > 1.0 + EIG_TOL:
        raise ValueError(f"operator norm exceeds 1 (spectrum [{lo:.6g}, {hi:.6g}])")
    return lo, hi


def right_gap(K, mu) -> float:
    """``1 - sup spectrum`` of ``K`` on ``L^2_0(mu)``, clamped to ``[0, 2]``."""
    _, hi = _spectral_extremes(K, mu)
    return float(np.clip(1.0 - hi, 0.0, 2.0))


def left_gap(K, mu) -> float:
    """``inf spectrum + 1`` of ``K`` on ``L^2_0(mu)``, clamped to ``[0, 2]``."""
    lo, _ = _spectral_extremes(K, mu)
    return float(np.clip(lo + 1.0, 0.0, 2.0))


def operator_norm_L0(K, mu, tol: float = EIG_TOL) -> float:
    """Norm of ``K`` on ``L^2_0(mu)``; ``K`` need not be self-adjoint.

    Requires ``mu K = mu`` so that mean-zero functions are preserved.  The
    norm is the square root of the top eigenvalue of ``K^* K`` on ``L^2_0``.
    """
    K = _as_matrix(K)
    mu = _as_measure(mu)
    _check_dims(K, mu)
    dev = np.max(np.abs(mu.weights @ K - mu.weights))
    if dev > tol:
        raise ValueError(f"mu K != mu (max deviation {dev:.3g})")
    if mu.n == 1:
        return 0.0
    G = l0_matrix(K, mu)
    top = np.linalg.eigvalsh(G.T @ G)[-1]
    return float(math.sqrt(max(top, 0.0)))


def is_reversible(K, mu, tol: float = SELF_ADJOINT_TOL) -> bool:
    """Detailed balance ``mu(x)K(x,y) = mu(y)K(y,x)`` together with ``mu K = mu``."""
    K = _as_matrix(K)
    mu = _as_measure(mu)
    _check_dims(K, mu)
    W = mu.weights[:, None] * K
    if np.max(np.abs(W - W.T)) > tol:
        return False
    return bool(np.max(np.abs(mu.weights @ K - mu.weights)) <= tol)


def dirichlet_form(K, mu, f) -> float:
    """``||f||^2 - <f, K f>`` for centered ``f``.

    The double-integral form ``1/2 sum mu(x) K(x,y) (f(y) - f(x))^2`` is also
    evaluated; the two must agree for a ``mu``-stationary operator.
    """
    K = _as_matrix(K)
    mu = _as_measure(mu)
    _check_dims(K, mu)
    if isinstance(f, CenteredFunction):
        f = f.values
    f = np.asarray(f, dtype=float)
    if f.shape != (mu.n,):
        raise DimensionError("function and measure dimensions differ")
    if abs(mu.mean(f)) > 1e-10 * max(1.0, np.max(np.abs(f))):
        raise ValueError("f must be centered")
    inner = mu.norm2(f) - mu.inner(f, K @ f)
    diff = f[None, :] - f[:, None]
    double = 0.5 * float(np.sum(mu.weights[:, None] * K * diff**2))
    scale = max(1.0, mu.norm2(f))
    if abs(inner - double) > 1e-10 * scale:
        raise ValueError(
            f"Dirichlet form formulas disagree ({inner!r} vs {double!r}); "
            "operator is not mu-stationary"
        )
    return float(inner)


def dirichlet_bilinear(K, mu) -> np.ndarray:
    """Matrix ``L`` with ``g^T L h = 1/2 sum mu(x)K(x,y)(g(y)-g(x))(h(y)-h(x))``.

    Defined on all functions (original coordinates) and valid for measures with
    zero-weight states.
    """
    K = _as_matrix(K)
    mu = _as_measure(mu)
    _check_dims(K, mu)
    W = mu.weights[:, None] * K
    return 0.5 * (np.diag(W.sum(axis=1) + W.sum(axis=0)) - W - W.T)


def psd_square_root(M, mu, tol: float = EIG_TOL) -> SelfAdjointOperator:
    """Positive square root of a reversible PSD operator on ``L^2(mu)``."""
    M = _as_matrix(M)
    mu = _as_measure(mu)
    _check_dims(M, mu)
    _require_full_support(mu)
    s = np.sqrt(mu.weights)
    A = s[:, None] * M / s[None, :]
    if np.max(np.abs(A - A.T)) > SELF_ADJOINT_TOL:
        raise NotSelfAdjointError("M is not reversible with respect to mu")
    A = 0.5 * (A + A.T)
    vals, vecs = np.linalg.eigh(A)
    if vals[0] < -tol:
        raise NotPSDError(f"M has eigenvalue {vals[0]:.3g} < 0")
    root = (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T
    R = root / s[:, None] * s[None, :]
    return SelfAdjointOperator(R, mu)


def psd_min_eigenvalue(K, mu) -> float:
    """Smallest eigenvalue of a self-adjoint ``K`` on the whole of ``L^2(mu)``."""
    K = _as_matrix(K)
    mu = _as_measure(mu)
    _require_full_support(mu)
    s = np.sqrt(mu.weights)
    A = s[:, None] * K / s[None, :]
    return float(np.linalg.eigvalsh(0.5 * (A + A.T))[0])


# ---------------------------------------------------------------------------
# operator algebra


def adjoint(J, rho, rho_prime=None) -> np.ndarray:
    """Adjoint of ``J: L^2(rho) -> L^2(rho_prime)``, i.e. ``D_rho^{-1} J^T D_rho'``."""
    J = _as_matrix(J)
    rho = _as_measure(rho)
    rho_prime = rho if rho_prime is None else _as_measure(rho_prime)
    if J.shape != (rho_prime.n, rho.n):
        raise DimensionError(f"map shape {J.shape} vs ({rho_prime.n}, {rho.n})")
    _require_full_support(rho)
    return (J.T * rho_prime.weights[None, :]) / rho.weights[:, None]


def compose(*ops) -> np.ndarray:
    """``ops[0] @ ops[1] @ ...``; the last operator acts first."""
    if not ops:
        raise ValueError("nothing to compose")
    out = _as_matrix(ops[0])
    for op in ops[1:]:
        m = _as_matrix(op)
        if out.shape[1] != m.shape[0]:
            raise DimensionError(f"cannot compose {out.shape} with {m.shape}")
        out = out @ m
    return out


def power(K, t: int) -> np.ndarray:
    """``K^t`` by repeated multiplication (``t >= 0``)."""
    K = _as_matrix(K)
    if t < 0:
        raise ValueError("negative power")
    out = np.eye(K.shape[0])
    for _ in range(t):
        out = out @ K
    return out


# ---------------------------------------------------------------------------
# asymptotic variance


def asym_variance_exact(K, mu, f) -> float:
    """Asymptotic variance ``<fbar, (2(I-K)^{-1} - I) fbar>_mu`` of ergodic averages."""
    K = _as_matrix(K)
    mu = _as_measure(mu)
    _check_dims(K, mu)
    if not is_reversible(K, mu, tol=1e-9):
        raise NotSelfAdjointError("K must be reversible with respect to mu")
    if operator_norm_L0(K, mu) >= 1.0 - EIG_TOL:
        raise NoSpectralGapError("||K|| = 1 on L^2_0: asymptotic variance undefined")
    fbar = mu.center(f)
    if mu.n == 1:
        return 0.0
    G = _sym_l0(K, mu)
    v = mu.l0_basis.T @ (np.sqrt(mu.weights) * fbar)
    h = np.linalg.solve(np.eye(G.shape[0]) - G, v)
    return float(2.0 * v @ h - v @ v)


def asym_variances(K, mu, F) -> np.ndarray:
    """:func:`asym_variance_exact` for every column of ``F`` with one solve."""
    K = _as_matrix(K)
    mu = _as_measure(mu)
    _check_dims(K, mu)
    F = np.asarray(F, dtype=float).reshape(mu.n, -1)
    if mu.n == 1:
        return np.zeros(F.shape[1])
    if operator_norm_L0(K, mu) >= 1.0 - EIG_TOL:
        raise NoSpectralGapError("||K|| = 1 on L^2_0: asymptotic variance undefined")
    G = _sym_l0(K, mu)
    Fc = F - mu.weights @ F
    V = mu.l0_basis.T @ (np.sqrt(mu.weights)[:, None] * Fc)
    H = np.linalg.solve(np.eye(G.shape[0]) - G, V)
    return 2.0 * np.einsum("im,im->m", V, H) - np.einsum("im,im->m", V, V)


def asym_variance_series(K, mu, f, rtol: float = 1e-12) -> float:
    """Truncated series ``||fbar||^2 + 2 sum_t <fbar, K^t fbar>``.

    Terms are summed up to ``ceil(log(rtol)/log ||K||)``.
    """
    K = _as_matrix(K)
    mu = _as_measure(mu)
    fbar = mu.center(f)
    nrm = operator_norm_L0(K, mu)
    if nrm >= 1.0 - EIG_TOL:
        raise NoSpectralGapError("||K|| = 1 on L^2_0: series does not converge")
    total = mu.norm2(fbar)
    if nrm <= 0.0:
        return total
    t_max = max(1, math.ceil(math.log(rtol) / math.log(nrm)))
    g = fbar.copy()
    for _ in range(t_max):
        g = K @ g
        total += 2.0 * mu.inner(fbar, g)
    return float(total)


# ---------------------------------------------------------------------------
# support restriction and embeddings


def restrict_to_support(K, mu, tol: float = STOCHASTIC_TOL):
    """Restrict ``K`` to the support of ``mu``.

    Returns ``(K0, mu0, idx)`` where ``idx`` lists the retained states.  The
    support must be closed under ``K``; otherwise the restriction is not a
    Markov kernel.
    """
    K = _as_matrix(K)
    mu = _as_measure(mu)
    _check_dims(K, mu)
    idx = mu.support
    K0 = K[np.ix_(idx, idx)]
    leak = np.max(np.abs(K0.sum(axis=1) - K[idx].sum(axis=1))) if idx.size else 0.0
    if leak > tol:
        raise ValueError(f"support is not closed under K (leak {leak:.3g})")
    w0 = mu.weights[idx]
    return K0, FiniteMeasure(w0 / w0.sum()), idx


def embed(K1, rho1, mapping, n_total: int):
    """Place ``(K1, rho1)`` on an ``n_total``-point space via the injective ``mapping``.

    The remaining states get zero weight and stay put.  Returns ``(K, rho)``.
    """
    K1 = _as_matrix(K1)
    rho1 = _as_measure(rho1)
    mapping = np.asarray(mapping, dtype=int)
    if mapping.size != rho1.n or np.unique(mapping).size != mapping.size:
        raise ValueError("mapping must be injective with one target per state")
    K = np.eye(n_total)
    K[mapping] = 0.0
    K[np.ix_(mapping, mapping)] = K1
    w = np.zeros(n_total)
    w[mapping] = rho1.weights
    return K, FiniteMeasure(w)


def gap_restricted(K, mu) -> float:
    """Right gap after restriction to the support of ``mu``."""
    K0, mu0, _ = restrict_to_support(K, mu)
    return right_gap(K0, mu0)


def left_gap_restricted(K, mu) -> float:
    K0, mu0, _ = restrict_to_support(K, mu)
    return left_gap(K0, mu0)


def norm_restricted(K, mu) -> float:
    K0, mu0, _ = restrict_to_support(K, mu)
    return operator_norm_L0(K0, mu0)


# ---------------------------------------------------------------------------
# basic kernels


def resampling_kernel(mu) -> np.ndarray:
    """``K(x, .) = mu(.)`` for every ``x``."""
    w = _as_measure(mu).weights
    return np.tile(w, (w.size, 1))


def lazy_resampling_kernel(mu, eps: float) -> np.ndarray:
    """``(1 - eps) I + eps * (mu-resampling)``."""
    w = _as_measure(mu).weights
    return (1.0 - eps) * np.eye(w.size) + eps * resampling_kernel(w)


# ---------------------------------------------------------------------------
# text serialization


def write_kernel(fh: TextIO, K, mu) -> None:
    """Write ``n``, the measure weights and the kernel rows, 17 significant digits."""
    K = _as_matrix(K)
    mu = _as_measure(mu)
    _check_dims(K, mu)
    fh.write(f"{mu.n}\n")
    fh.write(" ".join(f"{v:.17g}" for v in mu.weights) + "\n")
    for row in K:
        fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")


def read_kernel(fh: TextIO):
    """Inverse of :func:`write_kernel`; returns ``(matrix, FiniteMeasure)``."""
    lines = [ln for ln in fh.read().splitlines() if ln.strip() and not ln.startswith("#")]
    n = int(lines[0])
    w = np.array(lines[1].split(), dtype=float)
    K = np.array([ln.split() for ln in lines[2 : 2 + n]], dtype=float)
    if w.size != n or K.shape != (n, n):
        raise DimensionError("malformed kernel file")
    return K, FiniteMeasure(w)


def kernel_to_text(K, mu) -> str:
    buf = io.StringIO()
    write_kernel(buf, K, mu)
    return buf.getvalue()


def kernel_from_text(text: str):
    return read_kernel(io.StringIO(text))
