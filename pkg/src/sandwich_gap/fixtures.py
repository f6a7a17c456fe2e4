"""Seeded random kernels and measures used by the verification sweeps."""

from __future__ import annotations

import numpy as np

from .measure_kernel import FiniteMeasure, resampling_kernel


def rng_for(seed, *stream) -> np.random.Generator:
    """Counter-based generator keyed by ``seed`` and an optional stream id."""
    ss = np.random.SeedSequence([int(seed), *[int(s) for s in stream]])
    return np.random.Generator(np.random.Philox(ss))


def random_measure(rng, n: int, floor: float = 0.05) -> np.ndarray:
    w = rng.dirichlet(np.ones(n)) + floor / n
    return w / w.sum()


def random_reversible(rng, n: int, sparsity: float = 0.0):
    """Symmetric nonnegative ``A`` normalized by row sums.

    Returns ``(K, mu)`` with ``mu`` proportional to the row sums of ``A``.
    """
    A = rng.exponential(size=(n, n))
    if sparsity > 0:
        mask = rng.random((n, n)) < sparsity
        A[mask] = 0.0
    A = A + A.T
    A[np.diag_indices(n)] += 1e-3
    r = A.sum(axis=1)
    return A / r[:, None], FiniteMeasure(r / r.sum())


def reversible_for(rng, mu, laziness: float | None = None, sparsity: float = 0.3) -> np.ndarray:
    """Random kernel reversible with respect to the given weights.

    Off-diagonal flow ``C(x,y) = C(y,x)`` is drawn at random and scaled so that
    no row exceeds mass one; the remainder sits on the diagonal.  With
    ``laziness`` given, the holding probability is at least that value.
    """
    w = np.asarray(mu.weights if isinstance(mu, FiniteMeasure) else mu, dtype=float)
    n = w.size
    if n == 1:
        return np.ones((1, 1))
    C = rng.exponential(size=(n, n))
    if sparsity > 0:
        C[rng.random((n, n)) < sparsity] = 0.0
    C = np.triu(C, 1)
    C = C + C.T
    out = C.sum(axis=1) / w
    top = out.max()
    if top <= 0:
        return np.eye(n)
    hold = rng.uniform(0.0, 0.6) if laziness is None else laziness
    K = C / w[:, None] * ((1.0 - hold) / top)
    K[np.diag_indices(n)] = 1.0 - K.sum(axis=1)
    return _fix_rows(K)


def metropolis(mu, proposal=None) -> np.ndarray:
    """Metropolis kernel with symmetric proposal (uniform by default)."""
    w = np.asarray(mu.weights if isinstance(mu, FiniteMeasure) else mu, dtype=float)
    n = w.size
    if proposal is None:
        proposal = np.full((n, n), 1.0 / n)
    ratio = np.minimum(1.0, w[None, :] / w[:, None])
    K = proposal * ratio
    K[np.diag_indices(n)] = 0.0
    K[np.diag_indices(n)] = 1.0 - K.sum(axis=1)
    return _fix_rows(K)


def lazy(K, eps: float) -> np.ndarray:
    """``(1 - eps) I + eps K``."""
    K = np.asarray(K, dtype=float)
    return (1.0 - eps) * np.eye(K.shape[0]) + eps * K


def lazy_resampling(mu, eps: float) -> np.ndarray:
    w = np.asarray(mu.weights if isinstance(mu, FiniteMeasure) else mu, dtype=float)
    return lazy(resampling_kernel(w), eps)


def psd_for(rng, mu, m: int | None = None) -> np.ndarray:
    """PSD kernel ``G* G`` reversible with respect to ``mu``.

    ``G`` moves ``x`` to an auxiliary label ``v`` drawn from a random joint
    table with first marginal ``mu``; ``G*`` moves back.
    """
    w = np.asarray(mu.weights if isinstance(mu, FiniteMeasure) else mu, dtype=float)
    n = w.size
    m = m or max(2, n)
    cond = rng.dirichlet(np.full(m, 0.7), size=n)
    J = w[:, None] * cond
    nu = J.sum(axis=0)
    keep = nu > 0
    J, nu = J[:, keep], nu[keep]
    G = J / w[:, None]
    K = G @ (J.T / nu[:, None])
    return _fix_rows(K)


def flip_like(rng, mu) -> np.ndarray:
    """Reversible kernel with no holding at its busiest state, so the spectrum
    typically reaches well below zero."""
    return reversible_for(rng, mu, laziness=0.0, sparsity=0.0)


def random_joint(rng, nx: int, nz: int, zero_frac: float = 0.0) -> np.ndarray:
    """Random probability table with strictly positive row and column sums."""
    J = rng.exponential(size=(nx, nz))
    if zero_frac > 0:
        J[rng.random((nx, nz)) < zero_frac] = 0.0
    for x in range(nx):
        if J[x].sum() == 0:
            J[x, rng.integers(nz)] = 1.0
    for z in range(nz):
        if J[:, z].sum() == 0:
            J[rng.integers(nx), z] = 1.0
    return J / J.sum()


def slice_kernel(rng, kind: str, w) -> np.ndarray:
    """Kernel on a slice reversible with respect to ``w`` (zero weights stay put)."""
    w = np.asarray(w, dtype=float)
    n = w.size
    idx = np.flatnonzero(w > 0)
    w0 = w[idx] / w[idx].sum()
    if kind == "resample":
        K0 = resampling_kernel(w0)
    elif kind == "lazy":
        K0 = lazy_resampling(w0, rng.uniform(0.05, 1.0))
    elif kind == "metropolis":
        K0 = metropolis(w0)
    elif kind == "psd":
        K0 = psd_for(rng, w0)
    elif kind == "flip":
        K0 = flip_like(rng, w0)
    elif kind == "identity":
        K0 = np.eye(idx.size)
    else:
        K0 = reversible_for(rng, w0)
    K = np.eye(n)
    K[np.ix_(idx, idx)] = K0
    return K


SLICE_KINDS = ("random", "lazy", "metropolis", "psd", "flip", "resample")


def _fix_rows(K) -> np.ndarray:
    K = np.clip(K, 0.0, None)
    K = K / K.sum(axis=1, keepdims=True)
    return K
