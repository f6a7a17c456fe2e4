"""Weak Poincaré profiles on small finite spaces.

A kernel ``K`` reversible for ``rho`` satisfies a weak Poincaré inequality
with profile ``beta`` when

    ||f||^2 <= s E_K(f) + beta(s) ||f||_osc^2

for every centered ``f`` and ``s > 0``.  On a space with ``n <= 8`` states
the smallest admissible value at a given ``s`` is computed exactly: both sides
are invariant under adding constants, so it is the maximum of the quadratic
``var(g) - s E_K(g)`` over the unit box, which face enumeration solves.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import measure_kernel as mk
from .sandwich import DEFAULT_TOL, SandwichSystem, VerificationReport

EXACT_LIMIT = 8
DYADIC_GRID = 2.0 ** np.arange(-4, 21)
POPOVICIU = 0.25


class ExactnessLimitError(ValueError):
    """The state space is too large for exact face enumeration.

    ``lower_bound`` holds the best value over the box vertices, which is a
    lower bound on the tight constant and cannot certify an inequality.
    """

    def __init__(self, n: int, lower_bound: float):
        super().__init__(f"{n} states exceeds the exact limit of {EXACT_LIMIT}; "
                         f"vertex lower bound {lower_bound:.6g}")
        self.n = n
        self.lower_bound = lower_bound


def osc_norm(f, mu) -> float:
    """``max f - min f`` over the support of ``mu``."""
    mu = mk._as_measure(mu)
    f = np.asarray(f, dtype=float)
    sup = mu.support
    if sup.size == 0:
        raise ValueError("empty support")
    vals = f[sup]
    return float(vals.max() - vals.min())


def _box_parts(K, mu):
    """Variance matrix and Dirichlet matrix on the support of ``mu``."""
    K0, mu0, _ = mk.restrict_to_support(K, mu)
    w = mu0.weights
    V = np.diag(w) - np.outer(w, w)
    L = mk.dirichlet_bilinear(K0, mu0)
    return V, 0.5 * (L + L.T)


def _box_quadratic(K, mu, s: float):
    V, L = _box_parts(K, mu)
    return V - s * L


def _vertices(n: int) -> np.ndarray:
    if n == 0:
        return np.zeros((0, 1))
    return np.array(list(itertools.product((0.0, 1.0), repeat=n))).T


def box_max_quadratic(A) -> np.ndarray | float:
    """Exact ``max g^T A g`` over ``[0, 1]^n`` by enumerating faces.

    ``A`` may be a stack of shape ``(m, n, n)``, in which case a vector of
    maxima is returned.  For each set ``F`` of free coordinates and each 0/1
    assignment of the others, the stationarity system ``A_FF g_F = -A_FC c``
    is solved; feasible solutions and all vertices are evaluated.  When
    ``A_FF`` is singular the objective is constant on the affine solution
    set, which (if it meets the face at all) meets a smaller face, so the
    minimum-norm solution suffices.
    """
    A = np.asarray(A, dtype=float)
    single = A.ndim == 2
    if single:
        A = A[None]
    A = 0.5 * (A + np.swapaxes(A, 1, 2))
    k, n, _ = A.shape
    if n == 0:
        out = np.zeros(k)
        return float(out[0]) if single else out
    scale = np.maximum(1.0, np.abs(A).max(axis=(1, 2)))
    best = np.full(k, -np.inf)
    coords = np.arange(n)
    for r in range(n + 1):
        for F in itertools.combinations(range(n), r):
            F = np.array(F, dtype=int)
            Fc = np.setdiff1d(coords, F)
            Cv = _vertices(Fc.size)
            G = np.zeros((k, n, Cv.shape[1]))
            G[:, Fc] = Cv
            if F.size:
                AFF = A[:, F][:, :, F]
                rhs = -A[:, F][:, :, Fc] @ Cv
                sol = np.linalg.pinv(AFF, rcond=1e-12) @ rhs
                resid = np.abs(AFF @ sol - rhs).max(axis=1)
                ok = ((resid <= 1e-9 * scale[:, None])
                      & (sol.min(axis=1) >= -1e-12) & (sol.max(axis=1) <= 1 + 1e-12))
                if not ok.any():
                    continue
                G[:, F] = np.clip(sol, 0.0, 1.0)
            vals = np.einsum("kim,kim->km", G, A @ G)
            if F.size:
                vals = np.where(ok, vals, -np.inf)
            best = np.maximum(best, vals.max(axis=1))
    return float(best[0]) if single else best


def vertex_max_quadratic(A: np.ndarray) -> float:
    V = _vertices(A.shape[0])
    return float(np.einsum("im,im->m", V, A @ V).max())


def exact_local_alpha(Q, mu, s):
    """Tight ``alpha(s)`` with ``||g||^2 <= s E_Q(g) + alpha(s) ||g||_osc^2``.

    Computed on the support of ``mu``; ``s`` may be an array.  Raises
    :class:`ExactnessLimitError` above :data:`EXACT_LIMIT` support points.
    """
    mu = mk._as_measure(mu)
    s_arr = np.atleast_1d(np.asarray(s, dtype=float))
    if np.any(s_arr < 0):
        raise ValueError("s must be nonnegative")
    V, L = _box_parts(Q, mu)
    if V.shape[0] > EXACT_LIMIT:
        lb = max(0.0, vertex_max_quadratic(V - s_arr.min() * L))
        raise ExactnessLimitError(V.shape[0], lb)
    vals = np.maximum(0.0, box_max_quadratic(V[None] - s_arr[:, None, None] * L[None]))
    # round-off floor of the face solves
    n = V.shape[0]
    floor = 64.0 * n * np.finfo(float).eps * (np.abs(V).max() + s_arr * np.abs(L).max())
    vals = np.where(vals <= floor, 0.0, vals)
    return float(vals[0]) if np.ndim(s) == 0 else vals


def local_alpha_with_flag(Q, mu, s: float):
    """``(value, exact)``; above the exactness limit the vertex maximum is
    returned with ``exact=False``."""
    try:
        return exact_local_alpha(Q, mu, s), True
    except ExactnessLimitError as err:
        return err.lower_bound, False


def aggregate_alpha(sys: SandwichSystem, s):
    """``sum_z varpi(z) alpha(z, s)``; ``s`` may be an array."""
    tot = sum(wz * np.asarray(exact_local_alpha(q, m, s))
              for wz, q, m in zip(sys.varpi.weights, sys.Qz, sys.varpi_zs))
    return float(tot) if np.ndim(s) == 0 else np.asarray(tot)


# ---------------------------------------------------------------------------
# profiles

# grid for tabulating tight profiles: zero plus four points per octave
FINE_GRID = np.concatenate([[0.0], 2.0 ** np.arange(-6.0, 20.25, 0.25)])


@dataclass(frozen=True)
class DecayProfile:
    """Non-increasing profile tabulated on an increasing grid.

    Evaluation uses ``rule`` when one is attached.  Otherwise ``interp``
    decides: ``"linear"`` interpolates linearly in ``s``, which is an upper
    bound for convex profiles such as tight ones (a supremum of functions
    affine in ``s``); ``"step"`` returns the value at the largest grid point
    not exceeding ``s``, an upper bound for any non-increasing profile.
    Below the grid ``max(values[0], 1/4)`` is returned, above it the last
    value is held.
    """

    s_grid: np.ndarray
    values: np.ndarray
    rule: Optional[Callable[[float], float]] = field(default=None, compare=False)
    vanishing: bool = False
    interp: str = "step"

    def __post_init__(self):
        g = np.asarray(self.s_grid, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if g.shape != v.shape or g.ndim != 1 or g.size == 0:
            raise ValueError("grid and values must be matching nonempty vectors")
        if np.any(np.diff(g) <= 0):
            raise ValueError("grid must be increasing")
        if self.interp not in ("step", "linear"):
            raise ValueError(f"unknown interpolation {self.interp!r}")
        object.__setattr__(self, "s_grid", g)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_rule(cls, rule, s_grid=DYADIC_GRID, vanishing=False) -> "DecayProfile":
        g = np.asarray(s_grid, dtype=float)
        return cls(g, np.array([rule(s) for s in g]), rule, vanishing)

    def __call__(self, s: float) -> float:
        if self.rule is not None:
            return float(self.rule(s))
        g = self.s_grid
        if s < g[0]:
            return max(float(self.values[0]), POPOVICIU)
        if self.interp == "linear":
            return float(np.interp(s, g, self.values))
        j = int(np.searchsorted(g, s, side="right")) - 1
        return float(self.values[j])

    def is_nonincreasing(self, tol: float = 1e-12) -> bool:
        return bool(np.all(np.diff(self.values) <= tol))

    def to_csv_rows(self):
        return [(float(s), float(v)) for s, v in zip(self.s_grid, self.values)]


def tight_profile(K, mu, s_grid=FINE_GRID) -> DecayProfile:
    """Exact weak Poincaré profile of ``K`` tabulated on ``s_grid`` (small
    spaces only)."""
    g = np.asarray(s_grid, dtype=float)
    K0, mu0 = mk.restrict_to_support(K, mu)[:2]
    vals = exact_local_alpha(K0, mu0, g)
    return DecayProfile(g, vals, vanishing=mk.right_gap(K0, mu0) > 1e-12, interp="linear")


def alpha_profile(sys: SandwichSystem, s_grid=FINE_GRID) -> DecayProfile:
    """Aggregated local profile ``alpha_bar`` tabulated on ``s_grid``.

    A mixture of convex functions is convex, so linear interpolation is
    again an upper bound."""
    g = np.asarray(s_grid, dtype=float)
    return DecayProfile(g, aggregate_alpha(sys, g),
                        vanishing=bool(np.all(sys.slice_gaps() > 1e-12)), interp="linear")


def _golden_min(fun, lo: float, hi: float, rtol: float = 1e-6, max_iter: int = 200):
    """Minimize ``fun`` on ``[lo, hi]`` by golden-section search."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = fun(c), fun(d)
    for _ in range(max_iter):
        if abs(b - a) <= rtol * max(1.0, abs(a) + abs(b)):
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = fun(d)
    return (c, fc) if fc <= fd else (d, fd)


def compose_point(beta, alpha_bar, c0: float, s: float, s1_max: float = None,
                  s2_max: float = None, n_scan: int = 64, rtol: float = 1e-6):
    """Value of the composed profile at ``s`` and the minimizing ``s1``.

    For ``s >= 1`` this is ``inf beta(s1) + s1 alpha_bar(s2)`` over
    ``s1 s2 = c0 s``; the search runs over ``log s1`` in
    ``[log(c0 s / s2_max), log s1_max]`` with a coarse scan followed by a
    golden-section refinement.
    """
    if s < 1.0:
        return max(POPOVICIU, beta(1.0) + alpha_bar(c0)), None
    s1_max = s1_max or float(DYADIC_GRID[-1])
    s2_max = s2_max or float(DYADIC_GRID[-1])
    lo = math.log(c0 * s / s2_max)
    hi = math.log(s1_max)
    if lo >= hi:
        lo = hi - 1.0

    def obj(t):
        s1 = math.exp(t)
        return beta(s1) + s1 * alpha_bar(c0 * s / s1)

    ts = np.linspace(lo, hi, n_scan)
    vals = np.array([obj(t) for t in ts])
    j = int(np.argmin(vals))
    a = ts[max(j - 1, 0)]
    b = ts[min(j + 1, n_scan - 1)]
    t_star, v_star = _golden_min(obj, a, b, rtol=rtol)
    if vals[j] < v_star:
        t_star, v_star = ts[j], vals[j]
    return float(v_star), math.exp(t_star)


def compose_beta(beta, alpha_bar, c0: float, s_grid=DYADIC_GRID, **kw) -> DecayProfile:
    """Profile for ``S`` obtained from a profile ``beta`` of the idealized
    kernel and the aggregated local profile ``alpha_bar``.

    Values on the grid are replaced by their running minimum; this keeps the
    result non-increasing and is valid because raising ``s`` only weakens the
    inequality.
    """
    g = np.asarray(s_grid, dtype=float)
    raw = np.array([compose_point(beta, alpha_bar, c0, s, **kw)[0] for s in g])
    vals = np.minimum.accumulate(raw)
    vanishing = bool(getattr(beta, "vanishing", False) and getattr(alpha_bar, "vanishing", False))
    return DecayProfile(g, vals, None, vanishing)


# ---------------------------------------------------------------------------
# verification


def function_suite(rng, mu, n_random: int = 12) -> np.ndarray:
    """Columns: point indicators, random vectors, sorted ("smooth") vectors
    and random set indicators, without those constant on the support."""
    mu = mk._as_measure(mu)
    n = mu.n
    cols = [np.eye(n)]
    cols.append(rng.normal(size=(n, n_random)))
    cols.append(np.sort(rng.normal(size=(n, n_random)), axis=0))
    ind = (rng.random((n, n_random)) < 0.5).astype(float)
    cols.append(ind)
    F = np.concatenate(cols, axis=1)
    # columns constant on the support make both sides vanish
    return F[:, _osc_cols(F, mu.support) > 1e-12]


def _energy(K, mu, F) -> np.ndarray:
    L = mk.dirichlet_bilinear(K, mu)
    return np.einsum("im,im->m", F, L @ F)


def _osc_cols(F, support) -> np.ndarray:
    V = F[support]
    return V.max(axis=0) - V.min(axis=0)


def osc_contraction_margin(sys: SandwichSystem, F) -> float:
    """``min_f (||f||_osc - ||Pf||_osc)`` over the columns of ``F``."""
    PF = sys.P @ F
    sup_t = np.flatnonzero(sys.pitilde_flat > 0)
    return float(np.min(_osc_cols(F, sys.pi.support) - _osc_cols(PF, sup_t)))


def verify_weak_lemma(sys: SandwichSystem, s_grid=None, tol: float = DEFAULT_TOL, seed: int = 0,
                      alpha_bar: Optional[DecayProfile] = None):
    """``E_{S-bar}(f) <= s E_S(f) / c0 + alpha_bar(s) ||f||_osc^2`` for ``s >= 1``."""
    rng = np.random.default_rng(seed)
    F = function_suite(rng, sys.pi)
    pre = osc_contraction_margin(sys, F)
    if pre < -1e-12:
        return [VerificationReport.premise("weak.osc_contraction", pre, 0.0)]
    grid = DYADIC_GRID if s_grid is None else np.asarray(s_grid, dtype=float)
    grid = grid[grid >= 1.0]
    if grid.size == 0:
        return []
    eB = _energy(sys.Sbar, sys.pi, F)
    eS = _energy(sys.S, sys.pi, F)
    osc2 = _osc_cols(F, sys.pi.support) ** 2
    ab = alpha_bar
    if ab is None:
        ab = DecayProfile(grid, aggregate_alpha(sys, grid), interp="linear")
    worst = math.inf
    for s in grid:
        rhs = s * eS / sys.c0 + ab(s) * osc2
        m = float(np.min(rhs - eB))
        if m < worst:
            worst = m
    return [VerificationReport.geq("weak.lemma", worst, 0.0, tol=tol)]


def verify_weak_composition(sys: SandwichSystem, s_grid=DYADIC_GRID, tol: float = DEFAULT_TOL,
                            seed: int = 0):
    """Full pipeline on a system with ``|X| <= 8``.

    The idealized kernel's tight profile and the aggregated local profile are
    composed, then ``||f||^2 <= s E_S(f) + beta_tilde(s) ||f||_osc^2`` is
    checked over the function suite and the grid (including ``s < 1``).
    """
    grid = np.asarray(s_grid, dtype=float)
    beta = tight_profile(sys.Sbar, sys.pi)
    ab = alpha_profile(sys)
    bt = compose_beta(beta, ab, sys.c0, grid)
    rng = np.random.default_rng(seed)
    F = function_suite(rng, sys.pi)
    Fc = F - sys.pi.weights @ F
    nrm = np.einsum("im,im->m", Fc, sys.pi.weights[:, None] * Fc)
    eS = _energy(sys.S, sys.pi, F)
    osc2 = _osc_cols(F, sys.pi.support) ** 2
    worst = min(float(np.min(s * eS + v * osc2 - nrm)) for s, v in zip(grid, bt.values))
    small = bt.values[grid < 1.0]
    out = [
        VerificationReport.geq("weak.composed_inequality", worst, 0.0, tol=tol),
        VerificationReport.geq("weak.nonincreasing", 0.0, float(np.max(np.diff(bt.values))), tol=1e-12),
    ]
    if small.size:
        out.append(VerificationReport.geq("weak.popoviciu_branch", float(small.min()), POPOVICIU, tol=1e-12))
    return out, bt, beta, ab
