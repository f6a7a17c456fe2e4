"""Sandwich systems ``S = P* Q P`` and verifiers for the gap decompositions
that follow from them.

States of the auxiliary space ``Y x Z`` are flattened z-major: the pair
``(y, z)`` has index ``z * ny + y``.  Operator inequalities are certified by
the smallest eigenvalue of a difference of symmetrized Dirichlet matrices on
``L^2_0(pi)``, so a single eigensolve covers every test function.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Iterable, Optional, Sequence

import numpy as np

from . import measure_kernel as mk
from .measure_kernel import FiniteMeasure

DEFAULT_TOL = 1e-9
IDENTITY_TOL = 1e-10
H4_TOL = 1e-12


@dataclass(frozen=True)
class VerificationReport:
    """Outcome of one numerical check.

    ``margin`` is oriented so that the claim holds when ``margin >= -tol``.
    A report with ``premise_ok=False`` records that the hypotheses of the
    claim were not met; it is informational and never counts as a failure.
    """

    claim_id: str
    lhs: float
    rhs: float
    margin: float
    passed: bool
    seed: Optional[int] = None
    tol: float = DEFAULT_TOL
    kind: str = "exact"
    premise_ok: bool = True

    @classmethod
    def geq(cls, claim_id, lhs, rhs, tol=DEFAULT_TOL, **kw) -> "VerificationReport":
        """Report for the claim ``lhs >= rhs``."""
        lhs, rhs = float(lhs), float(rhs)
        margin = lhs - rhs
        return cls(claim_id, lhs, rhs, margin, bool(margin >= -tol), tol=tol, **kw)

    @classmethod
    def close(cls, claim_id, lhs, rhs, tol=IDENTITY_TOL, **kw) -> "VerificationReport":
        """Report for ``|lhs - rhs| <= tol`` (margin is ``-|lhs - rhs|``)."""
        lhs, rhs = float(lhs), float(rhs)
        margin = -abs(lhs - rhs)
        return cls(claim_id, lhs, rhs, margin, bool(margin >= -tol), tol=tol, **kw)

    @classmethod
    def premise(cls, claim_id, lhs, rhs, **kw) -> "VerificationReport":
        return cls(claim_id, float(lhs), float(rhs), float(lhs) - float(rhs), True,
                   premise_ok=False, **kw)

    @property
    def failed(self) -> bool:
        return self.premise_ok and not self.passed

    def with_seed(self, seed) -> "VerificationReport":
        return replace(self, seed=seed)


REPORT_COLUMNS = ("claim_id", "seed", "lhs", "rhs", "margin", "pass")


def write_reports(path_or_fh, reports: Iterable[VerificationReport]) -> None:
    """CSV with columns ``claim_id, seed, lhs, rhs, margin, pass``."""
    own = isinstance(path_or_fh, (str, bytes)) or hasattr(path_or_fh, "__fspath__")
    fh = open(path_or_fh, "w", newline="") if own else path_or_fh
    try:
        w = csv.writer(fh)
        w.writerow(REPORT_COLUMNS)
        for r in reports:
            status = "premise" if not r.premise_ok else ("true" if r.passed else "false")
            seed = "" if r.seed is None else r.seed
            w.writerow([r.claim_id, seed, f"{r.lhs:.17g}", f"{r.rhs:.17g}",
                        f"{r.margin:.17g}", status])
    finally:
        if own:
            fh.close()


def set_seed(reports: Iterable[VerificationReport], seed) -> list:
    return [r.with_seed(seed) for r in reports]


# ---------------------------------------------------------------------------
# system


@dataclass(frozen=True, eq=False)
class SandwichSystem:
    """Finite sandwich structure.

    Parameters
    ----------
    pi : FiniteMeasure
        Target on ``X``; full support is required.
    pitilde : ndarray, shape (ny, nz)
        Joint weights on ``Y x Z``; zero entries are allowed.
    P : ndarray, shape (nz*ny, nx)
        Map from functions on ``X`` to functions on ``Y x Z``.
    Q : ndarray, shape (nz*ny, nz*ny)
        Core kernel on ``Y x Z``.
    Qz : sequence of ndarray, each (ny, ny)
        Per-slice kernels.
    c0 : float
        Constant in the off-diagonal domination of ``Q`` over the ``Q_z``.
    R : ndarray, shape (nx, nz*ny), optional
        Factor with ``Q = R* R``; ``T = R P`` is then the kernel of interest.
    """

    pi: FiniteMeasure
    pitilde: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    Qz: tuple
    c0: float = 1.0
    R: Optional[np.ndarray] = None
    label: str = ""

    def __post_init__(self):
        pi = self.pi if isinstance(self.pi, FiniteMeasure) else FiniteMeasure(self.pi)
        object.__setattr__(self, "pi", pi)
        pt = np.array(self.pitilde, dtype=float)
        if pt.ndim != 2:
            raise mk.DimensionError("pitilde must be a (ny, nz) table")
        if np.any(pt < 0) or abs(pt.sum() - 1.0) > mk.STOCHASTIC_TOL:
            raise ValueError("pitilde must be a probability table")
        ny, nz = pt.shape
        N = ny * nz
        P = np.array(self.P, dtype=float)
        Q = np.array(self.Q, dtype=float)
        Qz = tuple(np.array(q, dtype=float) for q in self.Qz)
        if P.shape != (N, pi.n):
            raise mk.DimensionError(f"P has shape {P.shape}, expected {(N, pi.n)}")
        if Q.shape != (N, N):
            raise mk.DimensionError(f"Q has shape {Q.shape}, expected {(N, N)}")
        if len(Qz) != nz or any(q.shape != (ny, ny) for q in Qz):
            raise mk.DimensionError("need one (ny, ny) kernel per z")
        if not (0.0 < self.c0 <= 1.0):
            raise ValueError("c0 must lie in (0, 1]")
        R = None
        if self.R is not None:
            R = np.array(self.R, dtype=float)
            if R.shape != (pi.n, N):
                raise mk.DimensionError(f"R has shape {R.shape}, expected {(pi.n, N)}")
        mk._require_full_support(pi)
        for name, arr in (("pitilde", pt), ("P", P), ("Q", Q), ("R", R)):
            if arr is not None:
                arr.setflags(write=False)
                object.__setattr__(self, name, arr)
        for q in Qz:
            q.setflags(write=False)
        object.__setattr__(self, "Qz", Qz)

    # -- shapes and measures -------------------------------------------------

    @property
    def nx(self) -> int:
        return self.pi.n

    @property
    def ny(self) -> int:
        return self.pitilde.shape[0]

    @property
    def nz(self) -> int:
        return self.pitilde.shape[1]

    def index(self, y: int, z: int) -> int:
        return z * self.ny + y

    @cached_property
    def pitilde_flat(self) -> np.ndarray:
        return self.pitilde.T.reshape(-1)

    @cached_property
    def pitilde_measure(self) -> FiniteMeasure:
        return FiniteMeasure(self.pitilde_flat)

    @cached_property
    def varpi(self) -> FiniteMeasure:
        """Z-marginal of ``pitilde``."""
        return FiniteMeasure(self.pitilde.sum(axis=0))

    def varpi_z(self, z: int) -> FiniteMeasure:
        col = self.pitilde[:, z]
        m = col.sum()
        if m <= 0:
            raise mk.ZeroWeightError(f"z-atom {z} has zero mass")
        return FiniteMeasure(col / m)

    @cached_property
    def varpi_zs(self) -> tuple:
        return tuple(self.varpi_z(z) for z in range(self.nz))

    # -- derived operators ---------------------------------------------------

    @cached_property
    def Pstar(self) -> np.ndarray:
        return mk.adjoint(self.P, self.pi, self.pitilde_measure)

    @cached_property
    def S(self) -> np.ndarray:
        return self.Pstar @ self.Q @ self.P

    @cached_property
    def Qhat(self) -> np.ndarray:
        return build_qhat(self)

    @cached_property
    def PQhatP(self) -> np.ndarray:
        return self.Pstar @ self.Qhat @ self.P

    @cached_property
    def E(self) -> np.ndarray:
        return projection_E(self)[0]

    @cached_property
    def Estar(self) -> np.ndarray:
        return projection_E(self)[1]

    @cached_property
    def Sbar(self) -> np.ndarray:
        return self.Pstar @ self.Estar @ self.E @ self.P

    @cached_property
    def companion(self) -> np.ndarray:
        """``E P P* E*`` acting on functions of ``z``."""
        return self.E @ self.P @ self.Pstar @ self.Estar

    @cached_property
    def T(self) -> Optional[np.ndarray]:
        return None if self.R is None else self.R @ self.P

    @cached_property
    def Rstar(self) -> Optional[np.ndarray]:
        if self.R is None:
            return None
        return mk.adjoint(self.R, self.pitilde_measure, self.pi)

    def slice_gaps(self) -> np.ndarray:
        return np.array([mk.gap_restricted(q, m) for q, m in zip(self.Qz, self.varpi_zs)])

    def slice_left_gaps(self) -> np.ndarray:
        return np.array([mk.left_gap_restricted(q, m) for q, m in zip(self.Qz, self.varpi_zs)])

    def slice_norms(self) -> np.ndarray:
        return np.array([mk.norm_restricted(q, m) for q, m in zip(self.Qz, self.varpi_zs)])

    def slice_min_eigs(self) -> np.ndarray:
        out = []
        for q, m in zip(self.Qz, self.varpi_zs):
            q0, m0, _ = mk.restrict_to_support(q, m)
            out.append(mk.psd_min_eigenvalue(q0, m0))
        return np.array(out)

    @property
    def kappa_dagger(self) -> float:
        """``min_z Gap(Q_z)`` capped at 1, the admissible range of the constant."""
        return min(1.0, float(self.slice_gaps().min()))

    @property
    def kappa_ddagger(self) -> float:
        """``min_z Gap_-(Q_z)`` capped at 1."""
        return min(1.0, float(self.slice_left_gaps().min()))

    @property
    def kappa_0(self) -> float:
        return float((1.0 - self.slice_norms()).min())

    def with_core(self, Qz, Q=None, c0=None) -> "SandwichSystem":
        """Same ``P`` and measures, new per-slice kernels (core defaults to ``Q-hat``)."""
        Qz = tuple(Qz)
        if Q is None:
            Q = _block_diag(Qz, self.ny, self.nz)
        return replace(self, Qz=Qz, Q=Q, c0=self.c0 if c0 is None else c0, R=None)


def _block_diag(Qz, ny, nz) -> np.ndarray:
    out = np.zeros((ny * nz, ny * nz))
    for z, q in enumerate(Qz):
        s = slice(z * ny, (z + 1) * ny)
        out[s, s] = q
    return out


def build_qhat(sys: SandwichSystem) -> np.ndarray:
    """Block-diagonal ``Q-hat((y,z),(y',z')) = Q_z(y,y') [z = z']``."""
    return _block_diag(sys.Qz, sys.ny, sys.nz)


def projection_E(sys: SandwichSystem):
    """Conditional expectation ``E`` onto functions of ``z`` and its adjoint.

    Returns ``(E, Estar)`` with shapes ``(nz, nz*ny)`` and ``(nz*ny, nz)``.
    """
    ny, nz = sys.ny, sys.nz
    E = np.zeros((nz, ny * nz))
    Es = np.zeros((ny * nz, nz))
    for z in range(nz):
        E[z, z * ny:(z + 1) * ny] = sys.varpi_z(z).weights
        Es[z * ny:(z + 1) * ny, z] = 1.0
    return E, Es


def idealized_kernel(sys: SandwichSystem):
    """``(P* E* E P, E P P* E*)``."""
    return sys.Sbar, sys.companion


# ---------------------------------------------------------------------------
# helpers


def _dir(K, mu) -> np.ndarray:
    return mk.dirichlet_matrix(K, mu)


def _min_eig(A) -> float:
    A = 0.5 * (A + A.T)
    if A.size == 0:
        return 0.0
    return float(np.linalg.eigvalsh(A)[0])


def loewner_margin(A_big, A_small, mu) -> float:
    """Smallest eigenvalue of ``Dir(A_big) - Dir(A_small)``; the operator
    inequality ``E_{A_small} <= E_{A_big}`` holds iff this is nonnegative."""
    return _min_eig(_dir(A_big, mu) - _dir(A_small, mu))


def dirichlet_dominance(K1, c, K2, mu) -> float:
    """Smallest eigenvalue of ``Dir(K1) - c Dir(K2)`` on ``L^2_0(mu)``."""
    return _min_eig(_dir(K1, mu) - c * _dir(K2, mu))


def _gap(K, mu) -> float:
    return mk.right_gap(K, mu)


def _norm_P_on_L0(sys: SandwichSystem) -> float:
    """``sup ||Pf|| / ||f||`` over ``f`` in ``L^2_0(pi)``."""
    if sys.nx == 1:
        return 0.0
    B = sys.pi.l0_basis
    G = np.sqrt(sys.pitilde_flat)[:, None] * sys.P / np.sqrt(sys.pi.weights)[None, :] @ B
    return float(np.linalg.norm(G, 2))


def _rel(x) -> float:
    return max(1.0, float(np.max(np.abs(x)))) if np.size(x) else 1.0


# ---------------------------------------------------------------------------
# axiom checks


def check_axioms(sys: SandwichSystem, tol: float = DEFAULT_TOL, *, negate_h4: bool = False):
    """Reports for H1 to H4 (and C1 when ``R`` is present).

    ``negate_h4`` inflates ``c0`` to 1 in the H4 check; it is a test hook for
    confirming that the check can fail.
    """
    reports = []
    S = sys.S
    W = sys.pi.weights[:, None] * S
    asym = float(np.max(np.abs(W - W.T)))
    stat = float(np.max(np.abs(sys.pi.weights @ S - sys.pi.weights)))
    reports.append(VerificationReport.geq("H1.reversible", 0.0, max(asym, stat), tol=IDENTITY_TOL))

    nrm = _norm_P_on_L0(sys)
    reports.append(VerificationReport.geq("H2.norm_PstarP", 1.0, nrm**2, tol=tol))
    lhs = sys.pitilde_flat @ sys.P
    dev = float(np.max(np.abs(lhs - lhs.sum() * sys.pi.weights)))
    reports.append(VerificationReport.geq("H2.centering", 0.0, dev, tol=IDENTITY_TOL))

    worst_rev = 0.0
    for q, m in zip(sys.Qz, sys.varpi_zs):
        Wq = m.weights[:, None] * q
        worst_rev = max(worst_rev, float(np.max(np.abs(Wq - Wq.T))),
                        float(np.max(np.abs(m.weights @ q - m.weights))))
    reports.append(VerificationReport.geq("H3.slice_reversible", 0.0, worst_rev, tol=IDENTITY_TOL))
    Wq = sys.pitilde_flat[:, None] * sys.Q
    worst = max(float(np.max(np.abs(Wq - Wq.T))),
                float(np.max(np.abs(sys.pitilde_flat @ sys.Q - sys.pitilde_flat))))
    reports.append(VerificationReport.geq("H3.core_reversible", 0.0, worst, tol=IDENTITY_TOL))

    c0 = 1.0 if negate_h4 else sys.c0
    reports.append(VerificationReport.geq("H4.domination", h4_margin(sys, c0), 0.0, tol=H4_TOL))

    if sys.R is not None:
        Rs = sys.Rstar
        dq = float(np.max(np.abs(Rs @ sys.R - sys.Q)))
        reports.append(VerificationReport.geq("C1.Q_eq_RstarR", 0.0, dq, tol=IDENTITY_TOL))
    return reports


def h4_margin(sys: SandwichSystem, c0: Optional[float] = None) -> float:
    """Worst ``Q((y,z),(y',z)) - c0 Q_z(y,y')`` over ``y' != y`` and
    ``pitilde``-positive ``(y, z)``."""
    c0 = sys.c0 if c0 is None else c0
    ny = sys.ny
    worst = math.inf
    for z, q in enumerate(sys.Qz):
        s = slice(z * ny, (z + 1) * ny)
        rows = np.flatnonzero(sys.pitilde[:, z] > 0)
        if rows.size == 0:
            continue
        diff = sys.Q[s, s][rows] - c0 * q[rows]
        diff[np.arange(rows.size), rows] = np.inf
        worst = min(worst, float(diff.min()))
    return worst


def axioms_hold(sys: SandwichSystem, tol: float = DEFAULT_TOL) -> bool:
    return all(r.passed for r in check_axioms(sys, tol))


# ---------------------------------------------------------------------------
# theorem verifiers


def verify_idealized(sys: SandwichSystem, tol: float = DEFAULT_TOL):
    """``Gap(P*E*EP) = Gap(EPP*E*)`` and both operators PSD."""
    Sbar, C = idealized_kernel(sys)
    g1 = _gap(Sbar, sys.pi)
    g2 = _gap(C, sys.varpi)
    return [
        VerificationReport.close("idealized.gap_companion", g1, g2, tol=tol),
        VerificationReport.geq("idealized.Sbar_psd", mk.psd_min_eigenvalue(Sbar, sys.pi), 0.0, tol=tol),
        VerificationReport.geq("idealized.companion_psd", mk.psd_min_eigenvalue(C, sys.varpi), 0.0, tol=tol),
    ]


def verify_peskun(sys: SandwichSystem, tol: float = DEFAULT_TOL) -> VerificationReport:
    """Operator form of ``E_S >= c0 E_{P* Q-hat P}``."""
    m = dirichlet_dominance(sys.S, sys.c0, sys.PQhatP, sys.pi)
    return VerificationReport.geq("peskun.dirichlet", m, 0.0, tol=tol)


def lemma_main_residual(sys: SandwichSystem) -> float:
    """Max entry of the difference between both sides of

    ``E_{P* Q-hat P}(f) = ||f||^2 - ||Pf||^2 + sum_z varpi(z) E_{Q_z}(Pf_z)``

    written as bilinear forms over a basis of ``L^2_0(pi)``.
    """
    B = sys.pi.l0_function_basis
    D = sys.pi.weights
    lhs = B.T @ (D[:, None] * (B - sys.PQhatP @ B))
    PB = sys.P @ B
    rhs = B.T @ (D[:, None] * B) - PB.T @ (sys.pitilde_flat[:, None] * PB)
    ny = sys.ny
    for z, (q, m) in enumerate(zip(sys.Qz, sys.varpi_zs)):
        h = PB[z * ny:(z + 1) * ny]
        rhs = rhs + sys.varpi.weights[z] * (h.T @ mk.dirichlet_bilinear(q, m) @ h)
    return float(np.max(np.abs(lhs - rhs))) if lhs.size else 0.0


def verify_main_decomposition(sys: SandwichSystem, tol: float = DEFAULT_TOL):
    """``Gap(S) >= c0 Gap(P* Q-hat P) >= c0 kappa Gap(P* E* E P)`` and the
    matching Dirichlet-operator inequality."""
    kd = sys.kappa_dagger
    gS = _gap(sys.S, sys.pi)
    gQ = _gap(sys.PQhatP, sys.pi)
    gB = _gap(sys.Sbar, sys.pi)
    c0 = sys.c0
    return [
        VerificationReport.geq("main.dirichlet", dirichlet_dominance(sys.S, c0 * kd, sys.Sbar, sys.pi), 0.0, tol=tol),
        VerificationReport.geq("main.gap_S_vs_core", gS, c0 * gQ, tol=tol),
        VerificationReport.geq("main.gap_core_vs_ideal", c0 * gQ, c0 * kd * gB, tol=tol),
        VerificationReport.geq("main.lemma_identity", 0.0, lemma_main_residual(sys), tol=IDENTITY_TOL),
    ]


def verify_left_gap(sys: SandwichSystem, tol: float = DEFAULT_TOL):
    """Upper comparisons of ``P* Q-hat P`` against the idealized kernel."""
    kdd = sys.kappa_ddagger
    A = sys.PQhatP
    gA = _gap(A, sys.pi)
    gB = _gap(sys.Sbar, sys.pi)
    out = [
        VerificationReport.geq("leftgap.dirichlet", _min_eig((2.0 - kdd) * _dir(sys.Sbar, sys.pi) - _dir(A, sys.pi)), 0.0, tol=tol),
        VerificationReport.geq("leftgap.gap_upper", (2.0 - kdd) * gB, gA, tol=tol),
        VerificationReport.geq("leftgap.left_gap", mk.left_gap(A, sys.pi), kdd, tol=tol),
    ]
    if np.all(sys.slice_min_eigs() >= -mk.EIG_TOL):
        out.append(VerificationReport.geq("leftgap.psd_gap_upper", gB, gA, tol=tol))
        out.append(VerificationReport.geq("leftgap.psd_core", mk.psd_min_eigenvalue(A, sys.pi), 0.0, tol=tol))
    return out


def verify_envelope(sys: SandwichSystem, tol: float = DEFAULT_TOL):
    """``kappa Gap(S-bar) <= Gap(P* Q-hat P) <= Gap(S-bar)`` for PSD slices."""
    psd = bool(np.all(sys.slice_min_eigs() >= -mk.EIG_TOL))
    gA = _gap(sys.PQhatP, sys.pi)
    gB = _gap(sys.Sbar, sys.pi)
    if not psd:
        return [VerificationReport.premise("envelope.psd_slices", float(sys.slice_min_eigs().min()), 0.0)]
    return [
        VerificationReport.geq("envelope.lower", gA, sys.kappa_dagger * gB, tol=tol),
        VerificationReport.geq("envelope.upper", gB, gA, tol=tol),
    ]


def verify_norm_decomposition(sys: SandwichSystem, tol: float = DEFAULT_TOL) -> VerificationReport:
    """``1 - ||P* Q-hat P|| >= kappa_0 Gap(P* E* E P)``."""
    k0 = sys.kappa_0
    lhs = 1.0 - mk.operator_norm_L0(sys.PQhatP, sys.pi)
    return VerificationReport.geq("norm.decomposition", lhs, k0 * _gap(sys.Sbar, sys.pi), tol=tol)


def verify_nonreversible(sys: SandwichSystem, tol: float = DEFAULT_TOL):
    """``||f||^2 - ||Tf||^2 = E_{P*QP}(f)`` and ``1 - ||T||^2 >= c0 kappa Gap(S-bar)``."""
    if sys.R is None:
        raise ValueError("system has no R factor")
    T = sys.T
    B = sys.pi.l0_function_basis
    D = sys.pi.weights
    TB = T @ B
    lhs = B.T @ (D[:, None] * B) - TB.T @ (D[:, None] * TB)
    rhs = B.T @ (D[:, None] * (B - sys.S @ B))
    resid = float(np.max(np.abs(lhs - rhs))) if lhs.size else 0.0
    tn = mk.operator_norm_L0(T, sys.pi)
    bound = sys.c0 * sys.kappa_dagger * _gap(sys.Sbar, sys.pi)
    return [
        VerificationReport.geq("nonrev.identity", 0.0, resid, tol=IDENTITY_TOL),
        VerificationReport.geq("nonrev.norm", 1.0 - tn**2, bound, tol=tol),
    ]


def loewner_compare(sysA: SandwichSystem, sysB: SandwichSystem, tol: float = DEFAULT_TOL):
    """If every ``Q_z^(A) <= Q_z^(B)`` then ``S_(A) <= S_(B)`` with
    ``S_(j) = P* Q-hat_(j) P``, hence ``Gap(S_(A)) >= Gap(S_(B))``."""
    if sysA.P.shape != sysB.P.shape or not np.allclose(sysA.P, sysB.P, atol=0, rtol=0):
        raise mk.DimensionError("systems must share P")
    if not np.array_equal(sysA.pitilde, sysB.pitilde):
        raise mk.DimensionError("systems must share pitilde")
    worst = math.inf
    for qa, qb, m in zip(sysA.Qz, sysB.Qz, sysA.varpi_zs):
        idx = m.support
        _, m0, _ = mk.restrict_to_support(qa, m)
        d = (qb - qa)[np.ix_(idx, idx)]
        worst = min(worst, mk.psd_min_eigenvalue(d, m0))
    if worst < -tol:
        return [VerificationReport.premise("loewner.premise", worst, 0.0)]
    SA, SB = sysA.PQhatP, sysB.PQhatP
    s = np.sqrt(sysA.pi.weights)
    diff = s[:, None] * (SB - SA) / s[None, :]
    return [
        VerificationReport.geq("loewner.operator", _min_eig(diff), 0.0, tol=tol),
        VerificationReport.geq("loewner.gap", _gap(SA, sysA.pi), _gap(SB, sysA.pi), tol=tol),
    ]


def iteration_schedule(sys: SandwichSystem, kappa: float):
    """Per-slice iteration counts ``lambda(z) = ceil(-log(1-kappa)/Gap(Q_z))``.

    Counts are bumped to the next odd integer when ``Q_z`` has
    ``Gap_-(Q_z) < Gap(Q_z)``.  Returns ``(lam, S_lambda)``.
    """
    if not (0.0 < kappa < 1.0):
        raise ValueError("kappa must lie in (0, 1)")
    gaps = sys.slice_gaps()
    if np.any(gaps <= 1e-9):
        bad = np.flatnonzero(gaps <= 1e-9).tolist()
        raise ValueError(f"Gap(Q_z) = 0 for z in {bad}: schedule undefined")
    lgaps = sys.slice_left_gaps()
    lam = np.ceil(-math.log1p(-kappa) / gaps - 1e-12).astype(int)
    lam = np.maximum(lam, 1)
    bump = (lgaps < gaps) & (lam % 2 == 0)
    lam[bump] += 1
    Qlam = tuple(mk.power(q, int(k)) for q, k in zip(sys.Qz, lam))
    S_lam = sys.with_core(Qlam).S
    return lam, S_lam


def verify_iteration(sys: SandwichSystem, kappa: float, tol: float = DEFAULT_TOL):
    lam, S_lam = iteration_schedule(sys, kappa)
    gB = _gap(sys.Sbar, sys.pi)
    return lam, [
        VerificationReport.geq("iteration.gap", _gap(S_lam, sys.pi), kappa * gB, tol=tol),
        VerificationReport.geq("iteration.dirichlet", dirichlet_dominance(S_lam, kappa, sys.Sbar, sys.pi), 0.0, tol=tol),
    ]


def verify_variance_transfer(sys: SandwichSystem, tol: float = DEFAULT_TOL, seed: int = 0,
                             n_random: int = 8):
    """``var_S(f) <= var_Sbar(f) / c + (1/c - 1) ||fbar||^2`` with ``c = c0 kappa``.

    Checked on a basis of ``L^2_0(pi)`` plus random functions; the margin is
    relative to ``max(1, rhs)``.
    """
    c = sys.c0 * sys.kappa_dagger
    if c <= 0.0:
        return VerificationReport.premise("variance.transfer", c, 0.0)
    pi = sys.pi
    rng = np.random.default_rng(seed)
    F = np.concatenate([pi.l0_function_basis, rng.normal(size=(pi.n, n_random))], axis=1)
    try:
        vS = mk.asym_variances(sys.S, pi, F)
        vB = mk.asym_variances(sys.Sbar, pi, F)
    except mk.NoSpectralGapError:
        return VerificationReport.premise("variance.transfer", -1.0, 0.0)
    Fc = F - pi.weights @ F
    nrm = np.einsum("im,i,im->m", Fc, pi.weights, Fc)
    rhs = vB / c + (1.0 / c - 1.0) * nrm
    rel = (rhs - vS) / np.maximum(1.0, np.abs(rhs))
    j = int(np.argmin(rel))
    return replace(VerificationReport.geq("variance.transfer", 0.0, 0.0, tol=tol),
                   lhs=float(rhs[j]), rhs=float(vS[j]), margin=float(rel[j]),
                   passed=bool(rel[j] >= -tol))


def verify_all(sys: SandwichSystem, tol: float = DEFAULT_TOL):
    """Axioms plus every general verifier applicable to ``sys``."""
    out = list(check_axioms(sys, tol))
    out += verify_idealized(sys, tol)
    out.append(verify_peskun(sys, tol))
    out += verify_main_decomposition(sys, tol)
    out += verify_left_gap(sys, tol)
    out += verify_envelope(sys, tol)
    out.append(verify_norm_decomposition(sys, tol))
    out.append(verify_variance_transfer(sys, tol))
    if sys.R is not None:
        out += verify_nonreversible(sys, tol)
    return out


# ---------------------------------------------------------------------------
# plain-text serialization


def _fmt_matrix(A) -> str:
    A = np.atleast_2d(A)
    return "\n".join(" ".join(f"{v:.17g}" for v in row) for row in A)


def system_to_text(sys: SandwichSystem) -> str:
    parts = [
        f"[spaces]\nnx {sys.nx}\nny {sys.ny}\nnz {sys.nz}",
        "[pi]\n" + _fmt_matrix(sys.pi.weights[None, :]),
        "[pitilde]\n" + _fmt_matrix(sys.pitilde),
        "[P]\n" + _fmt_matrix(sys.P),
        "[Q]\n" + _fmt_matrix(sys.Q),
    ]
    for z, q in enumerate(sys.Qz):
        parts.append(f"[Qz {z}]\n" + _fmt_matrix(q))
    parts.append(f"[c0]\n{sys.c0:.17g}")
    if sys.R is not None:
        parts.append("[R]\n" + _fmt_matrix(sys.R))
    return "\n".join(parts) + "\n"


def system_from_text(text: str) -> SandwichSystem:
    sections: dict = {}
    key = None
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("["):
            key = line.strip("[]")
            sections[key] = []
        else:
            sections[key].append(line)
    dims = dict(ln.split() for ln in sections["spaces"])
    nz = int(dims["nz"])

    def mat(k):
        return np.array([ln.split() for ln in sections[k]], dtype=float)

    return SandwichSystem(
        pi=FiniteMeasure(mat("pi")[0]),
        pitilde=mat("pitilde"),
        P=mat("P"),
        Q=mat("Q"),
        Qz=tuple(mat(f"Qz {z}") for z in range(nz)),
        c0=float(sections["c0"][0]),
        R=mat("R") if "R" in sections else None,
    )
