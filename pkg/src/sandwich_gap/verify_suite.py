"""Seeded sweeps over every construction family.

Each family generator maps a seed to a :class:`Construction`; the sweep runs
the family reports together with the general sandwich verifiers on the
assembled systems and aggregates minimum margins.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, Iterable, List, Optional

import numpy as np

from . import constructions as C
from . import fixtures as fx
from . import measure_kernel as mk
from . import sandwich as sw

FAMILIES = ("partition", "overlap", "da", "gibbs", "hitrun", "localization", "doubly")

# default sizes: upper bounds on the state-space dimensions drawn per fixture
DEFAULT_SIZES = {
    "partition": 12,
    "overlap": 10,
    "da": 8,
    "gibbs": 3,
    "hitrun": 4,
    "localization": 8,
    "doubly": 5,
}


def _kind(rng) -> str:
    return fx.SLICE_KINDS[rng.integers(len(fx.SLICE_KINDS))]


def gen_partition(seed: int, size: int = 12) -> C.Construction:
    rng = fx.rng_for(seed, 1)
    n = int(rng.integers(3, size + 1))
    k = int(rng.integers(2, min(n, 4) + 1))
    pi = mk.FiniteMeasure(fx.random_measure(rng, n))
    a = np.concatenate([np.arange(k), rng.integers(k, size=n - k)])
    rng.shuffle(a)
    style = rng.integers(4)
    if style == 0:
        M = mk.resampling_kernel(pi)
    else:
        M = fx.psd_for(rng, pi)
    if style == 1:
        N = M
    else:
        N = fx.slice_kernel(rng, _kind(rng), pi.weights)
    return C.from_partition(M, N, pi, C.Partition(a))


def random_cover(rng, n: int, k: int) -> np.ndarray:
    masks = rng.random((k, n)) < 0.45
    for x in range(n):
        if not masks[:, x].any():
            masks[rng.integers(k), x] = True
    for z in range(k):
        if not masks[z].any():
            masks[z, rng.integers(n)] = True
    return masks


def gen_overlap(seed: int, size: int = 10, c0: Optional[float] = None) -> C.Construction:
    rng = fx.rng_for(seed, 2)
    n = int(rng.integers(3, size + 1))
    k = int(rng.integers(2, 5))
    pi0 = mk.FiniteMeasure(fx.random_measure(rng, n))
    N = fx.slice_kernel(rng, _kind(rng), pi0.weights)
    return C.from_overlap_cover(N, pi0, C.Cover(random_cover(rng, n, k)), c0=c0)


def gen_da(seed: int, size: int = 8) -> C.Construction:
    rng = fx.rng_for(seed, 3)
    nx = int(rng.integers(2, size + 1))
    nz = int(rng.integers(2, 6))
    J = fx.random_joint(rng, nx, nz, zero_frac=rng.choice([0.0, 0.3]))
    Qz = [fx.slice_kernel(rng, _kind(rng), J[:, z] / J[:, z].sum()) for z in range(nz)]
    return C.from_data_augmentation(J, Qz)


def gen_gibbs(seed: int, size: int = 3) -> C.Construction:
    rng = fx.rng_for(seed, 4)
    k = int(rng.integers(2, 4))
    shape = tuple(int(rng.integers(2, size + 1)) for _ in range(k))
    if k == 3:
        shape = shape[:2] + (2,)
    pind = rng.exponential(size=shape) + 0.05
    pind /= pind.sum()
    p = rng.dirichlet(np.ones(k)) * 0.8 + 0.2 / k
    kinds = {}

    def H(i, u):
        kind = kinds.setdefault((i, u), _kind(rng))
        return fx.slice_kernel(rng, kind, C.gibbs_conditional(pind, i, u))

    return C.from_random_scan_gibbs(pind, H, p)


def gen_hitrun(seed: int, size: int = 4) -> C.Construction:
    rng = fx.rng_for(seed, 5)
    m1 = int(rng.integers(2, size + 1))
    m2 = int(rng.integers(2, size + 1))
    pg = rng.exponential(size=(m1, m2)) + 0.05
    nu = rng.dirichlet([2.0, 2.0])

    def H(w, ell):
        cond = pg[ell] if w == 0 else pg[:, ell]
        return fx.slice_kernel(rng, _kind(rng), cond / cond.sum())

    return C.from_grid_hit_and_run(pg, H, nu=nu)


def gen_localization(seed: int, size: int = 8) -> C.Construction:
    rng = fx.rng_for(seed, 6)
    n = int(rng.integers(2, size + 1))
    pi = mk.FiniteMeasure(fx.random_measure(rng, n))
    depth = int(rng.integers(1, 4))
    branching = int(rng.integers(2, 4))
    tree = C.random_localization_tree(rng, pi, depth, branching, pin=bool(rng.random() < 0.3))
    return C.from_localization(tree)


def gen_doubly(seed: int, size: int = 5) -> C.Construction:
    rng = fx.rng_for(seed, 7)
    n1 = int(rng.integers(2, size + 1))
    n2 = int(rng.integers(2, size + 1))
    phi = rng.exponential(size=(n1, n2)) + 0.05
    phi /= phi.sum()
    psd2 = rng.random() < 0.5
    H1 = [fx.slice_kernel(rng, _kind(rng), phi[:, x2] / phi[:, x2].sum()) for x2 in range(n2)]
    H2 = [fx.slice_kernel(rng, "psd" if psd2 else _kind(rng), phi[x1] / phi[x1].sum()) for x1 in range(n1)]
    return C.from_doubly_intractable(phi, H1, H2)


GENERATORS: Dict[str, Callable[..., C.Construction]] = {
    "partition": gen_partition,
    "overlap": gen_overlap,
    "da": gen_da,
    "gibbs": gen_gibbs,
    "hitrun": gen_hitrun,
    "localization": gen_localization,
    "doubly": gen_doubly,
}


def systems_of(con: C.Construction) -> list:
    if con.family == "localization":
        return list(con.extras["systems"])
    return [con.system]


def chain_reports(sys: sw.SandwichSystem, tol: float = sw.DEFAULT_TOL) -> list:
    """``Gap(S) >= c0 Gap(P* Q-hat P) >= c0 kappa Gap(S-bar)`` as two reports."""
    return [r for r in sw.verify_main_decomposition(sys, tol) if r.claim_id.startswith("main.gap")]


def fixture_reports(family: str, seed: int, size: Optional[int] = None,
                    tol: float = sw.DEFAULT_TOL, negate_h4: bool = False) -> list:
    """Every report for one seeded fixture of ``family``."""
    gen = GENERATORS[family]
    size = DEFAULT_SIZES[family] if size is None else size
    con = gen(seed, size)
    out = list(con.reports)
    rng = fx.rng_for(seed, 99)
    for sys in systems_of(con):
        out += sw.check_axioms(sys, tol, negate_h4=negate_h4)
        out += sw.verify_idealized(sys, tol)
        out.append(sw.verify_peskun(sys, tol))
        out += sw.verify_main_decomposition(sys, tol)
        out += sw.verify_left_gap(sys, tol)
        out += sw.verify_envelope(sys, tol)
        out.append(sw.verify_norm_decomposition(sys, tol))
        out.append(sw.verify_variance_transfer(sys, tol, seed=seed))
        if sys.R is not None:
            out += sw.verify_nonreversible(sys, tol)
        if np.all(sys.slice_gaps() > 1e-6):
            kappa = float(rng.uniform(0.05, 0.95))
            _, reps = sw.verify_iteration(sys, kappa, tol)
            out += reps
    return [replace(r, seed=seed, claim_id=f"{family}:{r.claim_id}") for r in out]


@dataclass
class SweepSummary:
    reports: list = field(default_factory=list)

    @property
    def failures(self) -> list:
        return [r for r in self.reports if r.failed]

    def min_margins(self) -> Dict[str, float]:
        out: Dict[str, float] = {}
        for r in self.reports:
            if not r.premise_ok:
                continue
            fam = r.claim_id.split(":", 1)[0]
            out[fam] = min(out.get(fam, math.inf), r.margin)
        return out

    def by_claim(self, prefix: str) -> list:
        return [r for r in self.reports if r.claim_id.startswith(prefix)]


def run_sweep(families: Iterable[str] = FAMILIES, seeds: Iterable[int] = range(1000),
              sizes: Optional[Dict[str, int]] = None, tol: float = sw.DEFAULT_TOL,
              negate_h4: bool = False, base_seed: int = 0) -> SweepSummary:
    sizes = sizes or {}
    seeds = list(seeds)
    summary = SweepSummary()
    for fam in families:
        if fam not in GENERATORS:
            raise ValueError(f"unknown family {fam!r}")
        for s in seeds:
            summary.reports += fixture_reports(fam, base_seed + s, sizes.get(fam),
                                               tol=tol, negate_h4=negate_h4)
    return summary
