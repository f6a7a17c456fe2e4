"""Variance ratios of hit-and-run samplers on simulated logistic posteriors.

For each dataset three chains are run from the posterior mode: the ideal
sampler ``Sbar``, the Metropolis-within-hit-and-run ``S`` and its iterated
version ``S_lambda``.  Asymptotic variances of the coordinate functions are
estimated by batch means and reported as ratios against ``Sbar``.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from scipy.stats import spearmanr

from . import hitrun as hr
from . import svg
from .batch_means import batch_means_variance, ratio_with_se
from .fixtures import rng_for

RATIO_HEADER = ["dataset", "xi", "coord", "ratio_s", "se_s", "ratio_slambda", "se_slambda",
                "tau_s", "tau_slambda", "tau_sbar"]
WALL_TIME_COLUMNS = ("tau_s", "tau_slambda", "tau_sbar")
XI_RANGE = (1.05, 226.0)
SAMPLERS = ("sbar", "s", "slambda")


@dataclass(frozen=True)
class Dataset:
    index: int
    Xi: np.ndarray
    y: np.ndarray
    scale: float
    beta_true: np.ndarray

    @property
    def target(self) -> hr.LogisticTarget:
        return hr.LogisticTarget(self.Xi, self.y)

    @property
    def xi(self) -> float:
        return hr.conditioning_number(self.Xi)


def xi_grid(count: int, lo: float = XI_RANGE[0], hi: float = XI_RANGE[1]) -> np.ndarray:
    return np.geomspace(lo, hi, count) if count > 1 else np.array([lo])


def simulate_logistic_datasets(seed: int, count: int = 10, n: int = 100, k: int = 30,
                               xis: Optional[Sequence[float]] = None) -> List[Dataset]:
    """One Gaussian design, rescaled so that ``xi`` hits each target value.

    ``xi(c) = 1 + c^2 ||G^T G|| / 4`` for the scaled design ``c G``, so the
    scale is solved in closed form.  The true coefficient is shared; each
    dataset draws its own responses.
    """
    if count < 1:
        raise ValueError("count must be positive")
    if k > n:
        raise ValueError("k must not exceed n")
    rng = rng_for(seed, 11)
    G = rng.standard_normal((n, k))
    beta = rng.standard_normal(k) / math.sqrt(k)
    top = float(np.linalg.eigvalsh(G.T @ G).max())
    targets = xi_grid(count) if xis is None else np.asarray(xis, dtype=float)
    out = []
    for d, xi in enumerate(targets):
        c = math.sqrt(max(4.0 * (xi - 1.0) / top, 0.0))
        Xi = c * G
        p = 1.0 / (1.0 + np.exp(-(Xi @ beta)))
        y = (rng_for(seed, 12, d).random(n) < p).astype(float)
        out.append(Dataset(d, Xi, y, c, beta))
    return out


@dataclass
class SamplerResult:
    sampler: str
    var: np.ndarray
    se: np.ndarray
    tau: float
    acceptance: float
    inner: np.ndarray
    mean: np.ndarray
    pivar: np.ndarray


@dataclass
class DatasetResult:
    dataset: int
    xi: float
    results: dict = field(default_factory=dict)

    def ratios(self):
        b = self.results["sbar"]
        out = {}
        for name in ("s", "slambda"):
            r = self.results[name]
            out[name] = ratio_with_se(r.var, r.se, b.var, b.se)
        return out


def _stepper(target, sampler: str, lam_divisor: float):
    kind = {"sbar": "ideal", "s": "hybrid", "slambda": "iterated"}[sampler]
    return hr.Stepper(target, kind, lam_divisor=lam_divisor)


def run_sampler(ds: Dataset, sampler: str, steps: int, burnin: int, seed: int,
                lam_divisor: float = hr.DEFAULT_LAMBDA_DIVISOR) -> SamplerResult:
    tg = ds.target
    st = _stepper(tg, sampler, lam_divisor)
    hr.warm_up(st)
    x0 = tg.map_estimate()
    tr = hr.run_chain(st, x0, steps + burnin, seed=seed, chain_id=ds.index)
    X = tr.states[burnin + 1:]
    var, se = batch_means_variance(X)
    inner = tr.inner[burnin:]
    return SamplerResult(sampler, var, se, tr.tau, float(np.mean(tr.accepted[burnin:])),
                         np.bincount(inner), X.mean(axis=0), X.var(axis=0))


def _job(args):
    ds, sampler, steps, burnin, seed, lam_divisor = args
    return ds.index, sampler, run_sampler(ds, sampler, steps, burnin, seed, lam_divisor)


def run_logistic_experiment(seed: int = 0, datasets: int = 10, n: int = 100, k: int = 30,
                            steps: int = 1_000_000, burnin: int = 10_000, out: Optional[str] = None,
                            lam_divisor: float = hr.DEFAULT_LAMBDA_DIVISOR, workers: int = 1,
                            xis: Optional[Sequence[float]] = None, log=None) -> List[DatasetResult]:
    """Run all samplers on every dataset and optionally write outputs to ``out``."""
    if steps <= 10 * burnin:
        raise ValueError("chain length must exceed ten times the burn-in")
    dss = simulate_logistic_datasets(seed, datasets, n, k, xis)
    jobs = [(ds, s, steps, burnin, seed, lam_divisor) for ds in dss for s in SAMPLERS]
    results = {ds.index: DatasetResult(ds.index, ds.xi) for ds in dss}
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            done = list(ex.map(_job, jobs))
    else:
        done = []
        for j in jobs:
            done.append(_job(j))
            if log:
                log(f"dataset {j[0].index} xi={results[j[0].index].xi:.3g} sampler {j[1]} done")
    for d, s, r in done:
        results[d].results[s] = r
    res = [results[ds.index] for ds in dss]
    if out:
        write_outputs(res, out)
    return res


def ratio_rows(results: Sequence[DatasetResult]) -> list:
    rows = []
    for dr in results:
        rat = dr.ratios()
        rs, ses = rat["s"]
        rl, sel = rat["slambda"]
        for i in range(rs.size):
            rows.append({
                "dataset": dr.dataset, "xi": dr.xi, "coord": i + 1,
                "ratio_s": rs[i], "se_s": ses[i], "ratio_slambda": rl[i], "se_slambda": sel[i],
                "tau_s": dr.results["s"].tau, "tau_slambda": dr.results["slambda"].tau,
                "tau_sbar": dr.results["sbar"].tau,
            })
    return rows


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_ratios_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RATIO_HEADER)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in RATIO_HEADER])


def write_outputs(results: Sequence[DatasetResult], out: str) -> None:
    os.makedirs(out, exist_ok=True)
    rows = ratio_rows(results)
    write_ratios_csv(rows, os.path.join(out, "ratios.csv"))
    xi = np.array([r["xi"] for r in rows])
    svg.scatter(os.path.join(out, "ratios_vs_xi.svg"),
                [("S", xi, [r["ratio_s"] for r in rows]),
                 ("S_lambda", xi, [r["ratio_slambda"] for r in rows])],
                title="variance ratio against Sbar", xlabel="xi", ylabel="ratio",
                logx=True, logy=True, hline=1.0)
    # time-adjusted variances relative to the stationary variance
    tx, ty = [], []
    for dr in results:
        pv = dr.results["sbar"].pivar
        tx.append(dr.results["s"].tau * dr.results["s"].var / pv)
        ty.append(dr.results["slambda"].tau * dr.results["slambda"].var / pv)
    svg.scatter(os.path.join(out, "time_adjusted.svg"), [("S_lambda", np.concatenate(tx), np.concatenate(ty))],
                title="time-adjusted variance", xlabel="tau(S) var_S / var",
                ylabel="tau(S_lambda) var_S_lambda / var", logx=True, logy=True, diagonal=True)
    top = max(results, key=lambda d: d.xi).results["slambda"].inner
    svg.histogram(os.path.join(out, "lambda_hist.svg"), {i: int(c) for i, c in enumerate(top) if c},
                  title="Metropolis steps per iteration", xlabel="lambda")


# ---------------------------------------------------------------------------
# statistical assessments


@dataclass(frozen=True)
class Assessment:
    name: str
    passed: bool
    value: float
    threshold: float
    detail: str = ""

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name} value={self.value:.4g} threshold={self.threshold:.4g} {self.detail}".rstrip()


def assess(results: Sequence[DatasetResult], nse: float = 3.0) -> List[Assessment]:
    """Checks on the ratio table; every comparison allows ``nse`` standard errors."""
    rows = ratio_rows(results)
    out = []
    worst = min(min(r["ratio_s"] - 1 + nse * r["se_s"], r["ratio_slambda"] - 1 + nse * r["se_slambda"])
                for r in rows)
    out.append(Assessment("ratios_at_least_one", worst >= 0, worst, 0.0, "min(ratio - 1 + 3 se)"))

    order = sorted(results, key=lambda d: d.xi)
    xi = np.array([d.xi for d in order])
    max_s = np.array([d.ratios()["s"][0].max() for d in order])
    rho = float(spearmanr(xi, max_s / xi).statistic) if len(order) > 2 else float("nan")
    out.append(Assessment("ratio_s_at_most_linear", bool(rho <= 0.3) if len(order) > 2 else False,
                          rho, 0.3, "spearman(max ratio_s / xi, xi)"))

    max_l = np.array([d.ratios()["slambda"][0].max() for d in order])
    fac = float(max_l[-1] / max_l[0])
    out.append(Assessment("ratio_slambda_bounded", fac <= 3.0, fac, 3.0,
                          "max ratio_slambda at largest xi over smallest xi"))

    gap = -math.inf
    for d in results:
        b, s, l = (d.results[k] for k in ("sbar", "s", "slambda"))
        gap = max(gap,
                  float(np.max(b.var - l.var - nse * np.hypot(b.se, l.se))),
                  float(np.max(l.var - s.var - nse * np.hypot(l.se, s.se))))
    out.append(Assessment("ordering_sbar_slambda_s", gap <= 0, gap, 0.0,
                          "max violation beyond 3 combined se"))
    return out
