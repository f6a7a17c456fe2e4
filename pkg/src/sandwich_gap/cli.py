"""Command line entry point.

Subcommands
-----------
verify
    Seeded sweeps over every construction family; writes ``report.csv`` and
    exits nonzero iff a theorem-backed check fails.
logistic
    Hit-and-run variance ratios on simulated logistic posteriors; writes
    ``ratios.csv`` and three SVG figures.
localize
    Per-level gap factors of random localization trees; writes
    ``report.csv``.
profile
    Weak Poincaré profiles of a small data-augmentation system; writes
    ``profiles.csv``.

A file given with ``--config`` holds ``key = value`` lines named after the
long flags; flags on the command line take precedence.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from typing import Dict, List, Optional

import numpy as np

from . import verify_suite as vs
from .sandwich import write_reports

BOOL_KEYS = {"negate_h4"}


def parse_sizes(text: Optional[str]) -> Dict[str, int]:
    """``"da=6,gibbs=3"`` or a single integer applied to every family."""
    if not text:
        return {}
    text = str(text).strip()
    if "=" not in text:
        return {f: int(text) for f in vs.FAMILIES}
    out = {}
    for part in text.split(","):
        k, v = part.split("=")
        k = k.strip()
        if k not in vs.FAMILIES:
            raise ValueError(f"unknown family {k!r}")
        out[k] = int(v)
    return out


def parse_families(text: Optional[str]) -> List[str]:
    if not text:
        return list(vs.FAMILIES)
    fams = [f.strip() for f in str(text).split(",") if f.strip()]
    bad = [f for f in fams if f not in vs.FAMILIES]
    if bad:
        raise ValueError(f"unknown families {bad}")
    return fams


def read_config(path: str) -> Dict[str, object]:
    out: Dict[str, object] = {}
    with open(path) as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"bad config line: {raw.rstrip()!r}")
            k, v = (s.strip() for s in line.split("=", 1))
            k = k.replace("-", "_")
            if k in BOOL_KEYS:
                out[k] = v.lower() in ("1", "true", "yes", "on")
            else:
                out[k] = v
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sandwich-gap", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="mode", required=True)

    def common(sp):
        sp.add_argument("--config", help="file of key = value lines")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", default="out")

    v = sub.add_parser("verify", help="invariant sweep over construction families")
    common(v)
    v.add_argument("--families", default=None)
    v.add_argument("--sizes", default=None)
    v.add_argument("--seeds", type=int, default=1000, help="number of seeds per family")
    v.add_argument("--negate-h4", dest="negate_h4", action="store_true", default=False)

    lg = sub.add_parser("logistic", help="variance ratios on logistic posteriors")
    common(lg)
    lg.add_argument("--datasets", type=int, default=10)
    lg.add_argument("--steps", type=int, default=1_000_000)
    lg.add_argument("--burnin", type=int, default=10_000)
    lg.add_argument("--n", type=int, default=100)
    lg.add_argument("--k", type=int, default=30)
    lg.add_argument("--workers", type=int, default=1)

    lc = sub.add_parser("localize", help="gap factors of localization trees")
    common(lc)
    lc.add_argument("--seeds", type=int, default=100)
    lc.add_argument("--sizes", default=None)

    pr = sub.add_parser("profile", help="weak Poincaré profiles")
    common(pr)
    pr.add_argument("--sizes", default=None)
    return p


def parse_args(argv=None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        cfg = read_config(args.config)
        sp = parser._subparsers._group_actions[0].choices[args.mode]
        known = {a.dest for a in sp._actions}
        unknown = set(cfg) - known
        if unknown:
            parser.error(f"unknown config keys: {sorted(unknown)}")
        sp.set_defaults(**cfg)
        args = parser.parse_args(argv)
        for a in sp._actions:
            if a.dest in cfg and a.type is not None and isinstance(getattr(args, a.dest), str):
                setattr(args, a.dest, a.type(getattr(args, a.dest)))
    return args


def cmd_verify(args) -> int:
    fams = parse_families(args.families)
    sizes = parse_sizes(args.sizes)
    summary = vs.run_sweep(fams, range(args.seeds), sizes, negate_h4=args.negate_h4, base_seed=args.seed)
    os.makedirs(args.out, exist_ok=True)
    write_reports(os.path.join(args.out, "report.csv"), summary.reports)
    mins = summary.min_margins()
    for f in fams:
        nfail = sum(1 for r in summary.failures if r.claim_id.startswith(f + ":"))
        print(f"{f:14s} min_margin={mins.get(f, float('nan')):+.3e} failures={nfail}")
    fails = summary.failures
    print(f"total reports={len(summary.reports)} failures={len(fails)}")
    for r in fails[:20]:
        print(f"  FAIL {r.claim_id} seed={r.seed} margin={r.margin:.3e}")
    return 1 if fails else 0


def cmd_logistic(args) -> int:
    from . import experiment as ex

    res = ex.run_logistic_experiment(seed=args.seed, datasets=args.datasets, n=args.n, k=args.k,
                                     steps=args.steps, burnin=args.burnin, out=args.out,
                                     workers=args.workers, log=lambda m: print(m, flush=True))
    for a in ex.assess(res):
        print(a.line())
    return 0


def cmd_localize(args) -> int:
    size = parse_sizes(args.sizes).get("localization", vs.DEFAULT_SIZES["localization"])
    os.makedirs(args.out, exist_ok=True)
    reports = []
    with open(os.path.join(args.out, "localization.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["seed", "level", "gap", "kappa", "product_bound"])
        worst = np.inf
        for s in range(args.seeds):
            con = vs.gen_localization(args.seed + s, size)
            gaps, kappas = con.extras["gaps"], con.extras["kappas"]
            prod = 1.0
            for t, g in enumerate(gaps):
                kap = kappas[t - 1] if t > 0 else 1.0
                prod *= kap if t > 0 else 1.0
                w.writerow([args.seed + s, t, repr(float(g)), repr(float(kap)), repr(float(prod))])
                worst = min(worst, g - prod)
            reports += [r.with_seed(args.seed + s) for r in con.reports]
    write_reports(os.path.join(args.out, "report.csv"), reports)
    fails = [r for r in reports if r.failed]
    print(f"trees={args.seeds} min(gap - product bound)={worst:+.3e} failures={len(fails)}")
    return 1 if fails else 0


def cmd_profile(args) -> int:
    from . import weak_poincare as wp

    size = parse_sizes(args.sizes).get("da", 6)
    sysm = vs.gen_da(args.seed, min(size, wp.EXACT_LIMIT)).system
    reps, bt, beta, ab = wp.verify_weak_composition(sysm, seed=args.seed)
    reps = wp.verify_weak_lemma(sysm, seed=args.seed) + reps
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "profiles.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["s", "beta", "alpha_bar", "beta_tilde"])
        for s, v in zip(bt.s_grid, bt.values):
            w.writerow([repr(float(s)), repr(beta(s)), repr(ab(s)), repr(float(v))])
    write_reports(os.path.join(args.out, "report.csv"), reports := [r.with_seed(args.seed) for r in reps])
    for r in reports:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.claim_id} margin={r.margin:+.3e}")
    return 1 if any(r.failed for r in reports) else 0


COMMANDS = {"verify": cmd_verify, "logistic": cmd_logistic, "localize": cmd_localize, "profile": cmd_profile}


def main(argv=None) -> int:
    args = parse_args(argv)
    return COMMANDS[args.mode](args)


if __name__ == "__main__":
    sys.exit(main())
