"""Minimal SVG scatter plots and histograms."""

from __future__ import annotations

import math
from typing import Iterable, Optional, Sequence
from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 480, 360
MARGIN = 56
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd")


def _axis(lo, hi, log):
    if log:
        lo, hi = math.log10(lo), math.log10(hi)
    if hi <= lo:
        hi = lo + 1.0
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


def _map(v, lo, hi, a, b, log):
    v = np.log10(v) if log else np.asarray(v, dtype=float)
    return a + (v - lo) / (hi - lo) * (b - a)


def _ticks(lo, hi, log, n=5):
    if log:
        return [10.0 ** e for e in range(math.ceil(lo), math.floor(hi) + 1)]
    return list(np.linspace(lo, hi, n))


def scatter(path, series: Sequence[tuple], *, title: str = "", xlabel: str = "", ylabel: str = "",
            logx: bool = False, logy: bool = False, hline: Optional[float] = None,
            diagonal: bool = False) -> None:
    """Write a scatter plot.

    ``series`` holds ``(label, x, y)`` triples.  ``hline`` adds a dashed
    horizontal reference line and ``diagonal`` a dashed ``y = x`` line.
    """
    xs = np.concatenate([np.asarray(s[1], dtype=float) for s in series])
    ys = np.concatenate([np.asarray(s[2], dtype=float) for s in series])
    if hline is not None:
        ys = np.append(ys, hline)
    if diagonal:
        lo_d, hi_d = min(xs.min(), ys.min()), max(xs.max(), ys.max())
        xs, ys = np.append(xs, [lo_d, hi_d]), np.append(ys, [lo_d, hi_d])
    x0, x1 = _axis(xs.min(), xs.max(), logx)
    y0, y1 = _axis(ys.min(), ys.max(), logy)
    L, R, T, B = MARGIN, WIDTH - 16, 28, HEIGHT - MARGIN

    def px(v):
        return _map(v, x0, x1, L, R, logx)

    def py(v):
        return _map(v, y0, y1, B, T, logy)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'font-family="sans-serif" font-size="11">',
           f'<rect x="{L}" y="{T}" width="{R - L}" height="{B - T}" fill="none" stroke="black"/>']
    for t in _ticks(x0, x1, logx):
        p = float(px(t))
        out.append(f'<line x1="{p:.1f}" y1="{B}" x2="{p:.1f}" y2="{B + 4}" stroke="black"/>')
        out.append(f'<text x="{p:.1f}" y="{B + 16}" text-anchor="middle">{t:.3g}</text>')
    for t in _ticks(y0, y1, logy):
        p = float(py(t))
        out.append(f'<line x1="{L - 4}" y1="{p:.1f}" x2="{L}" y2="{p:.1f}" stroke="black"/>')
        out.append(f'<text x="{L - 6}" y="{p + 4:.1f}" text-anchor="end">{t:.3g}</text>')
    if hline is not None:
        p = float(py(hline))
        out.append(f'<line x1="{L}" y1="{p:.1f}" x2="{R}" y2="{p:.1f}" stroke="gray" stroke-dasharray="5,4"/>')
    if diagonal:
        a, b = max(xs.min(), ys.min()), min(xs.max(), ys.max())
        out.append(f'<line x1="{float(px(a)):.1f}" y1="{float(py(a)):.1f}" x2="{float(px(b)):.1f}" '
                   f'y2="{float(py(b)):.1f}" stroke="gray" stroke-dasharray="5,4"/>')
    for j, (label, x, y) in enumerate(series):
        col = COLORS[j % len(COLORS)]
        for u, v in zip(px(np.asarray(x, dtype=float)), py(np.asarray(y, dtype=float))):
            out.append(f'<circle cx="{u:.1f}" cy="{v:.1f}" r="2.5" fill="{col}" fill-opacity="0.7"/>')
        out.append(f'<text x="{R - 6}" y="{T + 14 + 14 * j}" text-anchor="end" fill="{col}">{escape(label)}</text>')
    out.append(f'<text x="{WIDTH / 2}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>')
    out.append(f'<text x="{(L + R) / 2}" y="{HEIGHT - 12}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="14" y="{(T + B) / 2}" text-anchor="middle" '
               f'transform="rotate(-90 14 {(T + B) / 2})">{escape(ylabel)}</text>')
    out.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")


def histogram(path, counts: dict, *, title: str = "", xlabel: str = "", ylabel: str = "frequency") -> None:
    """Bar chart of integer-valued counts."""
    keys = sorted(counts)
    vals = np.array([counts[k] for k in keys], dtype=float)
    L, R, T, B = MARGIN, WIDTH - 16, 28, HEIGHT - MARGIN
    top = vals.max() if vals.size and vals.max() > 0 else 1.0
    span = (keys[-1] - keys[0] + 1) if keys else 1
    bw = (R - L) / span
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'font-family="sans-serif" font-size="11">',
           f'<rect x="{L}" y="{T}" width="{R - L}" height="{B - T}" fill="none" stroke="black"/>']
    for k, v in zip(keys, vals):
        h = (B - T) * v / top
        x = L + (k - keys[0]) * bw
        out.append(f'<rect x="{x:.1f}" y="{B - h:.1f}" width="{max(bw - 1, 0.5):.1f}" height="{h:.1f}" fill="{COLORS[0]}"/>')
    step = max(1, span // 10)
    for k in keys[::step]:
        x = L + (k - keys[0] + 0.5) * bw
        out.append(f'<text x="{x:.1f}" y="{B + 16}" text-anchor="middle">{k}</text>')
    out.append(f'<text x="{L - 6}" y="{T + 4}" text-anchor="end">{top:.3g}</text>')
    out.append(f'<text x="{WIDTH / 2}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>')
    out.append(f'<text x="{(L + R) / 2}" y="{HEIGHT - 12}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="14" y="{(T + B) / 2}" text-anchor="middle" '
               f'transform="rotate(-90 14 {(T + B) / 2})">{escape(ylabel)}</text>')
    out.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")
