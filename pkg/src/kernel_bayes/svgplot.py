"""Minimal SVG line charts for experiment summaries."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"]


def _ticks(lo, hi, k=5):
    if hi <= lo:
        hi = lo + 1.0
    return [lo + (hi - lo) * i / (k - 1) for i in range(k)]


def line_plot(path, series, *, title="", xlabel="", ylabel="", logx=False, logy=False,
              width=640, height=420) -> None:
    """Write ``series`` (``name -> (xs, ys)``) as polylines with markers.

    Non-finite points, and nonpositive ones on log axes, are skipped.
    """
    tx = (lambda v: math.log10(v)) if logx else (lambda v: v)
    ty = (lambda v: math.log10(v)) if logy else (lambda v: v)

    def ok(x, y):
        if not (math.isfinite(x) and math.isfinite(y)):
            return False
        return (not logx or x > 0) and (not logy or y > 0)

    clean = {}
    for name, (xs, ys) in series.items():
        pts = [(tx(float(x)), ty(float(y))) for x, y in zip(xs, ys) if ok(float(x), float(y))]
        if pts:
            clean[name] = pts
    allx = [p[0] for pts in clean.values() for p in pts] or [0.0, 1.0]
    ally = [p[1] for pts in clean.values() for p in pts] or [0.0, 1.0]
    x0, x1, y0, y1 = min(allx), max(allx), min(ally), max(ally)
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    ml, mr, mt, mb = 70, 150, 40, 50
    pw, ph = width - ml - mr, height - mt - mb

    def sx(v):
        return ml + (v - x0) / (x1 - x0) * pw

    def sy(v):
        return mt + ph - (v - y0) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'font-family="sans-serif" font-size="11">',
        f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>',
        f'<text x="{width / 2}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<text x="{ml + pw / 2}" y="{height - 10}" text-anchor="middle">{escape(xlabel)}</text>',
        f'<text x="15" y="{mt + ph / 2}" text-anchor="middle" '
        f'transform="rotate(-90 15 {mt + ph / 2})">{escape(ylabel)}</text>',
    ]
    for v in _ticks(x0, x1):
        lab = f"{10**v:.3g}" if logx else f"{v:.3g}"
        out.append(f'<text x="{sx(v):.1f}" y="{mt + ph + 15}" text-anchor="middle">{lab}</text>')
    for v in _ticks(y0, y1):
        lab = f"{10**v:.3g}" if logy else f"{v:.3g}"
        out.append(f'<text x="{ml - 5}" y="{sy(v) + 4:.1f}" text-anchor="end">{lab}</text>')
    for i, (name, pts) in enumerate(clean.items()):
        c = _COLORS[i % len(_COLORS)]
        coords = " ".join(f"{sx(x):.1f},{sy(y):.1f}" for x, y in pts)
        out.append(f'<polyline points="{coords}" fill="none" stroke="{c}" stroke-width="1.5"/>')
        for x, y in pts:
            out.append(f'<circle cx="{sx(x):.1f}" cy="{sy(y):.1f}" r="3" fill="{c}"/>')
        ly = mt + 15 * (i + 1)
        out.append(f'<line x1="{ml + pw + 10}" y1="{ly - 4}" x2="{ml + pw + 30}" y2="{ly - 4}" stroke="{c}" stroke-width="2"/>')
        out.append(f'<text x="{ml + pw + 35}" y="{ly}">{escape(str(name))}</text>')
    out.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(out))
