"""Minimal self-contained SVG charts for sweep summaries.

Log-log line charts, one polyline per series, with confidence whiskers.  The
numbers behind the figure are embedded as a CSV table inside an XML comment,
so a chart can be audited without rerunning the sweep.
"""

from __future__ import annotations

import math
from typing import Sequence

__all__ = ["SeriesPoint", "loglog_chart"]

_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"]

_W, _H = 640, 440
_ML, _MR, _MT, _MB = 64, 20, 36, 48


class SeriesPoint:
    __slots__ = ("x", "y", "lo", "hi")

    def __init__(self, x: float, y: float, lo: float = math.nan, hi: float = math.nan):
        self.x, self.y, self.lo, self.hi = x, y, lo, hi


def _ticks_log(lo: float, hi: float) -> list[float]:
    out = []
    dec = math.floor(math.log10(lo))
    while 10.0**dec <= hi * 1.0001:
        for m in (1, 2, 5):
            v = m * 10.0**dec
            if lo * 0.9999 <= v <= hi * 1.0001:
                out.append(v)
        dec += 1
    return out or [lo, hi]


def _fmt(v: float) -> str:
    if v >= 1:
        return f"{v:g}"
    return f"{v:.0e}".replace("e-0", "e-")


def loglog_chart(
    series: dict[str, Sequence[SeriesPoint]],
    title: str,
    xlabel: str,
    ylabel: str,
) -> str:
    """Render a log-log chart; series maps legend label to its points."""
    pts = [p for ps in series.values() for p in ps]
    if not pts:
        raise ValueError("nothing to plot")
    xs = [p.x for p in pts]
    ys = [p.y for p in pts] + [p.lo for p in pts if p.lo == p.lo] + [p.hi for p in pts if p.hi == p.hi]
    ys = [y for y in ys if y > 0]
    if not ys or min(xs) <= 0:
        raise ValueError("log-log chart needs positive data")
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    if x0 == x1:
        x0, x1 = x0 / 1.5, x1 * 1.5
    if y0 == y1:
        y0, y1 = y0 / 1.5, y1 * 1.5

    def px(x: float) -> float:
        return _ML + (math.log(x) - math.log(x0)) / (math.log(x1) - math.log(x0)) * (_W - _ML - _MR)

    def py(y: float) -> float:
        return _H - _MB - (math.log(y) - math.log(y0)) / (math.log(y1) - math.log(y0)) * (_H - _MT - _MB)

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="12">',
        "<!-- data table",
        "series,x,y,ci_lo,ci_hi",
    ]
    for label, ps in series.items():
        for p in ps:
            out.append(f"{label},{p.x:g},{p.y:.10g},{p.lo:.10g},{p.hi:.10g}")
    out.append("-->")
    out.append(f'<rect width="{_W}" height="{_H}" fill="white"/>')
    out.append(f'<text x="{_W/2}" y="20" text-anchor="middle" font-size="15">{title}</text>')

    for v in _ticks_log(x0, x1):
        x = px(v)
        out.append(f'<line x1="{x:.1f}" y1="{_MT}" x2="{x:.1f}" y2="{_H-_MB}" stroke="#ddd"/>')
        out.append(f'<text x="{x:.1f}" y="{_H-_MB+16}" text-anchor="middle">{_fmt(v)}</text>')
    for v in _ticks_log(y0, y1):
        y = py(v)
        out.append(f'<line x1="{_ML}" y1="{y:.1f}" x2="{_W-_MR}" y2="{y:.1f}" stroke="#ddd"/>')
        out.append(f'<text x="{_ML-6}" y="{y+4:.1f}" text-anchor="end">{_fmt(v)}</text>')
    out.append(
        f'<rect x="{_ML}" y="{_MT}" width="{_W-_ML-_MR}" height="{_H-_MT-_MB}" '
        'fill="none" stroke="#333"/>'
    )
    out.append(f'<text x="{_W/2}" y="{_H-10}" text-anchor="middle">{xlabel}</text>')
    out.append(
        f'<text x="16" y="{_H/2}" text-anchor="middle" '
        f'transform="rotate(-90 16 {_H/2})">{ylabel}</text>'
    )

    for idx, (label, ps) in enumerate(series.items()):
        color = _COLORS[idx % len(_COLORS)]
        ordered = sorted(ps, key=lambda p: p.x)
        path = " ".join(f"{px(p.x):.1f},{py(p.y):.1f}" for p in ordered)
        out.append(f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="1.8"/>')
        for p in ordered:
            out.append(f'<circle cx="{px(p.x):.1f}" cy="{py(p.y):.1f}" r="3" fill="{color}"/>')
            if p.lo == p.lo and p.hi == p.hi and p.lo > 0:
                out.append(
                    f'<line x1="{px(p.x):.1f}" y1="{py(p.lo):.1f}" x2="{px(p.x):.1f}" '
                    f'y2="{py(p.hi):.1f}" stroke="{color}" stroke-width="1"/>'
                )
        ly = _MT + 16 + 16 * idx
        out.append(f'<line x1="{_W-_MR-130}" y1="{ly-4}" x2="{_W-_MR-106}" y2="{ly-4}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{_W-_MR-100}" y="{ly}">{label}</text>')

    out.append("</svg>")
    return "\n".join(out) + "\n"
