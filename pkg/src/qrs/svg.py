"""Bare-bones SVG line charts (log axes, polylines, tick labels).

Just enough to eyeball a trade-off curve without a plotting library.
"""

from __future__ import annotations

import math

COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"]


def _ticks(lo, hi, log):
    if log:
        return [10.0 ** e for e in range(math.floor(lo), math.ceil(hi) + 1)]
    step = 10 ** math.floor(math.log10(max(hi - lo, 1e-300)))
    start = math.floor(lo / step) * step
    return [start + i * step for i in range(int((hi - start) / step) + 2)]


def line_chart(series, xlabel="", ylabel="", title="", logx=True, logy=True,
               width=640, height=420) -> str:
    """``series`` maps a legend label to ``(xs, ys)``. Non-positive values are
    dropped on log axes."""
    pad_l, pad_r, pad_t, pad_b = 70, 20, 30, 50
    tx = (lambda v: math.log10(v)) if logx else (lambda v: v)
    ty = (lambda v: math.log10(v)) if logy else (lambda v: v)
    pts = {}
    for label, (xs, ys) in series.items():
        keep = [(tx(x), ty(y)) for x, y in zip(xs, ys)
                if math.isfinite(x) and math.isfinite(y)
                and (not logx or x > 0) and (not logy or y > 0)]
        pts[label] = keep
    allp = [p for v in pts.values() for p in v]
    if not allp:
        allp = [(0.0, 0.0), (1.0, 1.0)]
    x0, x1 = min(p[0] for p in allp), max(p[0] for p in allp)
    y0, y1 = min(p[1] for p in allp), max(p[1] for p in allp)
    if x1 == x0:
        x0, x1 = x0 - 1, x1 + 1
    if y1 == y0:
        y0, y1 = y0 - 1, y1 + 1
    pw, ph = width - pad_l - pad_r, height - pad_t - pad_b

    def sx(v):
        return pad_l + (v - x0) / (x1 - x0) * pw

    def sy(v):
        return pad_t + ph - (v - y0) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'font-family="sans-serif" font-size="11">',
           f'<rect x="{pad_l}" y="{pad_t}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>']
    for t in _ticks(x0, x1, logx):
        v = tx(t) if logx else t
        if x0 - 1e-9 <= v <= x1 + 1e-9:
            out.append(f'<line x1="{sx(v):.1f}" y1="{pad_t + ph}" x2="{sx(v):.1f}" '
                       f'y2="{pad_t + ph + 4}" stroke="#444"/>')
            out.append(f'<text x="{sx(v):.1f}" y="{pad_t + ph + 16}" '
                       f'text-anchor="middle">{t:g}</text>')
    for t in _ticks(y0, y1, logy):
        v = ty(t) if logy else t
        if y0 - 1e-9 <= v <= y1 + 1e-9:
            out.append(f'<line x1="{pad_l - 4}" y1="{sy(v):.1f}" x2="{pad_l}" '
                       f'y2="{sy(v):.1f}" stroke="#444"/>')
            out.append(f'<text x="{pad_l - 6}" y="{sy(v) + 4:.1f}" '
                       f'text-anchor="end">{t:g}</text>')
    for i, (label, p) in enumerate(pts.items()):
        c = COLORS[i % len(COLORS)]
        if p:
            coords = " ".join(f"{sx(a):.1f},{sy(b):.1f}" for a, b in p)
            out.append(f'<polyline points="{coords}" fill="none" stroke="{c}" '
                       f'stroke-width="1.5"/>')
        out.append(f'<text x="{pad_l + 8}" y="{pad_t + 14 + 14 * i}" fill="{c}">{label}</text>')
    out.append(f'<text x="{pad_l + pw / 2}" y="{height - 12}" text-anchor="middle">'
               f'{xlabel}</text>')
    out.append(f'<text x="16" y="{pad_t + ph / 2}" text-anchor="middle" '
               f'transform="rotate(-90 16 {pad_t + ph / 2})">{ylabel}</text>')
    if title:
        out.append(f'<text x="{pad_l + pw / 2}" y="18" text-anchor="middle">{title}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
