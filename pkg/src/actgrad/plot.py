"""Dependency-free SVG line plot for training curves."""

from __future__ import annotations

import math
from html import escape

import numpy as np

COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]


def moving_average(y: np.ndarray, window: int) -> np.ndarray:
    """Trailing mean over up to ``window`` points (shorter at the start); NaNs skipped."""
    y = np.asarray(y, dtype=float)
    out = np.empty_like(y)
    for i in range(y.size):
        seg = y[max(0, i - window + 1): i + 1]
        seg = seg[~np.isnan(seg)]
        out[i] = seg.mean() if seg.size else np.nan
    return out


def _nice_ticks(lo: float, hi: float, n: int = 5):
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=10 * mag)
    start = math.floor(lo / step) * step
    ticks = []
    t = start
    while t <= hi + 1e-9 * step:
        ticks.append(round(t, 10))
        t += step
    return ticks


def _polyline(xs, ys, sx, sy, **attrs) -> str:
    pts = []
    segments = []
    for x, y in zip(xs, ys):
        if np.isnan(y):
            if pts:
                segments.append(pts)
                pts = []
            continue
        pts.append(f"{sx(x):.2f},{sy(y):.2f}")
    if pts:
        segments.append(pts)
    extra = " ".join(f'{k.replace("_", "-")}="{v}"' for k, v in attrs.items())
    return "\n".join(f'<polyline fill="none" {extra} points="{" ".join(seg)}"/>' for seg in segments)


def curves_svg(curves: dict, window: int = 50, title: str = "Average training return",
               width: int = 720, height: int = 420) -> str:
    """Render ``{label: per-episode mean return}`` as an SVG document.

    Each curve is drawn raw (thin) with a labeled moving-average overlay.
    """
    left, right, top, bottom = 70, 170, 40, 50
    pw, ph = width - left - right, height - top - bottom
    finite = [v for c in curves.values() for v in np.asarray(c, float) if not np.isnan(v)]
    n = max((len(c) for c in curves.values()), default=1)
    ylo, yhi = (min(finite), max(finite)) if finite else (0.0, 1.0)
    if yhi == ylo:
        ylo, yhi = ylo - 1.0, yhi + 1.0
    yt = _nice_ticks(ylo, yhi)
    ylo, yhi = min(ylo, yt[0]), max(yhi, yt[-1])
    xt = _nice_ticks(0, max(n - 1, 1))

    def sx(x):
        return left + pw * x / max(n - 1, 1)

    def sy(y):
        return top + ph * (1.0 - (y - ylo) / (yhi - ylo))

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{left + pw / 2}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>',
    ]
    for t in xt:
        if t > n - 1 and n > 1:
            break
        out.append(f'<line x1="{sx(t):.2f}" y1="{top + ph}" x2="{sx(t):.2f}" y2="{top + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{sx(t):.2f}" y="{top + ph + 18}" text-anchor="middle">{t:g}</text>')
    for t in yt:
        out.append(f'<line x1="{left - 5}" y1="{sy(t):.2f}" x2="{left}" y2="{sy(t):.2f}" stroke="black"/>')
        out.append(f'<text x="{left - 8}" y="{sy(t) + 4:.2f}" text-anchor="end">{t:g}</text>')
    out.append(f'<text x="{left + pw / 2}" y="{height - 10}" text-anchor="middle">Episode</text>')
    out.append(
        f'<text x="18" y="{top + ph / 2}" text-anchor="middle" '
        f'transform="rotate(-90 18 {top + ph / 2})">Mean return over trials</text>'
    )
    legend = ['<g class="legend">']
    legend_y = top + 10
    lx = left + pw + 15
    for i, (label, curve) in enumerate(curves.items()):
        color = COLORS[i % len(COLORS)]
        curve = np.asarray(curve, dtype=float)
        xs = np.arange(curve.size)
        out.append(f'<g class="curve" data-label="{escape(str(label))}">')
        out.append(_polyline(xs, curve, sx, sy, stroke=color, stroke_width="0.8", stroke_opacity="0.35"))
        out.append(_polyline(xs, moving_average(curve, window), sx, sy, stroke=color, stroke_width="2"))
        out.append("</g>")
        legend.append(f'<line x1="{lx}" y1="{legend_y}" x2="{lx + 20}" y2="{legend_y}" stroke="{color}" stroke-width="2"/>')
        legend.append(f'<text x="{lx + 26}" y="{legend_y + 4}">{escape(str(label))}</text>')
        legend_y += 18
    legend.append(
        f'<text x="{lx}" y="{legend_y + 8}" font-size="10" fill="#555">'
        f"thin: raw, bold: {window}-ep avg</text>"
    )
    legend.append("</g>")
    out.extend(legend)
    out.append("</svg>")
    return "\n".join(out) + "\n"
