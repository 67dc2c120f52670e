"""Minimal SVG line plots with shaded ±3 standard-error bands."""

from __future__ import annotations

import math
from typing import Sequence

W, H, PAD = 480, 320, 48
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd")


def _fmt(v: float) -> str:
    return format(v, ".6g")


def line_plot(series: Sequence[tuple[str, Sequence[float], Sequence[float], Sequence[float]]],
              xlabel: str, ylabel: str, title: str = "", band: float = 3.0) -> str:
    """Render ``(name, x, mean, stderr)`` series as polylines with bands of ``band`` stderr.

    Output depends only on the data, so repeated runs give identical files.
    """
    xs = [x for _, xv, _, _ in series for x in xv if math.isfinite(x)]
    ys = [y + s * k for _, _, yv, sv in series for y, s in zip(yv, sv)
          for k in (-band, band) if math.isfinite(y + s * k)]
    if not xs or not ys:
        xs, ys = [0.0, 1.0], [0.0, 1.0]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    if x1 == x0:
        x1 = x0 + 1
    if y1 == y0:
        y1 = y0 + 1

    def px(x):
        return PAD + (x - x0) / (x1 - x0) * (W - 2 * PAD)

    def py(y):
        return H - PAD - (y - y0) / (y1 - y0) * (H - 2 * PAD)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
           f'viewBox="0 0 {W} {H}">',
           f'<rect width="{W}" height="{H}" fill="white"/>',
           f'<line x1="{PAD}" y1="{H - PAD}" x2="{W - PAD}" y2="{H - PAD}" stroke="black"/>',
           f'<line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{H - PAD}" stroke="black"/>',
           f'<text x="{W / 2}" y="{H - 10}" text-anchor="middle" font-size="12">{xlabel}</text>',
           f'<text x="14" y="{H / 2}" text-anchor="middle" font-size="12" '
           f'transform="rotate(-90 14 {H / 2})">{ylabel}</text>',
           f'<text x="{W / 2}" y="20" text-anchor="middle" font-size="13">{title}</text>',
           f'<text x="{PAD}" y="{H - PAD + 14}" font-size="10">{_fmt(x0)}</text>',
           f'<text x="{W - PAD}" y="{H - PAD + 14}" text-anchor="end" font-size="10">{_fmt(x1)}</text>',
           f'<text x="{PAD - 4}" y="{H - PAD}" text-anchor="end" font-size="10">{_fmt(y0)}</text>',
           f'<text x="{PAD - 4}" y="{PAD + 4}" text-anchor="end" font-size="10">{_fmt(y1)}</text>']
    for i, (name, xv, yv, sv) in enumerate(series):
        col = COLORS[i % len(COLORS)]
        pts = [(x, y, s) for x, y, s in zip(xv, yv, sv) if math.isfinite(x) and math.isfinite(y)]
        if not pts:
            continue
        upper = [f"{px(x):.2f},{py(y + band * s):.2f}" for x, y, s in pts]
        lower = [f"{px(x):.2f},{py(y - band * s):.2f}" for x, y, s in reversed(pts)]
        out.append(f'<polygon points="{" ".join(upper + lower)}" fill="{col}" fill-opacity="0.2"/>')
        line = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y, _ in pts)
        out.append(f'<polyline points="{line}" fill="none" stroke="{col}" stroke-width="1.5"/>')
        out.append(f'<text x="{W - PAD}" y="{PAD + 14 * i}" text-anchor="end" font-size="11" '
                   f'fill="{col}">{name}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
