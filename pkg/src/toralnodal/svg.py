"""Minimal self-contained SVG histogram."""

from __future__ import annotations

import numpy as np


def histogram_svg(edges, density, reference=None, title: str = "", width: int = 480, height: int = 300) -> str:
    """Bar chart of ``density`` over ``edges`` with an optional reference curve (x, y)."""
    edges = np.asarray(edges, dtype=float)
    density = np.asarray(density, dtype=float)
    pad = 30
    x0, x1 = edges[0], edges[-1]
    ymax = float(density.max()) if density.size else 1.0
    if reference is not None:
        ymax = max(ymax, float(np.max(reference[1])))
    ymax = ymax or 1.0

    def sx(x):
        return pad + (x - x0) / (x1 - x0) * (width - 2 * pad)

    def sy(y):
        return height - pad - y / ymax * (height - 2 * pad)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    for lo, hi, d in zip(edges[:-1], edges[1:], density):
        parts.append(
            f'<rect x="{sx(lo):.2f}" y="{sy(d):.2f}" width="{sx(hi) - sx(lo):.2f}" '
            f'height="{sy(0) - sy(d):.2f}" fill="#8fb3d9" stroke="#3b6ea5" stroke-width="0.5"/>'
        )
    if reference is not None:
        pts = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(*reference) if x0 <= x <= x1)
        parts.append(f'<polyline points="{pts}" fill="none" stroke="#c0392b" stroke-width="1.5"/>')
    parts.append(f'<line x1="{pad}" y1="{sy(0):.2f}" x2="{width - pad}" y2="{sy(0):.2f}" stroke="black"/>')
    for x in (x0, 0.0, x1):
        if x0 <= x <= x1:
            parts.append(f'<text x="{sx(x):.2f}" y="{height - 10}" font-size="10" text-anchor="middle">{x:.2g}</text>')
    if title:
        parts.append(f'<text x="{width / 2}" y="16" font-size="12" text-anchor="middle">{title}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
