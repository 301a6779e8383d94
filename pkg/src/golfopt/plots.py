"""Standalone SVG heatmaps and line plots (no plotting dependency)."""
from __future__ import annotations

from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

# viridis anchor colours
_ANCHORS = np.array(
    [
        [68, 1, 84],
        [59, 82, 139],
        [33, 145, 140],
        [94, 201, 98],
        [253, 231, 37],
    ],
    dtype=np.float64,
)
_PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd"]


def _colour(t: float) -> str:
    t = min(max(t, 0.0), 1.0) * (len(_ANCHORS) - 1)
    i = min(int(t), len(_ANCHORS) - 2)
    rgb = _ANCHORS[i] + (t - i) * (_ANCHORS[i + 1] - _ANCHORS[i])
    return "#%02x%02x%02x" % tuple(int(round(c)) for c in rgb)


def heatmap_svg(values: np.ndarray, path, title: str = "", extent=(-1.0, 1.0), max_cells: int = 51) -> None:
    """``values[i, j]`` is drawn at x = axis[i], y = axis[j] (y up)."""
    values = np.asarray(values, dtype=np.float64)
    step = max(1, int(np.ceil(values.shape[0] / max_cells)))
    v = values[::step, ::step]
    n0, n1 = v.shape
    size, margin = 360, 40
    cw, ch = size / n0, size / n1
    lo, hi = float(np.min(v)), float(np.max(v))
    span = hi - lo if hi > lo else 1.0
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size + 2 * margin + 60}" height="{size + 2 * margin}">',
        f'<text x="{margin}" y="{margin - 12}" font-family="sans-serif" font-size="14">{escape(title)}</text>',
    ]
    for i in range(n0):
        for j in range(n1):
            x = margin + i * cw
            y = margin + (n1 - 1 - j) * ch
            parts.append(
                f'<rect x="{x:.2f}" y="{y:.2f}" width="{cw + 0.3:.2f}" height="{ch + 0.3:.2f}" '
                f'fill="{_colour((v[i, j] - lo) / span)}"/>'
            )
    for k in range(11):
        t = k / 10
        y = margin + size - t * size
        parts.append(f'<rect x="{margin + size + 15}" y="{y - size / 10:.2f}" width="15" height="{size / 10:.2f}" fill="{_colour(t)}"/>')
    parts.append(f'<text x="{margin + size + 35}" y="{margin + 10}" font-size="10">{hi:.3g}</text>')
    parts.append(f'<text x="{margin + size + 35}" y="{margin + size}" font-size="10">{lo:.3g}</text>')
    parts.append(f'<text x="{margin}" y="{margin + size + 15}" font-size="10">{extent[0]:g}</text>')
    parts.append(f'<text x="{margin + size - 10}" y="{margin + size + 15}" font-size="10">{extent[1]:g}</text>')
    parts.append(f'<text x="{margin + size / 2}" y="{margin + size + 30}" font-size="11">u1</text>')
    parts.append(f'<text x="8" y="{margin + size / 2}" font-size="11">u2</text>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts))


def line_plot_svg(x: np.ndarray, series: dict[str, np.ndarray], path, title: str = "", xlabel: str = "") -> None:
    x = np.asarray(x, dtype=np.float64)
    width, height, margin = 520, 320, 50
    ys = np.concatenate([np.asarray(s, dtype=np.float64) for s in series.values()])
    lo, hi = float(np.min(ys)), float(np.max(ys))
    if hi == lo:
        hi = lo + 1.0
    x0, x1 = float(x[0]), float(x[-1])

    def px(a):
        return margin + (a - x0) / (x1 - x0) * (width - 2 * margin)

    def py(b):
        return height - margin - (b - lo) / (hi - lo) * (height - 2 * margin)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<text x="{margin}" y="20" font-family="sans-serif" font-size="14">{escape(title)}</text>',
        f'<rect x="{margin}" y="{margin}" width="{width - 2 * margin}" height="{height - 2 * margin}" fill="none" stroke="#888"/>',
        f'<text x="{width / 2}" y="{height - 12}" font-size="11">{escape(xlabel)}</text>',
        f'<text x="4" y="{margin + 4}" font-size="10">{hi:.3g}</text>',
        f'<text x="4" y="{height - margin}" font-size="10">{lo:.3g}</text>',
        f'<text x="{margin}" y="{height - margin + 14}" font-size="10">{x0:g}</text>',
        f'<text x="{width - margin - 10}" y="{height - margin + 14}" font-size="10">{x1:g}</text>',
    ]
    for k, (name, s) in enumerate(series.items()):
        colour = _PALETTE[k % len(_PALETTE)]
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x, np.asarray(s, dtype=np.float64)))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{colour}" stroke-width="1.5"/>')
        parts.append(f'<text x="{width - margin - 150}" y="{margin + 15 + 14 * k}" font-size="11" fill="{colour}">{escape(name)}</text>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts))
