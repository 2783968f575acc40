"""Minimal deterministic SVG plots (ladders, slope fits, density heatmaps).

Hand-rolled so identical inputs produce byte-identical documents.
"""

from __future__ import annotations

import numpy as np

_W, _H = 480, 360
_MARGIN = 48


def _fmt(v: float) -> str:
    return f"{v:.4f}"


def emit_plot(
    xs,
    ys,
    title: str = "",
    xlabel: str = "x",
    ylabel: str = "y",
    loglog: bool = True,
    annotate_slope: bool = True,
) -> str | None:
    """Ladder plot with an optional least-squares slope annotation.

    Returns the SVG text, or None (a warning no-op) for empty input.
    Single points are drawn without a fit.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.size == 0:
        return None
    if loglog:
        keep = (xs > 0) & (ys > 0)
        xs, ys = np.log(xs[keep]), np.log(ys[keep])
        if xs.size == 0:
            return None

    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(ys.min()), float(ys.max())
    if x1 == x0:
        x0, x1 = x0 - 1.0, x1 + 1.0
    if y1 == y0:
        y0, y1 = y0 - 1.0, y1 + 1.0

    def sx(v):
        return _MARGIN + (v - x0) / (x1 - x0) * (_W - 2 * _MARGIN)

    def sy(v):
        return _H - _MARGIN - (v - y0) / (y1 - y0) * (_H - 2 * _MARGIN)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W // 2}" y="20" text-anchor="middle" font-size="14">{title}</text>',
        f'<text x="{_W // 2}" y="{_H - 8}" text-anchor="middle" font-size="11">{xlabel}'
        + (" (log)" if loglog else "")
        + "</text>",
        f'<text x="14" y="{_H // 2}" text-anchor="middle" font-size="11" '
        f'transform="rotate(-90 14 {_H // 2})">{ylabel}' + (" (log)" if loglog else "") + "</text>",
        f'<rect x="{_MARGIN}" y="{_MARGIN}" width="{_W - 2 * _MARGIN}" '
        f'height="{_H - 2 * _MARGIN}" fill="none" stroke="#888"/>',
    ]
    pts = " ".join(f"{_fmt(sx(a))},{_fmt(sy(b))}" for a, b in zip(xs, ys))
    if xs.size > 1:
        parts.append(f'<polyline points="{pts}" fill="none" stroke="#1f77b4" stroke-width="1.5"/>')
    for a, b in zip(xs, ys):
        parts.append(f'<circle cx="{_fmt(sx(a))}" cy="{_fmt(sy(b))}" r="3" fill="#1f77b4"/>')
    if annotate_slope and xs.size > 1:
        slope, intercept = np.polyfit(xs, ys, 1)
        fit_y = [slope * v + intercept for v in (x0, x1)]
        parts.append(
            f'<line x1="{_fmt(sx(x0))}" y1="{_fmt(sy(fit_y[0]))}" '
            f'x2="{_fmt(sx(x1))}" y2="{_fmt(sy(fit_y[1]))}" '
            f'stroke="#d62728" stroke-dasharray="4 3"/>'
        )
        parts.append(
            f'<text x="{_W - _MARGIN}" y="{_MARGIN - 6}" text-anchor="end" '
            f'font-size="12">slope = {_fmt(float(slope))}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_heatmap(values: np.ndarray, shape, title: str = "") -> str | None:
    """Cell-density heatmap for 2-d grids (higher-dimensional grids are
    shown as their middle slice along the last axis)."""
    values = np.asarray(values, dtype=float).reshape(shape)
    if values.size == 0:
        return None
    if values.ndim > 2:
        mid = values.shape[-1] // 2
        values = values[..., mid]
    vmax = values.max() if values.max() > 0 else 1.0
    nx, ny = values.shape
    cw = (_W - 2 * _MARGIN) / nx
    ch = (_H - 2 * _MARGIN) / ny
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W // 2}" y="20" text-anchor="middle" font-size="14">{title}</text>',
    ]
    for i in range(nx):
        for j in range(ny):
            level = values[i, j] / vmax
            shade = int(round(255 * (1.0 - 0.85 * level)))
            parts.append(
                f'<rect x="{_fmt(_MARGIN + i * cw)}" '
                f'y="{_fmt(_H - _MARGIN - (j + 1) * ch)}" '
                f'width="{_fmt(cw)}" height="{_fmt(ch)}" '
                f'fill="rgb({shade},{shade},255)"/>'
            )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
