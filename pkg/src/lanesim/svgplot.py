"""Tiny dependency-free SVG line plots for episode traces.

Output is plain text built from formatted floats, so the same inputs always
produce byte-identical files.
"""

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b")

_WIDTH = 800.0
_HEIGHT = 600.0
_MARGIN_L = 70.0
_MARGIN_R = 20.0
_PANEL_TOP = (40.0, 330.0)
_PANEL_H = 240.0


def _fmt(x: float) -> str:
    return format(float(x), ".2f")


def _panel(lines, title, series, t_lo, t_hi, top):
    """Append one axes panel; series is [(label, color, t, y), ...]."""
    left = _MARGIN_L
    right = _WIDTH - _MARGIN_R
    bottom = top + _PANEL_H
    y_lo = min(float(np.min(y)) for _, _, _, y in series)
    y_hi = max(float(np.max(y)) for _, _, _, y in series)
    if y_hi - y_lo < 1e-12:
        y_lo, y_hi = y_lo - 1.0, y_hi + 1.0
    t_span = max(t_hi - t_lo, 1e-12)

    def sx(t):
        return left + (t - t_lo) / t_span * (right - left)

    def sy(y):
        return bottom - (y - y_lo) / (y_hi - y_lo) * _PANEL_H

    lines.append(
        f'<rect x="{_fmt(left)}" y="{_fmt(top)}" width="{_fmt(right - left)}" '
        f'height="{_fmt(_PANEL_H)}" fill="none" stroke="#333333" stroke-width="1"/>'
    )
    lines.append(
        f'<text x="{_fmt(left)}" y="{_fmt(top - 10)}" font-size="16" '
        f'font-family="sans-serif">{title}</text>'
    )
    for value, ypix in ((y_hi, top), (y_lo, bottom)):
        lines.append(
            f'<text x="{_fmt(left - 6)}" y="{_fmt(ypix + 5)}" font-size="12" '
            f'font-family="sans-serif" text-anchor="end">{_fmt(value)}</text>'
        )
    for value, xpix in ((t_lo, left), (t_hi, right)):
        lines.append(
            f'<text x="{_fmt(xpix)}" y="{_fmt(bottom + 16)}" font-size="12" '
            f'font-family="sans-serif" text-anchor="middle">{_fmt(value)}</text>'
        )
    for label, color, t, y in series:
        points = " ".join(f"{_fmt(sx(ti))},{_fmt(sy(yi))}" for ti, yi in zip(t, y))
        lines.append(
            f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{points}"/>'
        )


def emit_svg(traces, title="episode traces") -> str:
    """Render deflection and steering panels for one or more episode logs.

    ``traces`` is a list of (label, log) where the log exposes column(name).
    """
    if not traces:
        raise ValueError("nothing to plot")
    colored = [
        (label, PALETTE[i % len(PALETTE)], log) for i, (label, log) in enumerate(traces)
    ]
    t_lo = min(float(log.column("t")[0]) for _, _, log in colored)
    t_hi = max(float(log.column("t")[-1]) for _, _, log in colored)

    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {_fmt(_WIDTH)} {_fmt(_HEIGHT)}">',
        f'<rect x="0" y="0" width="{_fmt(_WIDTH)}" height="{_fmt(_HEIGHT)}" fill="#ffffff"/>',
        f'<text x="{_fmt(_WIDTH / 2)}" y="22" font-size="18" font-family="sans-serif" '
        f'text-anchor="middle">{title}</text>',
    ]
    for name, top in zip(("deflection", "steering"), _PANEL_TOP):
        series = [
            (label, color, log.column("t"), log.column(name))
            for label, color, log in colored
        ]
        _panel(lines, name, series, t_lo, t_hi, top)

    legend_y = _PANEL_TOP[1] + _PANEL_H + 36
    x = _MARGIN_L
    for label, color, _ in colored:
        lines.append(
            f'<rect x="{_fmt(x)}" y="{_fmt(legend_y - 10)}" width="18" height="10" fill="{color}"/>'
        )
        lines.append(
            f'<text x="{_fmt(x + 24)}" y="{_fmt(legend_y)}" font-size="13" '
            f'font-family="sans-serif">{label}</text>'
        )
        x += 24 + 9 * len(label) + 30
    lines.append("</svg>")
    return "\n".join(lines) + "\n"
