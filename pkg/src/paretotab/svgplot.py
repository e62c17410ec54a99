"""Minimal deterministic SVG line charts (no plotting dependency).

Emits a fixed-size chart with a border, one polyline per series, a small
legend, and min/max tick labels.  Coordinates are formatted with fixed
precision so identical inputs produce identical bytes.
"""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

WIDTH, HEIGHT = 720, 480
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 70, 20, 40, 50

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b", "#e377c2")


def _transform(values, log_scale):
    if log_scale:
        if any(v <= 0 for v in values):
            raise ValueError("log scale requires positive values")
        return [math.log10(v) for v in values]
    return list(values)


def line_chart(
    series: list[tuple[str, list[float], list[float]]],
    title: str,
    x_label: str,
    y_label: str,
    log_x: bool = False,
    log_y: bool = False,
    header_comment: str | None = None,
) -> str:
    """Render ``[(label, xs, ys), ...]`` to an SVG document string."""
    if not series or all(len(xs) == 0 for _, xs, _ in series):
        raise ValueError("nothing to plot")
    tx = [_transform(xs, log_x) for _, xs, _ in series]
    ty = [_transform(ys, log_y) for _, _, ys in series]
    x_min = min(min(v) for v in tx if v)
    x_max = max(max(v) for v in tx if v)
    y_min = min(min(v) for v in ty if v)
    y_max = max(max(v) for v in ty if v)
    x_span = (x_max - x_min) or 1.0
    y_span = (y_max - y_min) or 1.0
    plot_w = WIDTH - MARGIN_L - MARGIN_R
    plot_h = HEIGHT - MARGIN_T - MARGIN_B

    def sx(v: float) -> float:
        return MARGIN_L + (v - x_min) / x_span * plot_w

    def sy(v: float) -> float:
        return HEIGHT - MARGIN_B - (v - y_min) / y_span * plot_h

    def fmt(v: float) -> str:
        return f"{v:.6g}"

    lines = ['<?xml version="1.0" encoding="UTF-8"?>']
    if header_comment:
        lines.append(f"<!-- {escape(header_comment)} -->")
    lines.append(
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">'
    )
    lines.append(f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>')
    lines.append(
        f'<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{plot_w}" height="{plot_h}" '
        f'fill="none" stroke="#333333" stroke-width="1"/>'
    )
    lines.append(
        f'<text x="{WIDTH / 2:.1f}" y="24" text-anchor="middle" font-family="sans-serif" '
        f'font-size="16">{escape(title)}</text>'
    )
    lines.append(
        f'<text x="{WIDTH / 2:.1f}" y="{HEIGHT - 12}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="12">{escape(x_label)}</text>'
    )
    lines.append(
        f'<text x="16" y="{HEIGHT / 2:.1f}" text-anchor="middle" font-family="sans-serif" '
        f'font-size="12" transform="rotate(-90 16 {HEIGHT / 2:.1f})">{escape(y_label)}</text>'
    )
    # min/max ticks, back-transformed to data units
    x_lo, x_hi = (10**x_min, 10**x_max) if log_x else (x_min, x_max)
    y_lo, y_hi = (10**y_min, 10**y_max) if log_y else (y_min, y_max)
    lines.append(
        f'<text x="{MARGIN_L}" y="{HEIGHT - MARGIN_B + 16}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="10">{fmt(x_lo)}</text>'
    )
    lines.append(
        f'<text x="{WIDTH - MARGIN_R}" y="{HEIGHT - MARGIN_B + 16}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="10">{fmt(x_hi)}</text>'
    )
    lines.append(
        f'<text x="{MARGIN_L - 6}" y="{HEIGHT - MARGIN_B + 4}" text-anchor="end" '
        f'font-family="sans-serif" font-size="10">{fmt(y_lo)}</text>'
    )
    lines.append(
        f'<text x="{MARGIN_L - 6}" y="{MARGIN_T + 4}" text-anchor="end" '
        f'font-family="sans-serif" font-size="10">{fmt(y_hi)}</text>'
    )
    for i, (label, _, _) in enumerate(series):
        color = _COLORS[i % len(_COLORS)]
        points = " ".join(f"{sx(px):.2f},{sy(py):.2f}" for px, py in zip(tx[i], ty[i]))
        lines.append(
            f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{points}"/>'
        )
        ly = MARGIN_T + 16 + 16 * i
        lines.append(
            f'<line x1="{MARGIN_L + 8}" y1="{ly - 4}" x2="{MARGIN_L + 30}" y2="{ly - 4}" '
            f'stroke="{color}" stroke-width="1.5"/>'
        )
        lines.append(
            f'<text x="{MARGIN_L + 36}" y="{ly}" font-family="sans-serif" '
            f'font-size="11">{escape(label)}</text>'
        )
    lines.append("</svg>")
    return "\n".join(lines) + "\n"
