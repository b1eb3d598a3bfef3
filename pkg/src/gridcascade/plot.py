"""Tiny SVG chart writer for the report stage. No plotting dependency.

Line charts and grouped bar charts, enough for the report figures. Output is
deterministic: fixed palette, fixed float formatting.
"""

from __future__ import annotations

import math
from pathlib import Path

PALETTE = ["#1f6fb2", "#d0612e", "#3a9e5f", "#8356a8", "#b03060", "#6b6b6b"]

_WIDTH = 640
_HEIGHT = 420
_MARGIN_LEFT = 70
_MARGIN_RIGHT = 24
_MARGIN_TOP = 48
_MARGIN_BOTTOM = 64


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def _esc(text: str) -> str:
    return (
        str(text)
        .replace("&", "&amp;")
        .replace("<", "&lt;")
        .replace(">", "&gt;")
        .replace('"', "&quot;")
    )


def _nice_ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    span = hi - lo
    step = 10 ** math.floor(math.log10(span / n))
    for mult in (1, 2, 5, 10):
        if span / (step * mult) <= n:
            step *= mult
            break
    first = math.ceil(lo / step) * step
    ticks = []
    value = first
    while value <= hi + 1e-12:
        ticks.append(round(value, 10))
        value += step
    return ticks


def _frame(title: str, xlabel: str, ylabel: str) -> list[str]:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" '
        f'height="{_HEIGHT}" viewBox="0 0 {_WIDTH} {_HEIGHT}">',
        f'<rect width="{_WIDTH}" height="{_HEIGHT}" fill="white"/>',
        f'<text x="{_WIDTH / 2:.0f}" y="26" text-anchor="middle" '
        f'font-family="sans-serif" font-size="16" font-weight="bold">'
        f"{_esc(title)}</text>",
        f'<text x="{_WIDTH / 2:.0f}" y="{_HEIGHT - 14}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="13">{_esc(xlabel)}</text>',
        f'<text x="18" y="{_HEIGHT / 2:.0f}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="13" '
        f'transform="rotate(-90 18 {_HEIGHT / 2:.0f})">{_esc(ylabel)}</text>',
    ]


def _plot_area() -> tuple[float, float, float, float]:
    x0 = _MARGIN_LEFT
    y0 = _MARGIN_TOP
    x1 = _WIDTH - _MARGIN_RIGHT
    y1 = _HEIGHT - _MARGIN_BOTTOM
    return x0, y0, x1, y1


def _legend(parts: list[str], labels: list[str]) -> None:
    x0, y0, x1, _ = _plot_area()
    x = x0 + 10
    for i, label in enumerate(labels):
        color = PALETTE[i % len(PALETTE)]
        parts.append(
            f'<rect x="{x}" y="{y0 + 6 + 18 * i}" width="12" height="12" '
            f'fill="{color}"/>'
        )
        parts.append(
            f'<text x="{x + 18}" y="{y0 + 16 + 18 * i}" '
            f'font-family="sans-serif" font-size="12">{_esc(label)}</text>'
        )


def svg_line_chart(
    path: str | Path,
    title: str,
    xlabel: str,
    ylabel: str,
    series: list[dict],
    y_floor: float | None = None,
) -> None:
    """series: [{label, xs, ys}, ...] drawn in palette order with markers."""
    all_x = [x for s in series for x in s["xs"]]
    all_y = [y for s in series for y in s["ys"] if math.isfinite(y)]
    if not all_x or not all_y:
        raise ValueError("nothing to plot")
    x_lo, x_hi = min(all_x), max(all_x)
    y_lo, y_hi = min(all_y), max(all_y)
    if y_floor is not None:
        y_lo = min(y_lo, y_floor)
    if x_hi == x_lo:
        x_hi = x_lo + 1
    pad = 0.08 * (y_hi - y_lo) or 0.05
    y_lo, y_hi = y_lo - pad, y_hi + pad

    x0, y0, x1, y1 = _plot_area()

    def sx(v: float) -> float:
        return x0 + (v - x_lo) / (x_hi - x_lo) * (x1 - x0)

    def sy(v: float) -> float:
        return y1 - (v - y_lo) / (y_hi - y_lo) * (y1 - y0)

    parts = _frame(title, xlabel, ylabel)
    parts.append(
        f'<rect x="{x0}" y="{y0}" width="{x1 - x0}" height="{y1 - y0}" '
        f'fill="none" stroke="#444"/>'
    )
    for tick in _nice_ticks(y_lo, y_hi):
        y = sy(tick)
        parts.append(
            f'<line x1="{x0}" y1="{_fmt(y)}" x2="{x1}" y2="{_fmt(y)}" '
            f'stroke="#ddd"/>'
        )
        parts.append(
            f'<text x="{x0 - 8}" y="{_fmt(y + 4)}" text-anchor="end" '
            f'font-family="sans-serif" font-size="11">{tick:g}</text>'
        )
    for tick in _nice_ticks(x_lo, x_hi, 8):
        x = sx(tick)
        parts.append(
            f'<line x1="{_fmt(x)}" y1="{y1}" x2="{_fmt(x)}" y2="{y1 + 5}" '
            f'stroke="#444"/>'
        )
        parts.append(
            f'<text x="{_fmt(x)}" y="{y1 + 20}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="11">{tick:g}</text>'
        )
    for i, s in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        points = " ".join(
            f"{_fmt(sx(x))},{_fmt(sy(y))}" for x, y in zip(s["xs"], s["ys"])
        )
        parts.append(
            f'<polyline points="{points}" fill="none" stroke="{color}" '
            f'stroke-width="2"/>'
        )
        for x, y in zip(s["xs"], s["ys"]):
            parts.append(
                f'<circle cx="{_fmt(sx(x))}" cy="{_fmt(sy(y))}" r="3" '
                f'fill="{color}"/>'
            )
    _legend(parts, [s["label"] for s in series])
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n", encoding="utf-8")


def svg_bar_chart(
    path: str | Path,
    title: str,
    ylabel: str,
    group_labels: list[str],
    series: list[dict],
    hline: float | None = None,
) -> None:
    """Grouped bars: series = [{label, values}], one value per group."""
    all_values = [v for s in series for v in s["values"]]
    if not all_values:
        raise ValueError("nothing to plot")
    y_hi = max(max(all_values), hline or 0.0) * 1.15 or 1.0
    y_lo = 0.0

    x0, y0, x1, y1 = _plot_area()

    def sy(v: float) -> float:
        return y1 - (v - y_lo) / (y_hi - y_lo) * (y1 - y0)

    parts = _frame(title, "", ylabel)
    parts.append(
        f'<rect x="{x0}" y="{y0}" width="{x1 - x0}" height="{y1 - y0}" '
        f'fill="none" stroke="#444"/>'
    )
    for tick in _nice_ticks(y_lo, y_hi):
        y = sy(tick)
        parts.append(
            f'<line x1="{x0}" y1="{_fmt(y)}" x2="{x1}" y2="{_fmt(y)}" '
            f'stroke="#ddd"/>'
        )
        parts.append(
            f'<text x="{x0 - 8}" y="{_fmt(y + 4)}" text-anchor="end" '
            f'font-family="sans-serif" font-size="11">{tick:g}</text>'
        )
    n_groups = len(group_labels)
    n_series = len(series)
    group_width = (x1 - x0) / max(1, n_groups)
    bar_width = group_width * 0.7 / max(1, n_series)
    for gi, gl in enumerate(group_labels):
        gx = x0 + gi * group_width
        parts.append(
            f'<text x="{_fmt(gx + group_width / 2)}" y="{y1 + 20}" '
            f'text-anchor="middle" font-family="sans-serif" font-size="11">'
            f"{_esc(gl)}</text>"
        )
        for si, s in enumerate(series):
            value = s["values"][gi]
            color = PALETTE[si % len(PALETTE)]
            bx = gx + group_width * 0.15 + si * bar_width
            by = sy(value)
            parts.append(
                f'<rect x="{_fmt(bx)}" y="{_fmt(by)}" '
                f'width="{_fmt(bar_width * 0.9)}" '
                f'height="{_fmt(y1 - by)}" fill="{color}"/>'
            )
    if hline is not None:
        y = sy(hline)
        parts.append(
            f'<line x1="{x0}" y1="{_fmt(y)}" x2="{x1}" y2="{_fmt(y)}" '
            f'stroke="#b03060" stroke-dasharray="6 4" stroke-width="1.5"/>'
        )
    _legend(parts, [s["label"] for s in series])
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n", encoding="utf-8")
