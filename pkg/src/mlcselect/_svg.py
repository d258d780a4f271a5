"""Dependency-free SVG writers for the report bundle.

These render the two figures the pipeline ships: a macro-F1 heatmap over
selectors x metrics and a beeswarm-style attribution summary per metric.
Output is deterministic: fixed canvas, fixed ordering, fixed number
formatting, no timestamps.
"""

from __future__ import annotations

from pathlib import Path

__all__ = ["heatmap_svg", "beeswarm_svg"]

_FONT = "font-family=\"monospace\" font-size=\"11\""


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _lerp_color(low: tuple, high: tuple, t: float) -> str:
    t = min(1.0, max(0.0, t))
    rgb = [round(a + (b - a) * t) for a, b in zip(low, high)]
    return "#{:02x}{:02x}{:02x}".format(*rgb)


def heatmap_svg(row_labels: list[str], col_labels: list[str],
                values: list[list[float]], path: str | Path,
                comment: str | None = None) -> None:
    """Grid of colored cells with the value printed in each."""
    cell_w, cell_h = 90, 26
    left, top = 160, 40
    width = left + cell_w * len(col_labels) + 20
    height = top + cell_h * len(row_labels) + 20
    flat = [v for row in values for v in row]
    vmin, vmax = (min(flat), max(flat)) if flat else (0.0, 1.0)
    span = (vmax - vmin) or 1.0
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
    ]
    if comment is not None:
        parts.append(f"<!-- {comment} -->")
    parts.append(f'<rect width="{width}" height="{height}" fill="white"/>')
    for j, col in enumerate(col_labels):
        x = left + j * cell_w + cell_w / 2
        parts.append(
            f'<text x="{_fmt(x)}" y="{top - 10}" text-anchor="middle" {_FONT}>{col}</text>')
    for i, row in enumerate(row_labels):
        y = top + i * cell_h + cell_h / 2 + 4
        parts.append(
            f'<text x="{left - 8}" y="{_fmt(y)}" text-anchor="end" {_FONT}>{row}</text>')
        for j, v in enumerate(values[i]):
            x = left + j * cell_w
            color = _lerp_color((247, 251, 255), (33, 102, 172), (v - vmin) / span)
            parts.append(
                f'<rect x="{x}" y="{top + i * cell_h}" width="{cell_w}" '
                f'height="{cell_h}" fill="{color}" stroke="#cccccc"/>')
            text_fill = "#000000" if (v - vmin) / span < 0.6 else "#ffffff"
            parts.append(
                f'<text x="{_fmt(x + cell_w / 2)}" y="{_fmt(top + i * cell_h + cell_h / 2 + 4)}" '
                f'text-anchor="middle" fill="{text_fill}" {_FONT}>{v:.3f}</text>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n", encoding="utf-8")


def beeswarm_svg(ranking, path: str | Path, comment: str | None = None) -> None:
    """One row per feature (importance-ranked), one dot per dataset.

    Dot x-position is the attribution phi, dot color encodes the feature's
    raw value normalized within its row (blue low, red high, gray constant).
    """
    row_h = 22
    left, top = 260, 30
    plot_w = 420
    rows = list(ranking)
    height = top + row_h * len(rows) + 30
    width = left + plot_w + 30
    max_abs = max((abs(p[1]) for fi in rows for p in fi.points), default=0.0) or 1.0

    def x_of(phi: float) -> float:
        return left + plot_w / 2 + (phi / max_abs) * (plot_w / 2 - 10)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
    ]
    if comment is not None:
        parts.append(f"<!-- {comment} -->")
    parts.append(f'<rect width="{width}" height="{height}" fill="white"/>')
    center = left + plot_w / 2
    parts.append(
        f'<line x1="{_fmt(center)}" y1="{top - 10}" x2="{_fmt(center)}" '
        f'y2="{height - 20}" stroke="#888888" stroke-dasharray="3,3"/>')
    for i, fi in enumerate(rows):
        y = top + i * row_h + row_h / 2
        parts.append(
            f'<text x="{left - 8}" y="{_fmt(y + 4)}" text-anchor="end" {_FONT}>'
            f'{fi.feature}</text>')
        vals = [p[2] for p in fi.points]
        vmin, vmax = min(vals), max(vals)
        span = vmax - vmin
        for k, (_, phi, value) in enumerate(fi.points):
            # deterministic vertical stagger in place of random jitter
            jitter = ((k * 7) % 11 - 5) * 0.8
            color = ("#999999" if span == 0.0 else
                     _lerp_color((33, 102, 172), (178, 24, 43), (value - vmin) / span))
            parts.append(
                f'<circle cx="{_fmt(x_of(phi))}" cy="{_fmt(y + jitter)}" r="3" '
                f'fill="{color}" fill-opacity="0.8"/>')
    parts.append(
        f'<text x="{_fmt(center)}" y="{height - 6}" text-anchor="middle" {_FONT}>'
        f'phi (attribution)</text>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n", encoding="utf-8")
