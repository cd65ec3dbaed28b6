"""Deterministic SVG rendering of a confusion matrix."""

from __future__ import annotations

from pathlib import Path
from xml.sax.saxutils import escape

from .errors import EmptyMatrix
from .metrics import ConfusionMatrix

CELL = 56
LEFT = 130
TOP = 130
LOW = (247, 251, 255)
HIGH = (8, 48, 107)


def _color(t: float) -> str:
    r, g, b = (round(lo + (hi - lo) * t) for lo, hi in zip(LOW, HIGH))
    return f"#{r:02x}{g:02x}{b:02x}"


def render_svg(matrix: ConfusionMatrix, title: str = "") -> str:
    k = len(matrix.labels)
    if k == 0:
        raise EmptyMatrix("matrix has no labels")
    peak = int(matrix.counts.max())
    width, height = LEFT + k * CELL + 20, TOP + k * CELL + 20
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<rect width="{width}" height="{height}" fill="#ffffff"/>',
    ]
    if title:
        out.append(f'<text class="title" x="{LEFT}" y="16" font-size="13">{escape(title)}</text>')
    out.append(f'<text class="axis-title" x="{LEFT + k * CELL / 2:g}" y="34" text-anchor="middle">predicted</text>')
    out.append(
        f'<text class="axis-title" x="14" y="{TOP + k * CELL / 2:g}" text-anchor="middle" '
        f'transform="rotate(-90 14 {TOP + k * CELL / 2:g})">true</text>'
    )
    for j, label in enumerate(matrix.labels):
        x = LEFT + j * CELL + CELL / 2
        out.append(
            f'<text class="axis-label col" x="{x:g}" y="{TOP - 8}" text-anchor="start" '
            f'transform="rotate(-45 {x:g} {TOP - 8})">{escape(label)}</text>'
        )
    for i, label in enumerate(matrix.labels):
        y = TOP + i * CELL + CELL / 2
        out.append(
            f'<text class="axis-label row" x="{LEFT - 8}" y="{y:g}" text-anchor="end" '
            f'dominant-baseline="middle">{escape(label)}</text>'
        )
    for i in range(k):
        for j in range(k):
            n = int(matrix.counts[i, j])
            t = n / peak if peak else 0.0
            x, y = LEFT + j * CELL, TOP + i * CELL
            ink = "#ffffff" if t > 0.5 else "#000000"
            out.append(
                f'<rect class="cell" data-row="{i}" data-col="{j}" x="{x}" y="{y}" '
                f'width="{CELL}" height="{CELL}" fill="{_color(t)}" stroke="#cccccc"/>'
            )
            out.append(
                f'<text class="count" x="{x + CELL / 2:g}" y="{y + CELL / 2:g}" text-anchor="middle" '
                f'dominant-baseline="middle" fill="{ink}">{n}</text>'
            )
    out.append("</svg>")
    return "\n".join(out) + "\n"


def render_heatmap(matrix: ConfusionMatrix, path, title: str = "") -> None:
    """Write the matrix as an SVG heatmap; rows are true labels, columns predicted."""
    Path(path).write_text(render_svg(matrix, title), encoding="utf-8")
