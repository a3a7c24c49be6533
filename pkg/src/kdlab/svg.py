"""Minimal self-contained SVG charts and gnuplot-style data tables."""

from __future__ import annotations

import math
from html import escape
from typing import Sequence

W, H = 480, 320
MARGIN = 40
PALETTE = ("#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860")


def _f(v: float) -> str:
    return f"{v:.3f}".rstrip("0").rstrip(".") if math.isfinite(v) else "0"


def _doc(body: list[str], width: int = W, height: int = H) -> str:
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}">')
    return "\n".join([head, f'<rect width="{width}" height="{height}" fill="white"/>',
                      *body, "</svg>", ""])


def _title(text: str, x: float = W / 2) -> str:
    return (f'<text x="{_f(x)}" y="18" text-anchor="middle" font-family="sans-serif" '
            f'font-size="13">{escape(text)}</text>')


def _axes(x0, y0, x1, y1) -> list[str]:
    return [f'<line x1="{_f(x0)}" y1="{_f(y1)}" x2="{_f(x1)}" y2="{_f(y1)}" stroke="black"/>',
            f'<line x1="{_f(x0)}" y1="{_f(y0)}" x2="{_f(x0)}" y2="{_f(y1)}" stroke="black"/>']


def bar_elements(labels: Sequence[str], values: Sequence[float], box, title="") -> list[str]:
    """Bars whose heights are proportional to ``values`` inside box (x0, y0, x1, y1)."""
    x0, y0, x1, y1 = box
    out = [_title(title, (x0 + x1) / 2)] if title else []
    out += _axes(x0, y0, x1, y1)
    top = max([v for v in values if math.isfinite(v)] + [0.0])
    scale = (y1 - y0) / top if top > 0 else 0.0
    n = max(len(values), 1)
    slot = (x1 - x0) / n
    for i, (lab, v) in enumerate(zip(labels, values)):
        h = max(v, 0.0) * scale if math.isfinite(v) else 0.0
        x = x0 + i * slot + slot * 0.1
        out.append(f'<rect class="bar" x="{_f(x)}" y="{_f(y1 - h)}" width="{_f(slot * 0.8)}" '
                   f'height="{_f(h)}" fill="{PALETTE[0]}" data-value="{v!r}"/>')
        if n <= 24:
            out.append(f'<text x="{_f(x + slot * 0.4)}" y="{_f(y1 + 12)}" text-anchor="middle" '
                       f'font-family="sans-serif" font-size="9">{escape(str(lab))}</text>')
    return out


def bar_chart(labels, values, title: str = "") -> str:
    return _doc(bar_elements(labels, values, (MARGIN, 30, W - 10, H - MARGIN), title))


def histogram_chart(edges, densities, title: str = "") -> str:
    labels = [_f(e) for e in edges[:-1]]
    return bar_chart(labels, [float(d) for d in densities], title)


def scatter_elements(points, box, colors=None, title="", bounds=None) -> list[str]:
    x0, y0, x1, y1 = box
    out = [_title(title, (x0 + x1) / 2)] if title else []
    out += _axes(x0, y0, x1, y1)
    if not points:
        return out
    if bounds is None:
        xs = [p[0] for p in points]
        ys = [p[1] for p in points]
        bounds = (min(xs), min(ys), max(xs), max(ys))
    bx0, by0, bx1, by1 = bounds
    sx = (x1 - x0) / ((bx1 - bx0) or 1.0)
    sy = (y1 - y0) / ((by1 - by0) or 1.0)
    for i, (px, py) in enumerate(points):
        c = PALETTE[(colors[i] if colors else 0) % len(PALETTE)]
        out.append(f'<circle cx="{_f(x0 + (px - bx0) * sx)}" cy="{_f(y1 - (py - by0) * sy)}" '
                   f'r="2" fill="{c}" fill-opacity="0.6"/>')
    return out


def scatter_chart(points, colors=None, title: str = "") -> str:
    return _doc(scatter_elements(points, (MARGIN, 30, W - 10, H - MARGIN), colors, title))


def ternary_chart(coords, labels: Sequence[str], colors=None, title: str = "") -> str:
    """Points already embedded in the unit triangle with vertices (0,0), (1,0), (0.5, sqrt3/2)."""
    side = W - 2 * MARGIN
    h = side * math.sqrt(3) / 2
    ox, oy = MARGIN, 30 + h

    def xy(p):
        return ox + p[0] * side, oy - p[1] * side

    corners = [xy((0.0, 0.0)), xy((1.0, 0.0)), xy((0.5, math.sqrt(3) / 2))]
    body = [_title(title)] if title else []
    body.append('<polygon points="' + " ".join(f"{_f(a)},{_f(b)}" for a, b in corners)
                + '" fill="none" stroke="black"/>')
    for (cx, cy), lab, dy in zip(corners, labels, (14, 14, -6)):
        body.append(f'<text x="{_f(cx)}" y="{_f(cy + dy)}" text-anchor="middle" '
                    f'font-family="sans-serif" font-size="11">{escape(lab)}</text>')
    for i, p in enumerate(coords):
        cx, cy = xy(p)
        c = PALETTE[(colors[i] if colors else 0) % len(PALETTE)]
        body.append(f'<circle cx="{_f(cx)}" cy="{_f(cy)}" r="2" fill="{c}" fill-opacity="0.5"/>')
    return _doc(body, W, int(h + 60))


def panels(panel_specs, title: str = "") -> str:
    """Side-by-side bar panels; each spec is (panel title, labels, values)."""
    n = max(len(panel_specs), 1)
    pw = 300
    body = [_title(title, n * pw / 2)] if title else []
    for k, (ptitle, labels, values) in enumerate(panel_specs):
        box = (k * pw + MARGIN, 40, (k + 1) * pw - 10, H - MARGIN)
        body += bar_elements(labels, values, box)
        body.append(f'<text x="{_f((box[0] + box[2]) / 2)}" y="34" text-anchor="middle" '
                    f'font-family="sans-serif" font-size="11">{escape(ptitle)}</text>')
    return _doc(body, n * pw, H)


def dat_table(head: Sequence[str], rows) -> str:
    """Whitespace-separated columns with a commented header, readable by gnuplot."""
    lines = ["# " + " ".join(str(h).replace(" ", "_") for h in head)]
    for row in rows:
        cells = []
        for v in row:
            if isinstance(v, float):
                cells.append(repr(v))
            else:
                s = str(v)
                cells.append(f'"{s}"' if (" " in s or not s) else s)
        lines.append(" ".join(cells))
    return "\n".join(lines) + "\n"
