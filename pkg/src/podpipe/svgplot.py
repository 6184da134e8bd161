"""Minimal SVG scatter plot: points, fitted line, removed outliers, r and N.

Output is plain text with fixed number formatting so identical inputs give
identical bytes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence
from xml.sax.saxutils import escape

WIDTH = 480
HEIGHT = 360
PAD_L, PAD_R, PAD_T, PAD_B = 60, 20, 40, 50
MARGIN_FRAC = 0.05
N_TICKS = 5


@dataclass(frozen=True)
class ScatterData:
    title: str
    x: Sequence[float]
    y: Sequence[float]
    slope: float
    intercept: float
    r: float
    n: int
    removed_x: Sequence[float] = ()
    removed_y: Sequence[float] = ()
    label_x: str = "pod count"
    label_y: str = "yield (g)"


def _span(values: Sequence[float]) -> tuple[float, float]:
    lo, hi = min(values), max(values)
    if hi == lo:
        lo, hi = lo - 0.5, hi + 0.5
    pad = MARGIN_FRAC * (hi - lo)
    return lo - pad, hi + pad


def _f(v: float) -> str:
    return f"{v:.2f}"


def render_scatter(d: ScatterData) -> str:
    xs = list(d.x) + list(d.removed_x)
    ys = list(d.y) + list(d.removed_y)
    if not xs:
        raise ValueError("nothing to plot")
    x0, x1 = _span(xs)
    y0, y1 = _span(ys)
    pw, ph = WIDTH - PAD_L - PAD_R, HEIGHT - PAD_T - PAD_B

    def px(v):
        return PAD_L + (v - x0) / (x1 - x0) * pw

    def py(v):
        return PAD_T + ph - (v - y0) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.0f}" y="20" text-anchor="middle" font-size="14">{escape(d.title)}</text>',
        f'<rect x="{PAD_L}" y="{PAD_T}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for i in range(N_TICKS + 1):
        vx = x0 + (x1 - x0) * i / N_TICKS
        vy = y0 + (y1 - y0) * i / N_TICKS
        out.append(f'<text x="{_f(px(vx))}" y="{PAD_T + ph + 15}" text-anchor="middle" '
                   f'font-size="10">{vx:.4g}</text>')
        out.append(f'<text x="{PAD_L - 5}" y="{_f(py(vy) + 3)}" text-anchor="end" '
                   f'font-size="10">{vy:.4g}</text>')
    out.append(f'<text x="{PAD_L + pw / 2:.0f}" y="{HEIGHT - 10}" text-anchor="middle" '
               f'font-size="12">{escape(d.label_x)}</text>')
    out.append(f'<text x="15" y="{PAD_T + ph / 2:.0f}" text-anchor="middle" font-size="12" '
               f'transform="rotate(-90 15 {PAD_T + ph / 2:.0f})">{escape(d.label_y)}</text>')

    out.append('<g fill="steelblue" fill-opacity="0.6">')
    out.extend(f'<circle cx="{_f(px(a))}" cy="{_f(py(b))}" r="2"/>' for a, b in zip(d.x, d.y))
    out.append("</g>")
    if len(d.removed_x):
        # removed outliers: red crosses
        out.append('<g stroke="red" stroke-width="1">')
        for a, b in zip(d.removed_x, d.removed_y):
            cx, cy = px(a), py(b)
            out.append(f'<path d="M{_f(cx - 3)} {_f(cy - 3)}L{_f(cx + 3)} {_f(cy + 3)}'
                       f'M{_f(cx - 3)} {_f(cy + 3)}L{_f(cx + 3)} {_f(cy - 3)}"/>')
        out.append("</g>")

    out.append(f'<clipPath id="plotarea"><rect x="{PAD_L}" y="{PAD_T}" width="{pw}" height="{ph}"/></clipPath>')
    out.append(
        f'<line x1="{_f(px(x0))}" y1="{_f(py(d.slope * x0 + d.intercept))}" '
        f'x2="{_f(px(x1))}" y2="{_f(py(d.slope * x1 + d.intercept))}" '
        'stroke="black" stroke-width="1.5" clip-path="url(#plotarea)"/>'
    )
    out.append(f'<text x="{PAD_L + 8}" y="{PAD_T + 16}" font-size="12">r = {d.r:.3f}, N = {d.n}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_scatter(d: ScatterData, path) -> None:
    with open(path, "w") as fh:
        fh.write(render_scatter(d))
