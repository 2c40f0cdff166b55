"""Minimal hand-written SVG line charts.

Output is deterministic text: coordinates are printed with a fixed number
of significant digits and series are drawn in the order given.
"""

from __future__ import annotations

from typing import Optional, Sequence, Tuple

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")
WIDTH, HEIGHT = 640, 420
MARGIN = (60, 20, 30, 50)  # left, right, top, bottom

Series = Tuple[Sequence[float], Sequence[float], str]


def _ticks(lo: float, hi: float, n: int = 5):
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10 ** np.floor(np.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=raw)
    start = np.ceil(lo / step) * step
    return [float(v) for v in np.arange(start, hi + 0.5 * step, step)]


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def line_chart(
    series: Sequence[Series],
    title: str = "",
    xlabel: str = "",
    ylabel: str = "",
    path: Optional[str] = None,
    logy: bool = False,
    markers: bool = False,
) -> str:
    """Render ``(x, y, label)`` series as an SVG document; write to ``path`` if given."""
    xs = [np.asarray(x, float) for x, _, _ in series]
    ys = [np.asarray(y, float) for _, y, _ in series]
    if logy:
        ys = [np.log10(np.where(y > 0, y, np.nan)) for y in ys]
    allx = np.concatenate(xs) if xs else np.zeros(1)
    ally = np.concatenate(ys) if ys else np.zeros(1)
    ok = np.isfinite(ally)
    x0, x1 = float(np.nanmin(allx)), float(np.nanmax(allx))
    y0, y1 = (float(np.min(ally[ok])), float(np.max(ally[ok]))) if ok.any() else (0.0, 1.0)
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad
    left, right, top, bottom = MARGIN
    pw, ph = WIDTH - left - right, HEIGHT - top - bottom
    X = lambda v: left + (v - x0) / (x1 - x0) * pw
    Y = lambda v: top + (1.0 - (v - y0) / (y1 - y0)) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for t in _ticks(x0, x1):
        px = X(t)
        out.append(f'<line x1="{px:.2f}" y1="{top + ph}" x2="{px:.2f}" y2="{top + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{px:.2f}" y="{top + ph + 18}" font-size="11" text-anchor="middle">{t:.4g}</text>')
    for t in _ticks(y0, y1):
        py = Y(t)
        lab = f"1e{t:.3g}" if logy else f"{t:.4g}"
        out.append(f'<line x1="{left - 5}" y1="{py:.2f}" x2="{left}" y2="{py:.2f}" stroke="black"/>')
        out.append(f'<text x="{left - 8}" y="{py + 4:.2f}" font-size="11" text-anchor="end">{lab}</text>')
    for j, (x, y) in enumerate(zip(xs, ys)):
        color = PALETTE[j % len(PALETTE)]
        good = np.isfinite(x) & np.isfinite(y)
        pts = " ".join(f"{X(a):.2f},{Y(b):.2f}" for a, b in zip(x[good], y[good]))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        if markers:
            for a, b in zip(x[good], y[good]):
                out.append(f'<circle cx="{X(a):.2f}" cy="{Y(b):.2f}" r="3" fill="{color}"/>')
        label = series[j][2]
        if label:
            ly = top + 16 + 16 * j
            out.append(f'<line x1="{left + pw - 120}" y1="{ly - 4}" x2="{left + pw - 100}" y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
            out.append(f'<text x="{left + pw - 95}" y="{ly}" font-size="11">{_esc(label)}</text>')
    if title:
        out.append(f'<text x="{WIDTH / 2:.1f}" y="18" font-size="13" text-anchor="middle">{_esc(title)}</text>')
    if xlabel:
        out.append(f'<text x="{left + pw / 2:.1f}" y="{HEIGHT - 10}" font-size="12" text-anchor="middle">{_esc(xlabel)}</text>')
    if ylabel:
        out.append(
            f'<text x="14" y="{top + ph / 2:.1f}" font-size="12" text-anchor="middle" transform="rotate(-90 14 {top + ph / 2:.1f})">{_esc(ylabel)}</text>'
        )
    out.append("</svg>")
    text = "\n".join(out) + "\n"
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return text
