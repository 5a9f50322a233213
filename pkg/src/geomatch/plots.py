"""Minimal self-contained SVG line plots (no plotting dependency)."""

from __future__ import annotations

import os
import tempfile

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def svg_line_plot(series, path, title: str = "", xlabel: str = "", ylabel: str = "",
                  size=(640, 420), x_range=None, y_range=None) -> None:
    """Write a polyline plot.

    Args:
        series: iterable of (label, xs, ys).
        path: output .svg path (written atomically).
        x_range / y_range: optional (lo, hi) overrides.
    """
    series = [(str(lab), list(map(float, xs)), list(map(float, ys)))
              for lab, xs, ys in series]
    w, h = size
    ml, mr, mt, mb = 60, 150, 40, 50
    pw, ph = w - ml - mr, h - mt - mb

    all_x = [x for _, xs, _ in series for x in xs] or [0.0, 1.0]
    all_y = [y for _, _, ys in series for y in ys] or [0.0, 1.0]
    x0, x1 = x_range if x_range else (min(all_x), max(all_x))
    y0, y1 = y_range if y_range else (min(all_y), max(all_y))
    if x1 <= x0:
        x1 = x0 + 1.0
    if y1 <= y0:
        y1 = y0 + 1.0

    def sx(x):
        return ml + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return mt + ph - (y - y0) / (y1 - y0) * ph

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" '
        f'viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">',
        f'<rect width="{w}" height="{h}" fill="white"/>',
        f'<text x="{w / 2:.0f}" y="20" text-anchor="middle" font-size="14">{_esc(title)}</text>',
        f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="#333"/>',
    ]
    for k in range(5):
        fx = x0 + (x1 - x0) * k / 4
        fy = y0 + (y1 - y0) * k / 4
        parts.append(f'<line x1="{sx(fx):.1f}" y1="{mt + ph}" x2="{sx(fx):.1f}" '
                     f'y2="{mt + ph + 4}" stroke="#333"/>')
        parts.append(f'<text x="{sx(fx):.1f}" y="{mt + ph + 18}" '
                     f'text-anchor="middle">{_fmt(fx)}</text>')
        parts.append(f'<line x1="{ml - 4}" y1="{sy(fy):.1f}" x2="{ml}" '
                     f'y2="{sy(fy):.1f}" stroke="#333"/>')
        parts.append(f'<text x="{ml - 8}" y="{sy(fy) + 4:.1f}" '
                     f'text-anchor="end">{_fmt(fy)}</text>')
    parts.append(f'<text x="{ml + pw / 2:.0f}" y="{h - 10}" '
                 f'text-anchor="middle">{_esc(xlabel)}</text>')
    parts.append(f'<text x="16" y="{mt + ph / 2:.0f}" text-anchor="middle" '
                 f'transform="rotate(-90 16 {mt + ph / 2:.0f})">{_esc(ylabel)}</text>')

    for idx, (label, xs, ys) in enumerate(series):
        color = _PALETTE[idx % len(_PALETTE)]
        pts = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs, ys))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        ly = mt + 16 + 18 * idx
        parts.append(f'<line x1="{ml + pw + 8}" y1="{ly - 4}" x2="{ml + pw + 28}" '
                     f'y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{ml + pw + 34}" y="{ly}">{_esc(label)}</text>')
    parts.append("</svg>")

    path = os.fspath(path)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path) or ".", suffix=".tmp")
    with os.fdopen(fd, "w", encoding="utf-8") as f:
        f.write("\n".join(parts) + "\n")
    os.replace(tmp, path)


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def _fmt(v: float) -> str:
    if v == int(v) and abs(v) < 1e6:
        return str(int(v))
    return f"{v:.3g}"
