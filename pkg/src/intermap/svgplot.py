"""Minimal self-contained SVG line plots (no plotting dependency)."""

from __future__ import annotations

import math

__all__ = ["line_plot_svg"]

_W, _H = 640, 420
_ML, _MR, _MT, _MB = 70, 20, 30, 50


def _ticks(lo: float, hi: float, log: bool):
    if log:
        lo_e = math.floor(math.log10(lo))
        hi_e = math.ceil(math.log10(hi))
        step = max(1, (hi_e - lo_e) // 6)
        return [10.0 ** e for e in range(lo_e, hi_e + 1, step)]
    span = hi - lo or 1.0
    raw = span / 5.0
    mag = 10.0 ** math.floor(math.log10(raw))
    step = min(s for s in (1, 2, 5, 10) if s * mag >= raw) * mag
    first = math.ceil(lo / step) * step
    out = []
    t = first
    while t <= hi + 1e-12 * span:
        out.append(t)
        t += step
    return out


def line_plot_svg(x, y, title: str = "", xlabel: str = "", ylabel: str = "",
                  xlog: bool = False, ylog: bool = False) -> str:
    """Render one series as a standalone SVG document string."""
    pairs = [(float(a), float(b)) for a, b in zip(x, y)
             if math.isfinite(a) and math.isfinite(b)
             and (not xlog or a > 0) and (not ylog or b > 0)]
    if not pairs:
        pairs = [(0.0, 0.0), (1.0, 0.0)]
    xs = [a for a, _ in pairs]
    ys = [b for _, b in pairs]
    xlo, xhi = min(xs), max(xs)
    ylo, yhi = min(ys), max(ys)
    if xlo == xhi:
        xlo, xhi = xlo - 0.5, xhi + 0.5
    if ylo == yhi:
        ylo, yhi = ylo - 0.5, yhi + 0.5

    def sx(v):
        t = ((math.log10(v) - math.log10(xlo)) / (math.log10(xhi) - math.log10(xlo))
             if xlog else (v - xlo) / (xhi - xlo))
        return _ML + t * (_W - _ML - _MR)

    def sy(v):
        t = ((math.log10(v) - math.log10(ylo)) / (math.log10(yhi) - math.log10(ylo))
             if ylog else (v - ylo) / (yhi - ylo))
        return _H - _MB - t * (_H - _MT - _MB)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W / 2:.1f}" y="18" text-anchor="middle" '
        f'font-size="14">{title}</text>',
    ]
    for t in _ticks(xlo, xhi, xlog):
        if t < xlo or t > xhi:
            continue
        px = sx(t)
        parts.append(f'<line x1="{px:.1f}" y1="{_H - _MB}" x2="{px:.1f}" '
                     f'y2="{_H - _MB + 5}" stroke="black"/>')
        parts.append(f'<text x="{px:.1f}" y="{_H - _MB + 18}" text-anchor="middle" '
                     f'font-size="10">{t:.4g}</text>')
    for t in _ticks(ylo, yhi, ylog):
        if t < ylo or t > yhi:
            continue
        py = sy(t)
        parts.append(f'<line x1="{_ML - 5}" y1="{py:.1f}" x2="{_ML}" '
                     f'y2="{py:.1f}" stroke="black"/>')
        parts.append(f'<text x="{_ML - 8}" y="{py + 3:.1f}" text-anchor="end" '
                     f'font-size="10">{t:.4g}</text>')
    parts.append(f'<rect x="{_ML}" y="{_MT}" width="{_W - _ML - _MR}" '
                 f'height="{_H - _MT - _MB}" fill="none" stroke="black"/>')
    pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in pairs)
    parts.append(f'<polyline points="{pts}" fill="none" stroke="#1f6fb2" '
                 f'stroke-width="1.5"/>')
    parts.append(f'<text x="{(_ML + _W - _MR) / 2:.1f}" y="{_H - 12}" '
                 f'text-anchor="middle" font-size="12">{xlabel}</text>')
    parts.append(f'<text x="16" y="{(_MT + _H - _MB) / 2:.1f}" text-anchor="middle" '
                 f'font-size="12" transform="rotate(-90 16 '
                 f'{(_MT + _H - _MB) / 2:.1f})">{ylabel}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
