"""Static SVG beeswarm of attribution values: one band per feature, x = phi,
colour = feature value (blue low, red high). Jitter is a hash of the row id."""
from __future__ import annotations

import hashlib
from xml.sax.saxutils import escape

import numpy as np

from .attribution import AttributionResult

WIDTH, BAND, MARGIN_L, MARGIN_R, TOP = 720, 60, 110, 30, 40


def _jitter(row: int, feature: str) -> float:
    h = hashlib.blake2b(f"{row}:{feature}".encode(), digest_size=4).digest()
    return int.from_bytes(h, "little") / 2**32 - 0.5


def _colour(t: float) -> str:
    r = int(round(40 + 215 * t))
    b = int(round(255 - 215 * t))
    return f"#{r:02x}30{b:02x}"


def beeswarm_svg(result: AttributionResult, title: str | None = None) -> str:
    feats = result.features
    height = TOP + BAND * len(feats) + 40
    allphi = np.concatenate([result.phi[f] for f in feats]) if result.rows.n_rows else np.zeros(1)
    lo, hi = float(allphi.min()), float(allphi.max())
    if hi - lo < 1e-12:
        lo, hi = lo - 1.0, hi + 1.0
    span = WIDTH - MARGIN_L - MARGIN_R

    def xpos(v):
        return MARGIN_L + (v - lo) / (hi - lo) * span

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" '
           f'viewBox="0 0 {WIDTH} {height}">',
           f'<text x="{WIDTH / 2:.1f}" y="20" text-anchor="middle" font-size="14">'
           f'{escape(title or result.method)}</text>']
    x0 = xpos(0.0) if lo <= 0 <= hi else None
    if x0 is not None:
        out.append(f'<line x1="{x0:.2f}" y1="{TOP}" x2="{x0:.2f}" y2="{TOP + BAND * len(feats)}" '
                   f'stroke="#999" stroke-width="1"/>')
    for k, f in enumerate(feats):
        cy = TOP + BAND * k + BAND / 2
        out.append(f'<text x="{MARGIN_L - 10}" y="{cy + 4:.1f}" text-anchor="end" '
                   f'font-size="12">{escape(f)}</text>')
        vals = result.rows[f] if result.rows.n_rows else np.zeros(0)
        vlo, vhi = (float(vals.min()), float(vals.max())) if len(vals) else (0.0, 1.0)
        for i in range(result.rows.n_rows):
            t = 0.5 if vhi == vlo else (float(vals[i]) - vlo) / (vhi - vlo)
            y = cy + _jitter(i, f) * BAND * 0.8
            out.append(f'<circle cx="{xpos(float(result.phi[f][i])):.2f}" cy="{y:.2f}" r="1.6" '
                       f'fill="{_colour(t)}" fill-opacity="0.6"/>')
    axis_y = TOP + BAND * len(feats) + 20
    out.append(f'<text x="{MARGIN_L}" y="{axis_y}" font-size="11">{lo:.3g}</text>')
    out.append(f'<text x="{WIDTH - MARGIN_R}" y="{axis_y}" font-size="11" '
               f'text-anchor="end">{hi:.3g}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
