"""Hand-rolled SVG depiction of per-atom relevance scores."""
from __future__ import annotations

import html

import numpy as np

from . import elements
from .chem.layout import layout_2d
from .chem.mol import BondOrder, Molecule

_CANVAS = 420.0
_MARGIN = 46.0
_ATOM_RADIUS = 13.0


def _colormap(score: float) -> str:
    """Fixed blue→white→red map over [0, 1]."""
    s = min(max(score, 0.0), 1.0)
    if s < 0.5:
        t = s / 0.5
        r, g, b = (int(59 + t * (255 - 59)), int(113 + t * (255 - 113)), 255)
    else:
        t = (s - 0.5) / 0.5
        r, g, b = (255, int(255 - t * (255 - 75)), int(255 - t * (255 - 63)))
    return f"#{r:02x}{g:02x}{b:02x}"


def relevance_svg(mol: Molecule, scores: np.ndarray, title: str = "") -> str:
    """Render the molecule with atoms colored by score; the five highest
    scores get numeric labels."""
    n = len(mol.atoms)
    if len(scores) != n:
        raise ValueError(f"{len(scores)} scores for {n} atoms")
    pos = layout_2d(mol)
    lo = pos.min(axis=0)
    hi = pos.max(axis=0)
    span = max(float((hi - lo).max()), 1e-9)
    scale = (_CANVAS - 2 * _MARGIN) / span
    xy = (pos - lo) * scale + _MARGIN
    xy[:, 1] = _CANVAS - xy[:, 1]  # SVG y grows downward

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_CANVAS:.0f}" '
        f'height="{_CANVAS:.0f}" viewBox="0 0 {_CANVAS:.0f} {_CANVAS:.0f}">',
        f'<rect width="{_CANVAS:.0f}" height="{_CANVAS:.0f}" fill="white"/>',
    ]
    if title:
        parts.append(
            f'<text x="{_CANVAS / 2:.1f}" y="20" text-anchor="middle" '
            f'font-family="sans-serif" font-size="13">{html.escape(title)}</text>')

    for bond in mol.bonds:
        x1, y1 = xy[bond.a]
        x2, y2 = xy[bond.b]
        if bond.order in (BondOrder.DOUBLE, BondOrder.TRIPLE, BondOrder.AROMATIC):
            d = np.array([y2 - y1, x1 - x2])
            norm = np.linalg.norm(d)
            off = d / norm * 2.2 if norm > 0 else np.zeros(2)
            dash = ' stroke-dasharray="4,3"' if bond.order is BondOrder.AROMATIC else ""
            parts.append(
                f'<line x1="{x1 + off[0]:.1f}" y1="{y1 + off[1]:.1f}" '
                f'x2="{x2 + off[0]:.1f}" y2="{y2 + off[1]:.1f}" '
                f'stroke="#444" stroke-width="1.6"{dash}/>')
            parts.append(
                f'<line x1="{x1 - off[0]:.1f}" y1="{y1 - off[1]:.1f}" '
                f'x2="{x2 - off[0]:.1f}" y2="{y2 - off[1]:.1f}" '
                f'stroke="#444" stroke-width="1.6"{dash}/>')
            if bond.order is BondOrder.TRIPLE:
                parts.append(f'<line x1="{x1:.1f}" y1="{y1:.1f}" x2="{x2:.1f}" '
                             f'y2="{y2:.1f}" stroke="#444" stroke-width="1.6"/>')
        else:
            parts.append(f'<line x1="{x1:.1f}" y1="{y1:.1f}" x2="{x2:.1f}" '
                         f'y2="{y2:.1f}" stroke="#444" stroke-width="1.6"/>')

    top5 = set(np.argsort(-np.asarray(scores), kind="stable")[:5].tolist())
    for i in range(n):
        x, y = xy[i]
        parts.append(
            f'<circle cx="{x:.1f}" cy="{y:.1f}" r="{_ATOM_RADIUS:.1f}" '
            f'fill="{_colormap(float(scores[i]))}" stroke="#222" '
            f'stroke-width="0.8"/>')
        sym = elements.symbol(mol.atoms[i].atomic_number)
        parts.append(
            f'<text x="{x:.1f}" y="{y + 4:.1f}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="11">{html.escape(sym)}</text>')
        if i in top5:
            parts.append(
                f'<text x="{x:.1f}" y="{y - _ATOM_RADIUS - 3:.1f}" '
                f'text-anchor="middle" font-family="sans-serif" '
                f'font-size="10" fill="#b10026">{scores[i]:.2f}</text>')
    parts.append("</svg>")
    return "\n".join(parts)
