"""Deterministic 2D coordinate generation.

A fixed-iteration spring layout from a BFS-ordered circular start. No
randomness: the same graph always produces the same coordinates, which the
featurizer relies on for its 2D radius-of-gyration fallback and the SVG
depiction uses for drawing.
"""
from __future__ import annotations

from collections import deque

import numpy as np

from .. import elements
from .mol import Molecule


def layout_2d(mol: Molecule, iterations: int = 250) -> np.ndarray:
    """Return (N, 2) coordinates with bond lengths near 1.0."""
    n = len(mol.atoms)
    if n == 0:
        return np.zeros((0, 2))
    if n == 1:
        return np.zeros((1, 2))

    order = _bfs_order(mol)
    pos = np.zeros((n, 2))
    angles = 2.0 * np.pi * np.arange(n) / n
    radius = max(1.0, n / np.pi / 2.0)
    for rank, idx in enumerate(order):
        pos[idx] = radius * np.array([np.cos(angles[rank]), np.sin(angles[rank])])

    edges = np.array([(b.a, b.b) for b in mol.bonds], dtype=int) if mol.bonds else None
    step = 0.08
    for it in range(iterations):
        disp = np.zeros_like(pos)
        # pairwise repulsion
        delta = pos[:, None, :] - pos[None, :, :]
        dist2 = (delta ** 2).sum(-1) + np.eye(n)
        np.clip(dist2, 1e-6, None, out=dist2)
        rep = delta / dist2[..., None]
        disp += 0.35 * rep.sum(axis=1)
        # springs on bonds toward unit length
        if edges is not None:
            d = pos[edges[:, 0]] - pos[edges[:, 1]]
            length = np.sqrt((d ** 2).sum(-1, keepdims=True))
            np.clip(length, 1e-6, None, out=length)
            force = (length - 1.0) * d / length
            np.add.at(disp, edges[:, 0], -force)
            np.add.at(disp, edges[:, 1], force)
        limit = np.sqrt((disp ** 2).sum(-1, keepdims=True))
        np.clip(limit, 1e-9, None, out=limit)
        pos += step * disp / np.maximum(limit, 1.0)
        step *= 0.995
    pos -= pos.mean(axis=0)
    return pos


def fallback_coordinates(mol: Molecule) -> np.ndarray:
    """(N, 3) pseudo-3D coordinates: the 2D layout scaled so the mean bond
    length equals the mean covalent-radius bond length, z = 0."""
    pos = layout_2d(mol)
    n = len(mol.atoms)
    out = np.zeros((n, 3))
    if n == 0:
        return out
    if mol.bonds:
        target = np.mean([
            _covalent(mol.atoms[b.a].atomic_number)
            + _covalent(mol.atoms[b.b].atomic_number)
            for b in mol.bonds
        ])
        d = np.array([np.linalg.norm(pos[b.a] - pos[b.b]) for b in mol.bonds])
        mean_len = float(d.mean()) or 1.0
        pos = pos * (target / mean_len)
    out[:, :2] = pos
    return out


def _covalent(z: int) -> float:
    try:
        return elements.record(z).covalent_radius
    except elements.UnknownElementError:
        return 1.5


def _bfs_order(mol: Molecule) -> list[int]:
    adj = mol.adjacency()
    seen = [False] * len(mol)
    order = []
    for start in range(len(mol)):
        if seen[start]:
            continue
        seen[start] = True
        queue = deque([start])
        while queue:
            i = queue.popleft()
            order.append(i)
            for j in sorted(adj[i]):
                if not seen[j]:
                    seen[j] = True
                    queue.append(j)
    return order
