"""Fingerprints, threshold clustering, and Shannon-entropy diversity stats."""
from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass

import numpy as np

from . import elements
from .chem.mol import Molecule, iter_simple_paths

log = logging.getLogger(__name__)

N_BITS = 2048
MAX_PATH_BONDS = 7
BITS_PER_PATH = 2


def _path_key(mol: Molecule, path: list[int]) -> str:
    """Direction-independent string key for a simple atom path."""
    symbols = [elements.symbol(mol.atoms[i].atomic_number) for i in path]
    orders = []
    bond_of = {}
    for b in mol.bonds:
        bond_of[(b.a, b.b)] = b.order.value
        bond_of[(b.b, b.a)] = b.order.value
    for a, b in zip(path, path[1:]):
        orders.append(str(bond_of[(a, b)]))
    fwd = "|".join(s + ":" + o for s, o in zip(symbols, orders + [""]))
    rev = "|".join(s + ":" + o for s, o in zip(reversed(symbols),
                                               list(reversed(orders)) + [""]))
    return min(fwd, rev)


def fingerprint(mol: Molecule) -> np.ndarray:
    """2048-bit hashed linear-path fingerprint (paths of 1–7 bonds, 2 bits
    per path)."""
    bits = np.zeros(N_BITS, dtype=bool)
    n_paths = 0
    for path in iter_simple_paths(mol, MAX_PATH_BONDS):
        n_paths += 1
        digest = hashlib.sha256(_path_key(mol, path).encode()).digest()
        h = int.from_bytes(digest[:8], "big")
        bits[h % N_BITS] = True
        bits[(h >> 11) % N_BITS] = True
    if n_paths == 0:
        log.info("molecule %s has no bond paths; fingerprint is empty",
                 mol.name or "<unnamed>")
    return bits


def tanimoto(a: np.ndarray, b: np.ndarray) -> float:
    if a.shape != b.shape:
        raise ValueError(f"fingerprint widths differ: {a.shape} vs {b.shape}")
    union = int(np.logical_or(a, b).sum())
    if union == 0:
        return 1.0
    return int(np.logical_and(a, b).sum()) / union


def jaccard_distance(a: np.ndarray, b: np.ndarray) -> float:
    return 1.0 - tanimoto(a, b)


@dataclass
class ClusterReport:
    assignments: np.ndarray       # cluster id per molecule
    leaders: list[int]            # molecule index leading each cluster
    sizes: list[int]
    singletons: int
    entropy_bits: float


def shannon_entropy(sizes: list[int]) -> float:
    if not sizes:
        raise ValueError("entropy of an empty cluster report")
    p = np.asarray(sizes, dtype=np.float64)
    if np.any(p <= 0):
        raise ValueError("cluster sizes must be positive")
    p = p / p.sum()
    return float(-(p * np.log2(p)).sum())


def cluster(fingerprints: list[np.ndarray],
            threshold: float = 0.70) -> ClusterReport:
    """Leader clustering: visit molecules in descending neighbor-count order
    (ties by index); each joins the first leader at tanimoto ≥ threshold or
    founds a new cluster."""
    n = len(fingerprints)
    if n == 0:
        raise ValueError("no fingerprints to cluster")
    sims = np.eye(n)
    for i in range(n):
        for j in range(i + 1, n):
            sims[i, j] = sims[j, i] = tanimoto(fingerprints[i],
                                               fingerprints[j])
    neighbor_counts = (sims >= threshold).sum(axis=1) - 1
    order = np.lexsort((np.arange(n), -neighbor_counts))

    assignments = np.full(n, -1, dtype=np.int64)
    leaders: list[int] = []
    for i in order:
        joined = False
        for cid, leader in enumerate(leaders):
            if sims[i, leader] >= threshold:
                assignments[i] = cid
                joined = True
                break
        if not joined:
            assignments[i] = len(leaders)
            leaders.append(int(i))
    sizes = np.bincount(assignments, minlength=len(leaders)).tolist()
    return ClusterReport(
        assignments=assignments,
        leaders=leaders,
        sizes=sizes,
        singletons=int(sum(1 for s in sizes if s == 1)),
        entropy_bits=shannon_entropy(sizes),
    )
