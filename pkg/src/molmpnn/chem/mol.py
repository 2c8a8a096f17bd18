"""Core molecular graph types shared by the parsers, standardizer and featurizer."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterator

import numpy as np


class BondOrder(Enum):
    SINGLE = "single"
    DOUBLE = "double"
    TRIPLE = "triple"
    AROMATIC = "aromatic"

    @property
    def valence(self) -> float:
        return _VALENCE_ORDER[self]


_VALENCE_ORDER = {
    BondOrder.SINGLE: 1.0,
    BondOrder.DOUBLE: 2.0,
    BondOrder.TRIPLE: 3.0,
    BondOrder.AROMATIC: 1.5,
}


class Hybridization(Enum):
    SP = "sp"
    SP2 = "sp2"
    SP3 = "sp3"
    OTHER = "other"


@dataclass
class Atom:
    atomic_number: int
    formal_charge: int = 0
    aromatic: bool = False
    implicit_hydrogens: int = 0
    hybridization: Hybridization = Hybridization.SP3
    position: np.ndarray | None = None  # shape (3,) when 3D information exists
    stereo: str | None = None  # "@" / "@@" recorded from input, never interpreted

    def copy(self) -> "Atom":
        pos = None if self.position is None else np.array(self.position, dtype=float)
        return replace(self, position=pos)


@dataclass
class Bond:
    a: int
    b: int
    order: BondOrder = BondOrder.SINGLE
    conjugated: bool = False
    smallest_ring_size: int = 0  # 0 when the bond is acyclic
    stereo: str | None = None  # "/" or "\\" recorded from input

    def other(self, idx: int) -> int:
        return self.b if idx == self.a else self.a

    def copy(self) -> "Bond":
        return replace(self)


@dataclass
class Molecule:
    atoms: list[Atom] = field(default_factory=list)
    bonds: list[Bond] = field(default_factory=list)
    name: str = ""
    source_smiles: str = ""
    has_3d: bool = False

    # -- construction helpers -------------------------------------------------

    def add_atom(self, atom: Atom) -> int:
        self.atoms.append(atom)
        return len(self.atoms) - 1

    def add_bond(self, bond: Bond) -> int:
        self.bonds.append(bond)
        return len(self.bonds) - 1

    def copy(self) -> "Molecule":
        return Molecule(
            atoms=[a.copy() for a in self.atoms],
            bonds=[b.copy() for b in self.bonds],
            name=self.name,
            source_smiles=self.source_smiles,
            has_3d=self.has_3d,
        )

    # -- graph queries ---------------------------------------------------------

    def __len__(self) -> int:
        return len(self.atoms)

    def neighbors(self, idx: int) -> list[int]:
        out = []
        for bond in self.bonds:
            if bond.a == idx:
                out.append(bond.b)
            elif bond.b == idx:
                out.append(bond.a)
        return out

    def bonds_of(self, idx: int) -> list[Bond]:
        return [b for b in self.bonds if idx in (b.a, b.b)]

    def degree(self, idx: int) -> int:
        return len(self.neighbors(idx))

    def bond_between(self, a: int, b: int) -> Bond | None:
        for bond in self.bonds:
            if {bond.a, bond.b} == {a, b}:
                return bond
        return None

    def bond_order_sum(self, idx: int) -> float:
        return sum(b.order.valence for b in self.bonds_of(idx))

    def adjacency(self) -> list[list[int]]:
        adj: list[list[int]] = [[] for _ in self.atoms]
        for bond in self.bonds:
            adj[bond.a].append(bond.b)
            adj[bond.b].append(bond.a)
        return adj

    def coordinates(self) -> np.ndarray:
        """Stack atom positions into an (N, 3) array. Requires 3D data."""
        if not self.has_3d:
            raise ValueError("molecule has no 3D coordinates")
        return np.array([a.position for a in self.atoms], dtype=float)


# -- graph algorithms ------------------------------------------------------------


def connected_components(mol: Molecule) -> list[list[int]]:
    adj = mol.adjacency()
    seen = [False] * len(mol)
    components = []
    for start in range(len(mol)):
        if seen[start]:
            continue
        queue = deque([start])
        seen[start] = True
        comp = []
        while queue:
            i = queue.popleft()
            comp.append(i)
            for j in adj[i]:
                if not seen[j]:
                    seen[j] = True
                    queue.append(j)
        components.append(sorted(comp))
    return components


def smallest_ring_through_bond(mol: Molecule, bond: Bond) -> int:
    """Size of the smallest cycle containing ``bond`` (0 when acyclic).

    BFS shortest path between the endpoints with the bond itself removed; the
    cycle is that path plus the bond.
    """
    adj = mol.adjacency()
    start, goal = bond.a, bond.b
    dist = {start: 0}
    queue = deque([start])
    while queue:
        i = queue.popleft()
        for j in adj[i]:
            if i == start and j == goal:
                continue  # skip the bond under test, not parallel paths
            if j not in dist:
                dist[j] = dist[i] + 1
                if j == goal:
                    return dist[j] + 1
                queue.append(j)
    return 0


def assign_ring_sizes(mol: Molecule) -> None:
    for bond in mol.bonds:
        bond.smallest_ring_size = smallest_ring_through_bond(mol, bond)


def sssr(mol: Molecule) -> list[list[int]]:
    """Smallest set of smallest rings via iterative shortest-cycle extraction.

    For every bond the shortest cycle through it is computed; candidate cycles
    are then admitted smallest-first while linearly independent over GF(2) in
    edge space, until the cyclomatic number is reached.
    """
    n_edges = len(mol.bonds)
    if n_edges == 0:
        return []
    rank_target = n_edges - len(mol) + len(connected_components(mol))
    if rank_target <= 0:
        return []
    edge_index = {}
    for k, bond in enumerate(mol.bonds):
        edge_index[(bond.a, bond.b)] = k
        edge_index[(bond.b, bond.a)] = k

    candidates = []
    adj = mol.adjacency()
    for bond in mol.bonds:
        ring = _shortest_cycle_atoms(adj, bond)
        if ring:
            candidates.append(ring)
    # deduplicate on the atom set, deterministic ordering: size then atom tuple
    unique = {}
    for ring in candidates:
        unique[tuple(sorted(ring))] = ring
    ordered = sorted(unique.values(), key=lambda r: (len(r), tuple(sorted(r))))

    basis: list[int] = []  # GF(2) edge-incidence vectors packed as ints
    rings: list[list[int]] = []
    for ring in ordered:
        vec = 0
        for i in range(len(ring)):
            k = edge_index[(ring[i], ring[(i + 1) % len(ring)])]
            vec ^= 1 << k
        reduced = vec
        for b in basis:
            reduced = min(reduced, reduced ^ b)
        if reduced:
            basis.append(reduced)
            basis.sort(reverse=True)
            rings.append(ring)
            if len(rings) == rank_target:
                break
    return rings


def _shortest_cycle_atoms(adj: list[list[int]], bond: Bond) -> list[int] | None:
    start, goal = bond.a, bond.b
    parent: dict[int, int] = {start: -1}
    queue = deque([start])
    while queue:
        i = queue.popleft()
        for j in adj[i]:
            if i == start and j == goal:
                continue
            if j not in parent:
                parent[j] = i
                if j == goal:
                    path = [j]
                    while path[-1] != start:
                        path.append(parent[path[-1]])
                    return path
                queue.append(j)
    return None


def canonical_ranks(mol: Molecule) -> list[int]:
    """Morgan-style canonical ranks by iterative neighborhood refinement.

    Atoms that end up with equal ranks are graph-equivalent under the initial
    invariant (element, charge, degree, implicit H, aromaticity) refined by
    neighbor ranks and bond orders.
    """
    invariants = [
        (a.atomic_number, a.formal_charge, mol.degree(i), a.implicit_hydrogens, a.aromatic)
        for i, a in enumerate(mol.atoms)
    ]
    ranks = _rank(invariants)
    adj_bonds: list[list[tuple[float, int]]] = [[] for _ in mol.atoms]
    for bond in mol.bonds:
        adj_bonds[bond.a].append((bond.order.valence, bond.b))
        adj_bonds[bond.b].append((bond.order.valence, bond.a))
    for _ in range(len(mol.atoms)):
        refined = [
            (ranks[i], tuple(sorted((order, ranks[j]) for order, j in adj_bonds[i])))
            for i in range(len(mol.atoms))
        ]
        new_ranks = _rank(refined)
        if new_ranks == ranks:
            break
        ranks = new_ranks
    return ranks


def _rank(keys: list) -> list[int]:
    order = {key: r for r, key in enumerate(sorted(set(keys)))}
    return [order[key] for key in keys]


def iter_simple_paths(mol: Molecule, max_bonds: int) -> Iterator[list[int]]:
    """Yield every simple path with 1..max_bonds bonds, one direction each."""
    adj = mol.adjacency()

    def extend(path: list[int], visited: set[int]) -> Iterator[list[int]]:
        if len(path) > 1:
            # emit each undirected path once: smaller endpoint first
            if path[0] < path[-1] or (path[0] == path[-1]):
                yield list(path)
        if len(path) - 1 == max_bonds:
            return
        for nxt in adj[path[-1]]:
            if nxt in visited:
                continue
            path.append(nxt)
            visited.add(nxt)
            yield from extend(path, visited)
            visited.remove(nxt)
            path.pop()

    for start in range(len(mol)):
        yield from extend([start], {start})
