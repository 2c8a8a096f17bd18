"""Molecular graphs to numeric feature arrays.

Atom, bond and global features follow fixed scaling recipes so every column
lands in a comparable range; 3D-derived quantities (bond length, buried
volume, radius of gyration) fall back to graph-derived surrogates when no
coordinates are present. Feature selection communicates through
:class:`FeatureMask`; the manifest documents the active layout and hashes it
so checkpoints and caches can detect mismatches.
"""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from . import descriptors, elements
from .chem.layout import fallback_coordinates
from .chem.mol import BondOrder, Hybridization, Molecule

log = logging.getLogger(__name__)

ATOM_FEATURES = ("atomic_number", "hybridization", "electronegativity",
                 "dipole_polarizability", "vdw_radius", "buried_volume")
BOND_FEATURES = ("bond_length", "conjugated", "bond_type", "ring_size")
GLOBAL_FEATURES = ("chiral_centers", "hydrogen_balance", "rotatable_bonds",
                   "solubility", "sp3_fraction", "radius_of_gyration")

FORMAT_VERSION = 1

_HYBRIDIZATION_VALUE = {
    Hybridization.SP: 0.0,
    Hybridization.SP2: 0.5,
    Hybridization.SP3: 1.0,
    Hybridization.OTHER: 1.0,
}

_BOND_TYPE_VALUE = {
    BondOrder.SINGLE: 1.0,
    BondOrder.AROMATIC: 1.5,
    BondOrder.DOUBLE: 2.0,
    BondOrder.TRIPLE: 2.0,  # mapped onto the double-bond slot, warned below
}


@dataclass(frozen=True)
class FeatureMask:
    """Boolean activity per feature, in manifest order."""

    atom: tuple[bool, ...] = tuple(True for _ in ATOM_FEATURES)
    bond: tuple[bool, ...] = tuple(True for _ in BOND_FEATURES)
    global_: tuple[bool, ...] = tuple(True for _ in GLOBAL_FEATURES)

    @classmethod
    def full(cls) -> "FeatureMask":
        return cls()

    @classmethod
    def from_active(cls, names: list[str] | set[str]) -> "FeatureMask":
        names = set(names)
        unknown = names - set(ATOM_FEATURES) - set(BOND_FEATURES) - set(GLOBAL_FEATURES)
        if unknown:
            raise ValueError(f"unknown feature names: {sorted(unknown)}")
        return cls(
            atom=tuple(n in names for n in ATOM_FEATURES),
            bond=tuple(n in names for n in BOND_FEATURES),
            global_=tuple(n in names for n in GLOBAL_FEATURES),
        )

    def without(self, *names: str) -> "FeatureMask":
        return FeatureMask.from_active(set(self.active_names()) - set(names))

    def active_names(self) -> list[str]:
        out = [n for n, on in zip(ATOM_FEATURES, self.atom) if on]
        out += [n for n, on in zip(BOND_FEATURES, self.bond) if on]
        out += [n for n, on in zip(GLOBAL_FEATURES, self.global_) if on]
        return out

    @property
    def n_atom(self) -> int:
        return sum(self.atom)

    @property
    def n_bond(self) -> int:
        return sum(self.bond)

    @property
    def n_global(self) -> int:
        return sum(self.global_)

    def manifest(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "atom": [n for n, on in zip(ATOM_FEATURES, self.atom) if on],
            "bond": [n for n, on in zip(BOND_FEATURES, self.bond) if on],
            "global": [n for n, on in zip(GLOBAL_FEATURES, self.global_) if on],
        }

    def manifest_json(self) -> str:
        return json.dumps(self.manifest(), sort_keys=True)

    def manifest_hash(self) -> str:
        return hashlib.sha256(self.manifest_json().encode()).hexdigest()


@dataclass
class FeaturizedGraph:
    x: np.ndarray            # (n_atoms, n_atom_features) float64
    edge_index: np.ndarray   # (2, n_edges) int64, one entry per bond
    edge_attr: np.ndarray    # (n_edges, n_bond_features) float64
    u: np.ndarray            # (n_global_features,) float64
    y: float | None = None
    name: str = ""
    smiles: str = ""
    mask: FeatureMask = field(default_factory=FeatureMask.full)

    @property
    def n_atoms(self) -> int:
        return self.x.shape[0]

    @property
    def n_edges(self) -> int:
        return self.edge_index.shape[1]


def featurize(mol: Molecule, mask: FeatureMask | None = None,
              y: float | None = None) -> FeaturizedGraph:
    """Build the numeric graph for one molecule.

    Edges are canonicalized to source < destination and sorted; masked-out
    feature columns are removed from the arrays entirely.
    """
    mask = mask or FeatureMask.full()
    coords = mol.coordinates() if mol.has_3d else None

    atom_rows = [_atom_features(mol, i, coords) for i in range(len(mol.atoms))]
    x = np.array(atom_rows, dtype=np.float64).reshape(len(mol.atoms), len(ATOM_FEATURES))

    pairs = sorted((min(b.a, b.b), max(b.a, b.b)) for b in mol.bonds)
    edge_index = np.array(pairs, dtype=np.int64).T.reshape(2, len(pairs))
    bond_by_pair = {(min(b.a, b.b), max(b.a, b.b)): b for b in mol.bonds}
    bond_rows = [_bond_features(mol, bond_by_pair[p], coords) for p in pairs]
    edge_attr = np.array(bond_rows, dtype=np.float64).reshape(len(pairs), len(BOND_FEATURES))

    u = _global_features(mol, coords)
    _check_ranges(mol, x, edge_attr, u)

    x = x[:, np.array(mask.atom, dtype=bool)]
    edge_attr = edge_attr[:, np.array(mask.bond, dtype=bool)]
    u = u[np.array(mask.global_, dtype=bool)]
    return FeaturizedGraph(x=x, edge_index=edge_index, edge_attr=edge_attr, u=u,
                           y=y, name=mol.name, smiles=mol.source_smiles, mask=mask)


def _check_ranges(mol: Molecule, x, edge_attr, u) -> None:
    """Log (never fail on) features leaving the documented [-2, 2] band.

    The unscaled radius of gyration does this routinely past ~8 heavy atoms.
    """
    for arr, names in ((x, ATOM_FEATURES), (edge_attr, BOND_FEATURES),
                       (u.reshape(1, -1), GLOBAL_FEATURES)):
        bad = np.argwhere((arr < -2.0) | (arr > 2.0))
        for col in sorted({int(c) for _, c in bad}):
            log.warning("%s: feature %s outside [-2, 2] (%.3f)",
                        mol.name or mol.source_smiles, names[col],
                        float(arr[:, col][np.abs(arr[:, col]).argmax()]))


def _atom_features(mol: Molecule, i: int, coords) -> list[float]:
    atom = mol.atoms[i]
    rec = elements.record(atom.atomic_number)
    if coords is not None:
        vbur = buried_volume(mol, i, coords)
    else:
        vbur = mol.degree(i) / 4.0
    return [
        (atom.atomic_number - 1) / 78.0,
        _HYBRIDIZATION_VALUE[atom.hybridization],
        (rec.electronegativity - 0.9) / 3.1,
        (rec.dipole_polarizability - 4.5) / 31.5,
        (rec.vdw_radius - 120.0) / 46.0,
        vbur,
    ]


def _bond_features(mol: Molecule, bond, coords) -> list[float]:
    if coords is not None:
        length = float(np.linalg.norm(coords[bond.a] - coords[bond.b]))
    else:
        length = (elements.record(mol.atoms[bond.a].atomic_number).covalent_radius
                  + elements.record(mol.atoms[bond.b].atomic_number).covalent_radius)
    if bond.order is BondOrder.TRIPLE:
        log.warning("triple bond %d-%d in %s mapped to the double-bond slot",
                    bond.a, bond.b, mol.name or mol.source_smiles or "<molecule>")
    ring = min(bond.smallest_ring_size, 8) / 8.0 if bond.smallest_ring_size else 0.0
    return [
        length - 1.0,
        1.0 if bond.conjugated else 0.0,
        _BOND_TYPE_VALUE[bond.order] / 2.0,
        ring,
    ]


def _safe_div(num: float, den: float) -> float:
    # range guard: a zero denominator is replaced by 1e-10 (the denominators
    # in the hydrogen-balance recipe are constants, so this never fires; kept
    # because the recipe specifies it)
    return num / (den if den != 0 else 1e-10)


def _global_features(mol: Molecule, coords) -> np.ndarray:
    hbd = descriptors.hydrogen_bond_donors(mol)
    hba = descriptors.hydrogen_bond_acceptors(mol)
    balance = _safe_div(_safe_div(hbd, 5.0) - _safe_div(hba, 10.0), 10.0)
    solubility = (descriptors.tpsa(mol) + descriptors.logp(mol)) / 145.0
    if coords is None:
        coords = fallback_coordinates(mol)
    rg = radius_of_gyration(mol, coords)
    return np.array([
        descriptors.chiral_centers(mol) / 6.0,
        balance,
        descriptors.rotatable_bonds(mol) / 10.0,
        solubility,
        descriptors.sp3_fraction(mol),
        rg,
    ], dtype=np.float64)


def radius_of_gyration(mol: Molecule, coords: np.ndarray) -> float:
    """Mass-weighted RMS distance from the centre of mass."""
    masses = np.array([elements.record(a.atomic_number).atomic_mass
                       for a in mol.atoms])
    com = (masses[:, None] * coords).sum(axis=0) / masses.sum()
    sq = ((coords - com) ** 2).sum(axis=1)
    return float(np.sqrt((masses * sq).sum() / masses.sum()))


def buried_volume(mol: Molecule, i: int, coords: np.ndarray,
                  radius: float = 3.5, spacing: float = 0.5) -> float:
    """Fraction of a probe sphere around atom ``i`` occupied by any atom's
    van der Waals sphere, estimated on a cubic grid.

    The grid spans the axis-aligned cube enclosing the probe sphere with node
    spacing ``spacing``; nodes outside the probe are discarded.
    """
    center = coords[i]
    offsets = np.arange(-radius, radius + spacing / 2, spacing)
    gx, gy, gz = np.meshgrid(offsets, offsets, offsets, indexing="ij")
    grid = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1) + center
    inside = ((grid - center) ** 2).sum(axis=1) <= radius ** 2
    grid = grid[inside]
    if grid.size == 0:
        return 0.0
    vdw = np.array([elements.record(a.atomic_number).vdw_radius / 100.0
                    for a in mol.atoms])  # pm -> Angstrom
    reach = np.linalg.norm(coords - center, axis=1) - vdw
    near = reach <= radius  # atoms whose spheres can intersect the probe
    occupied = np.zeros(len(grid), dtype=bool)
    for j in np.flatnonzero(near):
        d2 = ((grid - coords[j]) ** 2).sum(axis=1)
        occupied |= d2 <= vdw[j] ** 2
    return float(occupied.sum() / len(grid))


def narrow_graph(fg: FeaturizedGraph, mask: FeatureMask) -> FeaturizedGraph:
    """Column-slice a graph down to a narrower mask without re-featurizing.

    Valid because masking commutes with featurization; ``mask`` must be a
    subset of the graph's own mask.
    """
    own = set(fg.mask.active_names())
    want = set(mask.active_names())
    if not want <= own:
        raise ValueError(
            f"mask requests features absent from the graph: {sorted(want - own)}")

    def _cols(all_names, own_flags, want_flags):
        kept = [n for n, on in zip(all_names, own_flags) if on]
        return np.array([mask_on for n, mask_on in zip(all_names, want_flags)
                         if n in kept], dtype=bool)

    return FeaturizedGraph(
        x=fg.x[:, _cols(ATOM_FEATURES, fg.mask.atom, mask.atom)],
        edge_index=fg.edge_index.copy(),
        edge_attr=fg.edge_attr[:, _cols(BOND_FEATURES, fg.mask.bond, mask.bond)],
        u=fg.u[_cols(GLOBAL_FEATURES, fg.mask.global_, mask.global_)],
        y=fg.y, name=fg.name, smiles=fg.smiles, mask=mask)


def permute_graph(fg: FeaturizedGraph, perm: np.ndarray,
                  canonicalize: bool = False) -> FeaturizedGraph:
    """Relabel atoms by ``perm`` (new index = perm[old index]).

    Edge orientation is carried with the relabeling by default, which is the
    transformation model outputs must be equivariant to. ``canonicalize=True``
    additionally restores the source<destination convention and re-sorts the
    edge list (the featurizer's on-disk ordering).
    """
    perm = np.asarray(perm)
    inv = np.empty_like(perm)
    inv[perm] = np.arange(len(perm))
    x = fg.x[inv]
    edge_index = perm[fg.edge_index]
    edge_attr = fg.edge_attr.copy()
    if canonicalize and edge_index.size:
        lo = np.minimum(edge_index[0], edge_index[1])
        hi = np.maximum(edge_index[0], edge_index[1])
        order = np.lexsort((hi, lo))
        edge_index = np.stack([lo[order], hi[order]])
        edge_attr = edge_attr[order]
    return FeaturizedGraph(x=x, edge_index=edge_index, edge_attr=edge_attr,
                           u=fg.u.copy(), y=fg.y, name=fg.name, smiles=fg.smiles,
                           mask=fg.mask)
