"""Input standardization: hydrogen folding, salt stripping, charge normalization.

The pipeline is idempotent — running it twice yields an identical graph.
"""
from __future__ import annotations

import logging

import numpy as np

from .. import elements
from .mol import Bond, BondOrder, Molecule, connected_components
from .smiles import refresh_derived

log = logging.getLogger(__name__)


class EmptyMoleculeError(ValueError):
    pass


def standardize(mol: Molecule) -> Molecule:
    """Return a standardized copy of ``mol``.

    Steps, in order: fold explicit hydrogens into implicit counts, keep the
    largest organic fragment (single-atom metal/salt fragments dropped with
    it), normalize as-drawn nitro/azide groups to their charged form, and a
    reionization step that is deliberately a no-op (acid/base site reassignment
    is out of scope; documented so downstream users know protonation states
    pass through unchanged).
    """
    mol = _fold_hydrogens(mol.copy())
    mol = _keep_largest_fragment(mol)
    if not any(a.atomic_number > 1 for a in mol.atoms):
        raise EmptyMoleculeError("no heavy atoms left after standardization")
    _normalize_charges(mol)
    _reionize(mol)
    refresh_derived(mol)
    return mol


def _fold_hydrogens(mol: Molecule) -> Molecule:
    keep: list[int] = []
    folded: dict[int, int] = {}
    for i, atom in enumerate(mol.atoms):
        is_plain_h = (atom.atomic_number == 1 and atom.formal_charge == 0
                      and mol.degree(i) == 1
                      and mol.bonds_of(i)[0].order is BondOrder.SINGLE)
        if is_plain_h and mol.atoms[mol.bonds_of(i)[0].other(i)].atomic_number != 1:
            folded[i] = mol.bonds_of(i)[0].other(i)
        else:
            keep.append(i)
    if not folded:
        return mol
    remap = {old: new for new, old in enumerate(keep)}
    out = Molecule(name=mol.name, source_smiles=mol.source_smiles, has_3d=mol.has_3d)
    for old in keep:
        out.add_atom(mol.atoms[old].copy())
    for i, heavy in folded.items():
        out.atoms[remap[heavy]].implicit_hydrogens += 1
    for bond in mol.bonds:
        if bond.a in folded or bond.b in folded:
            continue
        nb = bond.copy()
        nb.a, nb.b = remap[bond.a], remap[bond.b]
        out.add_bond(nb)
    return out


def _keep_largest_fragment(mol: Molecule) -> Molecule:
    components = connected_components(mol)
    if len(components) <= 1:
        if not mol.atoms:
            raise EmptyMoleculeError("molecule is empty")
        return mol

    def heavy_count(comp: list[int]) -> int:
        return sum(1 for i in comp if mol.atoms[i].atomic_number > 1)

    def organic(comp: list[int]) -> bool:
        return any(mol.atoms[i].atomic_number == 6 for i in comp)

    ranked = [c for c in components if organic(c)] or components
    # most heavy atoms wins; ties resolved by first occurrence in input order
    best = max(ranked, key=lambda c: (heavy_count(c), -min(c)))
    if heavy_count(best) == 0:
        raise EmptyMoleculeError("no non-trivial fragment after salt stripping")
    dropped = len(components) - 1
    if dropped:
        log.debug("dropped %d fragment(s) from %s", dropped, mol.name or "<unnamed>")
    keep = sorted(best)
    remap = {old: new for new, old in enumerate(keep)}
    out = Molecule(name=mol.name, source_smiles=mol.source_smiles, has_3d=mol.has_3d)
    for old in keep:
        out.add_atom(mol.atoms[old].copy())
    for bond in mol.bonds:
        if bond.a in remap and bond.b in remap:
            nb = bond.copy()
            nb.a, nb.b = remap[bond.a], remap[bond.b]
            out.add_bond(nb)
    return out


def _normalize_charges(mol: Molecule) -> None:
    """Rewrite pentavalent nitro N(=O)=O and neutral azide N=N=N as-drawn forms
    to the canonical charge-separated representation."""
    for i, atom in enumerate(mol.atoms):
        if atom.atomic_number != 7 or atom.formal_charge != 0:
            continue
        double_bonds = [b for b in mol.bonds_of(i) if b.order is BondOrder.DOUBLE]
        if len(double_bonds) != 2:
            continue
        partners = [b.other(i) for b in double_bonds]
        partner_atoms = [mol.atoms[p] for p in partners]
        if all(p.atomic_number == 8 and p.formal_charge == 0 for p in partner_atoms):
            # nitro: one N=O stays, the other becomes N(+)-O(-)
            chosen = min(partners)
            bond = next(b for b in double_bonds if b.other(i) == chosen)
            bond.order = BondOrder.SINGLE
            mol.atoms[chosen].formal_charge = -1
            mol.atoms[chosen].implicit_hydrogens = 0
            atom.formal_charge = 1
            atom.implicit_hydrogens = 0
        elif any(p.atomic_number == 7 for p in partner_atoms):
            # azide middle nitrogen: R-N=N=N -> R-N=[N+]=[N-]
            terminal = [p for p in partners
                        if mol.atoms[p].atomic_number == 7 and mol.degree(p) == 1
                        and mol.atoms[p].formal_charge == 0]
            if terminal:
                t = min(terminal)
                atom.formal_charge = 1
                atom.implicit_hydrogens = 0
                mol.atoms[t].formal_charge = -1
                mol.atoms[t].implicit_hydrogens = 0


def _reionize(mol: Molecule) -> None:
    """Intentional no-op; see :func:`standardize`."""
    return None


def perturb_coordinates(mol: Molecule, sigma: float, seed: int) -> Molecule:
    """Return a copy with zero-mean Gaussian noise (std ``sigma`` Angstrom per
    component) added to every atom position."""
    if not mol.has_3d:
        raise ValueError("cannot perturb a molecule without 3D coordinates")
    rng = np.random.default_rng(seed)
    out = mol.copy()
    for atom in out.atoms:
        atom.position = atom.position + rng.normal(0.0, sigma, size=3)
    return out
