"""Whole-molecule descriptors feeding the global feature vector.

TPSA follows the Ertl fragment scheme restricted to N/O (plus the S/P
extension) with the published fallback formulas for unmatched environments.
LogP uses Wildman-Crippen atom contributions with a reduced type table; both
are approximations by construction and are consumed only through the scaled
solubility feature.
"""
from __future__ import annotations

from .chem.mol import BondOrder, Hybridization, Molecule, canonical_ranks


def _bond_profile(mol: Molecule, i: int):
    single = double = triple = aromatic = 0
    for b in mol.bonds_of(i):
        if b.order is BondOrder.SINGLE:
            single += 1
        elif b.order is BondOrder.DOUBLE:
            double += 1
        elif b.order is BondOrder.TRIPLE:
            triple += 1
        else:
            aromatic += 1
    return single, double, triple, aromatic


def _in_three_ring(mol: Molecule, i: int) -> bool:
    return any(b.smallest_ring_size == 3 for b in mol.bonds_of(i))


def tpsa(mol: Molecule) -> float:
    """Topological polar surface area (Ertl 2000 contributions, A^2)."""
    total = 0.0
    for i, atom in enumerate(mol.atoms):
        z, q, h = atom.atomic_number, atom.formal_charge, atom.implicit_hydrogens
        s, d, t, ar = _bond_profile(mol, i)
        if z == 7:
            total += _tpsa_nitrogen(mol, i, q, h, s, d, t, ar)
        elif z == 8:
            total += _tpsa_oxygen(mol, i, q, h, s, d, t, ar)
        elif z == 16:
            total += _tpsa_sulfur(q, h, s, d, t, ar)
        elif z == 15:
            total += _tpsa_phosphorus(q, h, s, d, t, ar)
    return total


def _tpsa_nitrogen(mol, i, q, h, s, d, t, ar) -> float:
    atom = mol.atoms[i]
    if atom.aromatic:
        if q == 1:
            if h == 1:
                return 14.14
            return 4.10 if ar == 3 else 3.88
        if h >= 1:
            return 15.79
        if ar == 3:
            return 4.41
        if s == 1:
            return 4.93
        if d == 1:
            return 8.39
        return 12.89
    if q == 0:
        if h == 0:
            if t == 1 and s == 0 and d == 0:
                return 23.79
            if d == 2 and s == 1:
                return 11.68  # as-drawn nitro
            if d == 1 and t == 1:
                return 13.60  # as-drawn azide centre
            if d == 1 and s == 1:
                return 12.36
            if s == 3:
                return 3.01 if _in_three_ring(mol, i) else 3.24
        elif h == 1:
            if d == 1:
                return 23.85
            if s == 2:
                return 21.94 if _in_three_ring(mol, i) else 12.03
        elif h == 2:
            return 26.02
    elif q == 1:
        if h == 0:
            if s == 4:
                return 0.0
            if d == 1 and s == 2:
                return 3.01
            if t == 1:
                return 4.36
        elif h == 1:
            return 13.97 if d == 1 else 4.44
        elif h == 2:
            return 25.59 if d == 1 else 16.61
        elif h == 3:
            return 27.64
    # fallback (also covers N-)
    x = s + d + t + ar + h
    return max(30.5 - x * 8.2 + h * 1.5, 0.0)


def _tpsa_oxygen(mol, i, q, h, s, d, t, ar) -> float:
    atom = mol.atoms[i]
    if atom.aromatic:
        return 13.14
    if q == 0:
        if h == 1 and s == 1:
            return 20.23
        if h == 0 and s == 2:
            return 12.53 if _in_three_ring(mol, i) else 9.23
        if h == 0 and d == 1 and s == 0:
            return 17.07
    elif q == -1 and s == 1 and h == 0:
        return 23.06
    x = s + d + t + ar + h
    return max(28.5 - x * 8.6 + h * 1.5, 0.0)


def _tpsa_sulfur(q, h, s, d, t, ar) -> float:
    if ar:
        return 21.70 if d == 1 else 28.24
    if q == 0:
        if h == 1 and s == 1:
            return 38.80
        if h == 0:
            if s == 2 and d == 0:
                return 25.30
            if d == 1 and s == 0:
                return 32.09
            if s == 2 and d == 1:
                return 19.21
            if s == 2 and d == 2:
                return 8.38
    return 0.0


def _tpsa_phosphorus(q, h, s, d, t, ar) -> float:
    if q == 0:
        if s == 3 and d == 0 and h == 0:
            return 13.59
        if s == 3 and d == 1 and h == 0:
            return 9.81
        if s == 1 and d == 1 and h == 0:
            return 34.14
        if s == 2 and d == 1 and h == 1:
            return 23.47
    return 0.0


# reduced Wildman-Crippen atom contributions; type resolution is coarser than
# the published SMARTS table but uses the published values
_HETERO = {7, 8, 9, 15, 16, 17, 35, 53}


def logp(mol: Molecule) -> float:
    total = 0.0
    for i, atom in enumerate(mol.atoms):
        z = atom.atomic_number
        h = atom.implicit_hydrogens
        if z == 6:
            contrib = _crippen_carbon(mol, i)
            total += contrib + 0.1230 * h
        elif z == 7:
            total += _crippen_nitrogen(mol, i) - 0.2677 * h
        elif z == 8:
            total += _crippen_oxygen(mol, i) - 0.2677 * h
        elif z == 16:
            total += 0.6237 if atom.aromatic else 0.6482
        elif z == 15:
            total += 0.8612
        elif z == 9:
            total += 0.4202
        elif z == 17:
            total += 0.6895
        elif z == 35:
            total += 0.8456
        elif z == 53:
            total += 0.8857
        elif z == 1:
            total += 0.1230
        else:
            total += -0.0025
    return total


def _crippen_carbon(mol, i) -> float:
    atom = mol.atoms[i]
    nbrs = [mol.atoms[j] for j in mol.neighbors(i)]
    if atom.aromatic:
        heavy = len(nbrs)
        return 0.1581 if heavy <= 2 else 0.1360
    s, d, t, ar = _bond_profile(mol, i)
    hetero_double = any(
        mol.atoms[b.other(i)].atomic_number in _HETERO
        for b in mol.bonds_of(i)
        if b.order in (BondOrder.DOUBLE, BondOrder.TRIPLE)
    )
    if hetero_double:
        return -0.2783
    if t or d >= 2:
        return 0.0017
    if d == 1:
        return 0.1551
    touches_hetero = any(n.atomic_number in _HETERO for n in nbrs)
    heavy_degree = len(nbrs)
    if touches_hetero:
        return -0.2035 if heavy_degree <= 2 else -0.2051
    return 0.1441 if heavy_degree <= 2 else 0.0


def _crippen_nitrogen(mol, i) -> float:
    atom = mol.atoms[i]
    if atom.aromatic:
        return -0.3239
    if atom.formal_charge > 0:
        return -1.9500
    s, d, t, ar = _bond_profile(mol, i)
    if t:
        return 0.0839  # nitrile
    amide = any(
        mol.atoms[b.other(i)].atomic_number == 6 and _has_carbonyl(mol, b.other(i))
        for b in mol.bonds_of(i) if b.order is BondOrder.SINGLE
    )
    if amide:
        return -0.5188
    h = atom.implicit_hydrogens
    if h >= 2:
        return -1.0190
    if h == 1:
        return -0.7096
    return -1.0270


def _has_carbonyl(mol, c_idx) -> bool:
    return any(
        b.order is BondOrder.DOUBLE and mol.atoms[b.other(c_idx)].atomic_number == 8
        for b in mol.bonds_of(c_idx)
    )


def _crippen_oxygen(mol, i) -> float:
    atom = mol.atoms[i]
    if atom.aromatic:
        return 0.1552
    if atom.formal_charge < 0:
        return -1.3260
    s, d, t, ar = _bond_profile(mol, i)
    if d:
        return -0.1526  # carbonyl-type
    if atom.implicit_hydrogens:
        return -0.2893  # hydroxyl
    return -0.0684  # ether


# -- counts -------------------------------------------------------------------------


def hydrogen_bond_donors(mol: Molecule) -> int:
    """N or O atoms bearing at least one hydrogen."""
    return sum(1 for a in mol.atoms
               if a.atomic_number in (7, 8) and a.implicit_hydrogens >= 1)


def hydrogen_bond_acceptors(mol: Molecule) -> int:
    """Every N and O atom (Lipinski-style count)."""
    return sum(1 for a in mol.atoms if a.atomic_number in (7, 8))


def rotatable_bonds(mol: Molecule) -> int:
    """Non-ring single bonds between two non-terminal heavy atoms, amide C-N
    excluded."""
    count = 0
    for bond in mol.bonds:
        if bond.order is not BondOrder.SINGLE or bond.smallest_ring_size:
            continue
        if mol.degree(bond.a) < 2 or mol.degree(bond.b) < 2:
            continue
        pairs = ((bond.a, bond.b), (bond.b, bond.a))
        if any(mol.atoms[c].atomic_number == 6 and mol.atoms[n].atomic_number == 7
               and _has_carbonyl(mol, c) for c, n in pairs):
            continue
        count += 1
    return count


def chiral_centers(mol: Molecule) -> int:
    """Tetrahedral SP3 atoms whose four substituents are pairwise
    graph-distinct under Morgan-rank canonical invariants (an implicit
    hydrogen counts as one substituent, so two of them disqualify)."""
    ranks = canonical_ranks(mol)
    count = 0
    for i, atom in enumerate(mol.atoms):
        if atom.hybridization is not Hybridization.SP3:
            continue
        if atom.implicit_hydrogens > 1:
            continue
        nbrs = mol.neighbors(i)
        if len(nbrs) + atom.implicit_hydrogens != 4:
            continue
        nbr_ranks = [ranks[j] for j in nbrs]
        if len(set(nbr_ranks)) == len(nbr_ranks):
            count += 1
    return count


def sp3_fraction(mol: Molecule) -> float:
    carbons = [a for a in mol.atoms if a.atomic_number == 6]
    if not carbons:
        return 0.0
    return sum(1 for a in carbons if a.hybridization is Hybridization.SP3) / len(carbons)
