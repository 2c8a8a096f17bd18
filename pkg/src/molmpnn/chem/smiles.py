"""SMILES reading and writing.

The reader handles the organic subset, bracket atoms (isotope digits are
accepted and ignored), branches, ring closures including ``%nn``, dot-separated
fragments, and bond symbols ``- = # : / \\``. Tetrahedral tags ``@``/``@@`` and
the directional bond tokens are recorded on the graph but never interpreted.
Aromaticity is taken from lowercase input and additionally perceived on
5- and 6-membered rings of Kekule input with a 4n+2 pi-electron count.

Every syntax or valence problem raises :class:`SmilesError` carrying the byte
offset of the offending token.
"""
from __future__ import annotations

import re
from enum import Enum, auto

import numpy as np

from .. import elements
from .mol import Atom, Bond, BondOrder, Hybridization, Molecule, assign_ring_sizes, sssr


class SmilesError(ValueError):
    """Positioned SMILES parse error."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


class TokenType(Enum):
    ORGANIC = auto()
    BRACKET = auto()
    BOND = auto()
    RING = auto()
    BRANCH_OPEN = auto()
    BRANCH_CLOSE = auto()
    DOT = auto()


BRACKET_ATOM = re.compile(
    r"^(?P<isotope>\d+)?"
    r"(?P<symbol>[A-Z][a-z]?|[bcnops]|se|as)"
    r"(?P<stereo>@{1,2})?"
    r"(?P<hcount>H\d*)?"
    r"(?P<charge>\+{1,3}|-{1,3}|\+\d|-\d)?"
    r"(?P<map>:\d+)?$"
)

_ORGANIC_UPPER = ("Cl", "Br", "B", "C", "N", "O", "P", "S", "F", "I")
_ORGANIC_LOWER = ("se", "as", "b", "c", "n", "o", "p", "s")
_BOND_SYMBOLS = {"-": BondOrder.SINGLE, "=": BondOrder.DOUBLE, "#": BondOrder.TRIPLE,
                 ":": BondOrder.AROMATIC, "/": BondOrder.SINGLE, "\\": BondOrder.SINGLE}


def _tokenize(text: str):
    """Yield ``(offset, TokenType, payload)`` triples."""
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch == "[":
            end = text.find("]", i)
            if end < 0:
                raise SmilesError("unclosed bracket atom", i)
            yield i, TokenType.BRACKET, text[i + 1:end]
            i = end + 1
        elif ch.isalpha():
            two, one = text[i:i + 2], ch
            if two in _ORGANIC_UPPER or two in _ORGANIC_LOWER:
                yield i, TokenType.ORGANIC, two
                i += 2
            elif one in _ORGANIC_UPPER or one in _ORGANIC_LOWER:
                yield i, TokenType.ORGANIC, one
                i += 1
            else:
                raise SmilesError(
                    f"atom {ch!r} must be written in brackets", i)
        elif ch in _BOND_SYMBOLS:
            yield i, TokenType.BOND, ch
            i += 1
        elif ch.isdigit():
            yield i, TokenType.RING, ch
            i += 1
        elif ch == "%":
            if i + 2 >= n or not text[i + 1:i + 3].isdigit():
                raise SmilesError("'%' ring closure needs two digits", i)
            yield i, TokenType.RING, text[i + 1:i + 3]
            i += 3
        elif ch == "(":
            yield i, TokenType.BRANCH_OPEN, ch
            i += 1
        elif ch == ")":
            yield i, TokenType.BRANCH_CLOSE, ch
            i += 1
        elif ch == ".":
            yield i, TokenType.DOT, ch
            i += 1
        elif ch in " \t":
            break  # SMILES proper ends at whitespace; trailing title ignored
        else:
            raise SmilesError(f"unexpected character {ch!r}", i)


def _parse_bracket(body: str, offset: int) -> Atom:
    m = BRACKET_ATOM.match(body)
    if not m:
        raise SmilesError(f"malformed bracket atom [{body}]", offset)
    raw_symbol = m.group("symbol")
    aromatic = raw_symbol[0].islower()
    symbol = raw_symbol.capitalize()
    try:
        z = elements.atomic_number(symbol)
    except elements.UnknownElementError:
        raise SmilesError(f"unknown element {symbol!r}", offset) from None
    hcount = m.group("hcount")
    n_h = 0
    if hcount:
        n_h = int(hcount[1:]) if len(hcount) > 1 else 1
    charge_s = m.group("charge")
    charge = 0
    if charge_s:
        if charge_s[-1].isdigit():
            charge = int(charge_s[-1]) * (1 if charge_s[0] == "+" else -1)
        else:
            charge = len(charge_s) * (1 if charge_s[0] == "+" else -1)
    return Atom(atomic_number=z, formal_charge=charge, aromatic=aromatic,
                implicit_hydrogens=n_h, stereo=m.group("stereo"))


def parse_smiles(text: str, name: str = "") -> Molecule:
    """Parse a SMILES string into a :class:`Molecule`.

    Implicit hydrogens are filled from standard valences (charge-adjusted) for
    organic-subset atoms written without brackets; bracket atoms carry exactly
    the hydrogens they declare. Ring sizes, aromaticity, hybridization and
    conjugation are assigned before returning.
    """
    mol = Molecule(name=name, source_smiles=text)
    explicit_h: list[bool] = []  # True when the H count came from a bracket
    atom_offsets: list[int] = []

    anchor: int | None = None
    stack: list[int] = []
    pending_bond: tuple[str, int] | None = None  # (symbol, offset)
    pending_dot = False
    ring_bonds: dict[str, tuple[int, str | None, int]] = {}

    def attach(a: int, b: int, symbol: str | None, offset: int) -> None:
        if a == b:
            raise SmilesError("bond joins an atom to itself", offset)
        if mol.bond_between(a, b) is not None:
            raise SmilesError("duplicate bond between the same atoms", offset)
        if symbol is None:
            order = BondOrder.SINGLE
            if mol.atoms[a].aromatic and mol.atoms[b].aromatic:
                # resolved during finalization: ring bonds become aromatic
                order = BondOrder.AROMATIC
            mol.add_bond(Bond(a, b, order))
        else:
            stereo = symbol if symbol in ("/", "\\") else None
            mol.add_bond(Bond(a, b, _BOND_SYMBOLS[symbol], stereo=stereo))

    for offset, kind, value in _tokenize(text):
        if kind in (TokenType.ORGANIC, TokenType.BRACKET):
            if kind is TokenType.ORGANIC:
                atom = Atom(atomic_number=elements.atomic_number(value.capitalize()),
                            aromatic=value[0].islower())
            else:
                atom = _parse_bracket(value, offset)
            idx = mol.add_atom(atom)
            explicit_h.append(kind is TokenType.BRACKET)
            atom_offsets.append(offset)
            if anchor is not None and not pending_dot:
                symbol_ = pending_bond[0] if pending_bond else None
                attach(anchor, idx, symbol_, offset)
            elif pending_bond is not None:
                raise SmilesError("bond symbol with no preceding atom",
                                  pending_bond[1])
            pending_bond = None
            pending_dot = False
            anchor = idx
        elif kind is TokenType.BOND:
            if pending_bond is not None:
                raise SmilesError("two consecutive bond symbols", offset)
            pending_bond = (value, offset)
        elif kind is TokenType.RING:
            if anchor is None:
                raise SmilesError("ring closure before any atom", offset)
            symbol_ = pending_bond[0] if pending_bond else None
            pending_bond = None
            if value in ring_bonds:
                other, other_symbol, _ = ring_bonds.pop(value)
                if symbol_ and other_symbol and symbol_ != other_symbol:
                    raise SmilesError(
                        f"conflicting bond symbols on ring closure {value}", offset)
                attach(other, anchor, symbol_ or other_symbol, offset)
            else:
                ring_bonds[value] = (anchor, symbol_, offset)
        elif kind is TokenType.BRANCH_OPEN:
            if anchor is None:
                raise SmilesError("branch opened before any atom", offset)
            stack.append(anchor)
        elif kind is TokenType.BRANCH_CLOSE:
            if not stack:
                raise SmilesError("unmatched ')'", offset)
            anchor = stack.pop()
        elif kind is TokenType.DOT:
            if pending_bond is not None:
                raise SmilesError("bond symbol before '.'", pending_bond[1])
            if pending_dot:
                raise SmilesError("consecutive '.' separators", offset)
            pending_dot = True

    if stack:
        raise SmilesError("unclosed '('", len(text))
    if ring_bonds:
        digit, (_, _, first_offset) = next(iter(ring_bonds.items()))
        raise SmilesError(f"unmatched ring closure {digit}", first_offset)
    if pending_bond is not None:
        raise SmilesError("dangling bond symbol", pending_bond[1])
    if not mol.atoms:
        raise SmilesError("empty SMILES", 0)

    finalize(mol, explicit_h, atom_offsets)
    return mol


# -- post-parse graph finalization -------------------------------------------------


def finalize(mol: Molecule, explicit_h: list[bool] | None = None,
             atom_offsets: list[int] | None = None) -> None:
    """Assign ring sizes, aromaticity, implicit hydrogens, hybridization and
    conjugation. Shared by the SMILES and SDF readers (``explicit_h=None``
    means hydrogen counts are filled permissively, never raising)."""
    assign_ring_sizes(mol)
    _check_aromatic_in_rings(mol, atom_offsets)
    _fix_nonring_aromatic_bonds(mol)
    _fill_hydrogens(mol, explicit_h, atom_offsets)
    _perceive_aromaticity(mol)
    refresh_derived(mol)


def refresh_derived(mol: Molecule) -> None:
    """Recompute ring sizes, hybridization and conjugation after graph edits."""
    assign_ring_sizes(mol)
    _assign_hybridization(mol)
    _assign_conjugation(mol)


def _check_aromatic_in_rings(mol: Molecule, atom_offsets) -> None:
    for i, atom in enumerate(mol.atoms):
        if atom.aromatic and not any(b.smallest_ring_size for b in mol.bonds_of(i)):
            offset = atom_offsets[i] if atom_offsets else 0
            raise SmilesError("aromatic atom outside any ring", offset)


def _fix_nonring_aromatic_bonds(mol: Molecule) -> None:
    # a default bond between aromatic atoms of different rings (biphenyl) is single
    for bond in mol.bonds:
        if bond.order is BondOrder.AROMATIC and bond.smallest_ring_size == 0:
            bond.order = BondOrder.SINGLE


def effective_valences(z: int, charge: int) -> tuple[int, ...] | None:
    """Standard valences adjusted for formal charge (amide-style conventions:
    N+ binds four, O- binds one, carbanion/carbocation bind three)."""
    base = elements.VALENCES.get(z)
    if base is None:
        return None
    adj = -abs(charge) if z == 6 else charge
    return tuple(sorted(max(v + adj, 0) for v in base))


def _fill_hydrogens(mol: Molecule, explicit_h, atom_offsets) -> None:
    for i, atom in enumerate(mol.atoms):
        if explicit_h is not None and explicit_h[i]:
            continue  # bracket atoms keep their declared count
        choices = effective_valences(atom.atomic_number, atom.formal_charge)
        if choices is None:
            atom.implicit_hydrogens = 0
            continue
        order_sum = mol.bond_order_sum(i)
        if atom.aromatic:
            # lowercase atoms fill against their lowest valence only: the 1.5
            # bond convention inflates sums by 0.5 at fusions and a lone-pair
            # donor (furan O, thiophene S) sits a full unit over its valence
            target = choices[0]
            if order_sum - target > 1.6 and explicit_h is not None:
                offset = atom_offsets[i] if atom_offsets else 0
                raise SmilesError(
                    f"aromatic valence {order_sum:g} is not plausible for "
                    f"{elements.symbol(atom.atomic_number)}", offset)
            atom.implicit_hydrogens = max(int(target - order_sum + 1e-9), 0)
            continue
        target = next((v for v in choices if v >= order_sum - 1e-9), None)
        if target is None:
            if explicit_h is None:
                atom.implicit_hydrogens = 0  # file-based input: trust the record
                continue
            offset = atom_offsets[i] if atom_offsets else 0
            raise SmilesError(
                f"valence {order_sum:g} exceeds every standard valence of "
                f"{elements.symbol(atom.atomic_number)}", offset)
        atom.implicit_hydrogens = max(int(target - order_sum + 1e-9), 0)


def _perceive_aromaticity(mol: Molecule) -> None:
    """Mark 5/6-rings aromatic when every member is SP2-capable and the ring's
    pi-electron count satisfies 4n+2. Lowercase input flags are kept as-is."""
    rings = [r for r in sssr(mol) if len(r) in (5, 6)]
    ring_atoms_any: set[int] = set()
    for ring in rings:
        ring_atoms_any.update(ring)
    double_partner: dict[int, list[int]] = {}
    for bond in mol.bonds:
        if bond.order is BondOrder.DOUBLE:
            double_partner.setdefault(bond.a, []).append(bond.b)
            double_partner.setdefault(bond.b, []).append(bond.a)

    for ring in rings:
        members = set(ring)
        if all(mol.atoms[i].aromatic for i in ring):
            _mark_ring_aromatic(mol, ring)
            continue
        pi = 0
        ok = True
        for i in ring:
            atom = mol.atoms[i]
            partners = double_partner.get(i, [])
            if atom.aromatic:
                pi += 1
            elif any(p in members or p in ring_atoms_any for p in partners):
                pi += 1
            elif partners:
                ok = False  # exocyclic double bond to a chain atom blocks the ring
                break
            elif atom.atomic_number in (7, 8, 15, 16, 34):
                pi += 2  # heteroatom lone pair
            elif atom.atomic_number == 6 and atom.formal_charge == -1:
                pi += 2
            elif atom.atomic_number == 6 and atom.formal_charge == 1:
                pi += 0
            else:
                ok = False
                break
        if ok and pi % 4 == 2:
            _mark_ring_aromatic(mol, ring)


def _mark_ring_aromatic(mol: Molecule, ring: list[int]) -> None:
    members = set(ring)
    for i in ring:
        mol.atoms[i].aromatic = True
    for bond in mol.bonds:
        if bond.a in members and bond.b in members and bond.smallest_ring_size:
            bond.order = BondOrder.AROMATIC


def _assign_hybridization(mol: Molecule) -> None:
    for i, atom in enumerate(mol.atoms):
        orders = [b.order for b in mol.bonds_of(i)]
        n_double = sum(1 for o in orders if o is BondOrder.DOUBLE)
        if BondOrder.TRIPLE in orders or n_double >= 2:
            atom.hybridization = Hybridization.SP
        elif atom.aromatic or n_double == 1:
            atom.hybridization = Hybridization.SP2
        elif atom.atomic_number in elements.VALENCES or atom.atomic_number == 1:
            atom.hybridization = Hybridization.SP3
        else:
            atom.hybridization = Hybridization.OTHER


def _assign_conjugation(mol: Molecule) -> None:
    multiple = [False] * len(mol)
    lone_pair = [a.atomic_number in (7, 8, 16) and a.formal_charge <= 0
                 for a in mol.atoms]
    for bond in mol.bonds:
        if bond.order in (BondOrder.DOUBLE, BondOrder.TRIPLE, BondOrder.AROMATIC):
            multiple[bond.a] = multiple[bond.b] = True
    for bond in mol.bonds:
        a_pi = multiple[bond.a] or lone_pair[bond.a]
        b_pi = multiple[bond.b] or lone_pair[bond.b]
        some_pi = multiple[bond.a] or multiple[bond.b]
        bond.conjugated = bool(a_pi and b_pi and some_pi)


# -- writer -------------------------------------------------------------------------


def randomized_smiles(mol: Molecule, seed: int) -> str:
    """Write an alternative SMILES via a seeded random depth-first traversal."""
    smiles, _ = randomized_traversal(mol, seed)
    return smiles


def randomized_traversal(mol: Molecule, seed: int) -> tuple[str, list[int]]:
    """Return ``(smiles, order)`` where ``order`` lists original atom indices in
    the sequence their tokens appear in the written string.

    Two passes: a seeded DFS fixes the spanning tree and atom order, then ring
    digits are allocated along that order (opened at the earlier endpoint of
    every back edge, closed at the later one, digits recycled after closing).
    """
    if not mol.atoms:
        raise ValueError("cannot write an empty molecule")
    rng = np.random.default_rng(seed)
    adj: list[list[tuple[int, Bond]]] = [[] for _ in mol.atoms]
    for bond in mol.bonds:
        adj[bond.a].append((bond.b, bond))
        adj[bond.b].append((bond.a, bond))

    visited: set[int] = set()
    preorder: dict[int, int] = {}
    order: list[int] = []
    children: dict[int, list[tuple[int, Bond]]] = {}
    back_edges: list[tuple[int, int, Bond]] = []  # (earlier, later, bond)
    roots: list[int] = []

    def dfs(i: int, parent_bond: Bond | None) -> None:
        visited.add(i)
        preorder[i] = len(order)
        order.append(i)
        children[i] = []
        nbrs = list(adj[i])
        rng.shuffle(nbrs)
        for j, bond in nbrs:
            if bond is parent_bond:
                continue
            if j in visited:
                if preorder[j] < preorder[i]:
                    back_edges.append((j, i, bond))
                continue
            children[i].append((j, bond))
            dfs(j, bond)

    starts = list(range(len(mol.atoms)))
    rng.shuffle(starts)
    for start in starts:
        if start not in visited:
            roots.append(start)
            dfs(start, None)

    # prune children that were later reached through a back edge path: they
    # stay tree children (dfs recursed immediately), so nothing to prune;
    # allocate ring digits in emission order
    opens: dict[int, list[tuple[int, Bond, int]]] = {}   # atom -> (digit, bond, later)
    closes: dict[int, list[tuple[int, Bond]]] = {}       # atom -> (digit, bond)
    free: list[int] = list(range(1, 100))
    active: dict[tuple[int, int], int] = {}
    for i in order:
        for earlier, later, bond in back_edges:
            if later == i:
                digit = active.pop((earlier, later))
                closes.setdefault(i, []).append((digit, bond))
                free.append(digit)
                free.sort()
        for earlier, later, bond in back_edges:
            if earlier == i:
                if not free:
                    raise ValueError("more than 99 simultaneously open rings")
                digit = free.pop(0)
                active[(earlier, later)] = digit
                opens.setdefault(i, []).append((digit, bond, later))

    def bond_token(bond: Bond, a: int, b: int) -> str:
        if bond.order is BondOrder.AROMATIC:
            return ""
        if bond.order is BondOrder.SINGLE:
            both_aromatic = mol.atoms[a].aromatic and mol.atoms[b].aromatic
            return "-" if both_aromatic else ""
        return {BondOrder.DOUBLE: "=", BondOrder.TRIPLE: "#"}[bond.order]

    def render(i: int, parent: int | None, parent_bond: Bond | None) -> str:
        parts = []
        if parent_bond is not None:
            parts.append(bond_token(parent_bond, parent, i))
        parts.append(_atom_token(mol, i))
        for digit, bond in closes.get(i, []):
            parts.append(_digit_token(digit))
        for digit, bond, later in opens.get(i, []):
            parts.append(bond_token(bond, i, later) + _digit_token(digit))
        kids = children[i]
        for k, (j, bond) in enumerate(kids):
            sub = render(j, i, bond)
            parts.append(sub if k == len(kids) - 1 else f"({sub})")
        return "".join(parts)

    return ".".join(render(r, None, None) for r in roots), order


def _digit_token(digit: int) -> str:
    return str(digit) if digit < 10 else f"%{digit:02d}"


def _atom_token(mol: Molecule, i: int) -> str:
    atom = mol.atoms[i]
    sym = elements.symbol(atom.atomic_number)
    organic = sym in elements.ORGANIC_SUBSET
    written = sym.lower() if atom.aromatic else sym
    if organic and atom.formal_charge == 0:
        if _inferred_hydrogens(mol, i) == atom.implicit_hydrogens:
            return written
    h = atom.implicit_hydrogens
    h_part = "" if h == 0 else ("H" if h == 1 else f"H{h}")
    q = atom.formal_charge
    if q == 0:
        q_part = ""
    elif abs(q) == 1:
        q_part = "+" if q > 0 else "-"
    else:
        q_part = f"{'+' if q > 0 else '-'}{abs(q)}"
    return f"[{written}{h_part}{q_part}]"


def _inferred_hydrogens(mol: Molecule, i: int) -> int:
    """Hydrogen count the reader would infer for an unbracketed atom."""
    atom = mol.atoms[i]
    choices = effective_valences(atom.atomic_number, atom.formal_charge)
    if choices is None:
        return 0
    order_sum = mol.bond_order_sum(i)
    if atom.aromatic:
        return max(int(choices[0] - order_sum + 1e-9), 0)
    target = next((v for v in choices if v >= order_sum - 1e-9), None)
    if target is None:
        return -1  # forces bracket notation
    return max(int(target - order_sum + 1e-9), 0)
