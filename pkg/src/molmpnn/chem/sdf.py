"""MOL/SDF V2000 reading.

Fixed-width counts and atom/bond blocks, ``M  CHG`` charge lines (which
supersede the atom-block charge column when present), ``$$$$`` record
separators, and data items captured into ``Molecule``-level properties via
:func:`read_sdf` returning ``(molecule, properties)`` pairs.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .. import elements
from .mol import Atom, Bond, BondOrder, Molecule
from .smiles import SmilesError, finalize


class SdfError(ValueError):
    """Positioned SDF parse error (record and line numbers are 1-based)."""

    def __init__(self, message: str, record: int, line: int | None = None):
        where = f"record {record}" + (f", line {line}" if line else "")
        super().__init__(f"{message} ({where})")
        self.record = record
        self.line = line


# legacy atom-block charge column codes
_CHARGE_CODES = {0: 0, 1: 3, 2: 2, 3: 1, 4: 0, 5: -1, 6: -2, 7: -3}

_BOND_ORDERS = {1: BondOrder.SINGLE, 2: BondOrder.DOUBLE,
                3: BondOrder.TRIPLE, 4: BondOrder.AROMATIC}


def read_sdf(path: str | Path) -> list[tuple[Molecule, dict[str, str]]]:
    """Read every record of an SDF file."""
    text = Path(path).read_text()
    out = []
    for k, chunk in enumerate(_split_records(text), start=1):
        out.append(parse_molblock(chunk, record=k))
    return out


def _split_records(text: str):
    record: list[str] = []
    for line in text.splitlines():
        if line.strip() == "$$$$":
            if any(l.strip() for l in record):
                yield record
            record = []
        else:
            record.append(line)
    if any(l.strip() for l in record):
        yield record


def parse_molblock(lines: list[str], record: int = 1) -> tuple[Molecule, dict[str, str]]:
    if len(lines) < 4:
        raise SdfError("truncated molblock header", record)
    name = lines[0].strip()
    counts = lines[3]
    try:
        n_atoms = int(counts[0:3])
        n_bonds = int(counts[3:6])
    except ValueError:
        raise SdfError("malformed counts line", record, 4) from None
    if "V3000" in counts:
        raise SdfError("V3000 records are not supported", record, 4)

    mol = Molecule(name=name, has_3d=True)
    atom_lines = lines[4:4 + n_atoms]
    if len(atom_lines) < n_atoms:
        raise SdfError("atom block shorter than counts line claims", record)
    for ln, line in enumerate(atom_lines, start=5):
        try:
            x = float(line[0:10])
            y = float(line[10:20])
            z = float(line[20:30])
            symbol = line[30:34].strip()
        except (ValueError, IndexError):
            raise SdfError("malformed atom line", record, ln) from None
        try:
            number = elements.atomic_number(symbol)
        except elements.UnknownElementError:
            raise SdfError(f"unknown element symbol {symbol!r}", record, ln) from None
        charge = 0
        code_field = line[36:39].strip()
        if code_field:
            try:
                charge = _CHARGE_CODES.get(int(code_field), 0)
            except ValueError:
                charge = 0
        mol.add_atom(Atom(atomic_number=number, formal_charge=charge,
                          position=np.array([x, y, z], dtype=float)))

    bond_lines = lines[4 + n_atoms:4 + n_atoms + n_bonds]
    if len(bond_lines) < n_bonds:
        raise SdfError("bond block shorter than counts line claims", record)
    for ln, line in enumerate(bond_lines, start=5 + n_atoms):
        try:
            a = int(line[0:3]) - 1
            b = int(line[3:6]) - 1
            code = int(line[6:9])
        except (ValueError, IndexError):
            raise SdfError("malformed bond line", record, ln) from None
        if not (0 <= a < n_atoms and 0 <= b < n_atoms) or a == b:
            raise SdfError("bond references a nonexistent atom", record, ln)
        order = _BOND_ORDERS.get(code)
        if order is None:
            raise SdfError(f"unsupported bond type {code}", record, ln)
        if order is BondOrder.AROMATIC:
            mol.atoms[a].aromatic = True
            mol.atoms[b].aromatic = True
        mol.add_bond(Bond(a, b, order))

    properties: dict[str, str] = {}
    rest = lines[4 + n_atoms + n_bonds:]
    chg_lines = [l for l in rest if l.startswith("M  CHG")]
    if chg_lines:
        for atom in mol.atoms:
            atom.formal_charge = 0  # M CHG supersedes the legacy column
        for line in chg_lines:
            fields = line.split()
            try:
                count = int(fields[2])
                pairs = fields[3:3 + 2 * count]
                for i in range(count):
                    idx = int(pairs[2 * i]) - 1
                    mol.atoms[idx].formal_charge = int(pairs[2 * i + 1])
            except (ValueError, IndexError):
                raise SdfError("malformed M  CHG line", record) from None

    key = None
    for line in rest:
        if line.startswith(">"):
            start = line.find("<")
            end = line.find(">", start + 1)
            key = line[start + 1:end] if 0 <= start < end else None
        elif key is not None:
            if line.strip() == "":
                key = None
            else:
                properties[key] = (properties.get(key, "") + "\n" + line.strip()).strip()

    try:
        finalize(mol, explicit_h=None)
    except SmilesError as exc:  # pragma: no cover - finalize is permissive here
        raise SdfError(str(exc), record) from None
    return mol, properties


def write_sdf(records: list[tuple[Molecule, dict[str, str]]], path: str | Path) -> None:
    """Write molecules with 3D coordinates back out as a V2000 SDF."""
    chunks = []
    for mol, props in records:
        coords = mol.coordinates()
        lines = [mol.name, "  molmpnn", ""]
        lines.append(f"{len(mol.atoms):3d}{len(mol.bonds):3d}  0  0  0  0  0  0  0  0999 V2000")
        for atom, (x, y, z) in zip(mol.atoms, coords):
            sym = elements.symbol(atom.atomic_number)
            lines.append(f"{x:10.4f}{y:10.4f}{z:10.4f} {sym:<3} 0  0  0  0  0  0  0  0  0  0  0  0")
        code = {BondOrder.SINGLE: 1, BondOrder.DOUBLE: 2,
                BondOrder.TRIPLE: 3, BondOrder.AROMATIC: 4}
        for bond in mol.bonds:
            lines.append(f"{bond.a + 1:3d}{bond.b + 1:3d}{code[bond.order]:3d}  0")
        charged = [(i + 1, a.formal_charge) for i, a in enumerate(mol.atoms)
                   if a.formal_charge]
        for i in range(0, len(charged), 8):
            batch = charged[i:i + 8]
            line = f"M  CHG{len(batch):3d}"
            for idx, q in batch:
                line += f"{idx:4d}{q:4d}"
            lines.append(line)
        lines.append("M  END")
        for key, value in props.items():
            lines.append(f">  <{key}>")
            lines.append(str(value))
            lines.append("")
        lines.append("$$$$")
        chunks.append("\n".join(lines))
    Path(path).write_text("\n".join(chunks) + "\n")
