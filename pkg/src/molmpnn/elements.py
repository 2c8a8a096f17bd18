"""Per-element physical constants used by the featurizer.

Column sources (transcribed values):
  electronegativity      Pauling scale (Allred 1961 revision, dimensionless)
  dipole_polarizability  Schwerdtfeger & Nagle 2019 recommended static values (Bohr^3)
  vdw_radius             Alvarez 2013 van der Waals radii (picometres)
  covalent_radius        Cordero et al. 2008 (Angstrom; low-spin value where split)
  atomic_mass            IUPAC 2021 standard atomic weights (u)
"""
from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class ElementRecord:
    symbol: str
    atomic_number: int
    electronegativity: float
    dipole_polarizability: float
    vdw_radius: float
    covalent_radius: float
    atomic_mass: float


def _rec(sym, z, en, dp, vdw, cov, mass):
    return ElementRecord(sym, z, en, dp, vdw, cov, mass)


_TABLE = [
    #    sym   Z   chi    DP      vdW    cov    mass
    _rec("H",   1, 2.20,   4.50,  120.0, 0.31,   1.008),
    _rec("Li",  3, 0.98, 164.11,  212.0, 1.28,   6.94),
    _rec("Be",  4, 1.57,  37.74,  198.0, 0.96,   9.012),
    _rec("B",   5, 2.04,  20.50,  191.0, 0.84,  10.81),
    _rec("C",   6, 2.55,  11.30,  177.0, 0.76,  12.011),
    _rec("N",   7, 3.04,   7.40,  166.0, 0.71,  14.007),
    _rec("O",   8, 3.44,   5.30,  150.0, 0.66,  15.999),
    _rec("F",   9, 3.98,   3.74,  146.0, 0.57,  18.998),
    _rec("Na", 11, 0.93, 162.70,  250.0, 1.66,  22.990),
    _rec("Mg", 12, 1.31,  71.20,  251.0, 1.41,  24.305),
    _rec("Al", 13, 1.61,  57.80,  225.0, 1.21,  26.982),
    _rec("Si", 14, 1.90,  37.30,  219.0, 1.11,  28.085),
    _rec("P",  15, 2.19,  25.00,  190.0, 1.07,  30.974),
    _rec("S",  16, 2.58,  19.40,  189.0, 1.05,  32.06),
    _rec("Cl", 17, 3.16,  14.60,  182.0, 1.02,  35.45),
    _rec("K",  19, 0.82, 289.70,  273.0, 2.03,  39.098),
    _rec("Ca", 20, 1.00, 160.80,  262.0, 1.76,  40.078),
    _rec("Ti", 22, 1.54,  99.00,  246.0, 1.60,  47.867),
    _rec("Cr", 24, 1.66,  83.00,  245.0, 1.39,  51.996),
    _rec("Mn", 25, 1.55,  68.00,  245.0, 1.39,  54.938),
    _rec("Fe", 26, 1.83,  62.00,  244.0, 1.32,  55.845),
    _rec("Co", 27, 1.88,  55.00,  240.0, 1.26,  58.933),
    _rec("Ni", 28, 1.91,  49.00,  240.0, 1.24,  58.693),
    _rec("Cu", 29, 1.90,  46.50,  238.0, 1.32,  63.546),
    _rec("Zn", 30, 1.65,  38.67,  239.0, 1.22,  65.38),
    _rec("Ga", 31, 1.81,  50.00,  232.0, 1.22,  69.723),
    _rec("Ge", 32, 2.01,  40.00,  229.0, 1.20,  72.630),
    _rec("As", 33, 2.18,  30.00,  188.0, 1.19,  74.922),
    _rec("Se", 34, 2.55,  28.90,  182.0, 1.20,  78.971),
    _rec("Br", 35, 2.96,  21.00,  186.0, 1.20,  79.904),
    _rec("Rb", 37, 0.82, 319.80,  321.0, 2.20,  85.468),
    _rec("Sr", 38, 0.95, 197.20,  284.0, 1.95,  87.62),
    _rec("Ag", 47, 1.93,  55.00,  253.0, 1.45, 107.868),
    _rec("Cd", 48, 1.69,  46.00,  249.0, 1.44, 112.414),
    _rec("Sn", 50, 1.96,  53.00,  242.0, 1.39, 118.710),
    _rec("Sb", 51, 2.05,  43.00,  247.0, 1.39, 121.760),
    _rec("Te", 52, 2.10,  38.00,  199.0, 1.38, 127.60),
    _rec("I",  53, 2.66,  32.90,  204.0, 1.39, 126.904),
    _rec("Cs", 55, 0.79, 400.90,  348.0, 2.44, 132.905),
    _rec("Ba", 56, 0.89, 272.00,  303.0, 2.15, 137.327),
    _rec("Pt", 78, 2.28,  48.00,  223.0, 1.36, 195.084),
    _rec("Au", 79, 2.54,  36.00,  232.0, 1.36, 196.967),
    _rec("Hg", 80, 2.00,  33.91,  245.0, 1.32, 200.592),
    _rec("Pb", 82, 2.33,  47.00,  260.0, 1.46, 207.2),
    _rec("Bi", 83, 2.02,  48.00,  254.0, 1.48, 208.980),
]

BY_NUMBER: dict[int, ElementRecord] = {r.atomic_number: r for r in _TABLE}
BY_SYMBOL: dict[str, ElementRecord] = {r.symbol: r for r in _TABLE}

# symbols the SMILES/SDF parsers accept, beyond the property table above
_EXTRA_SYMBOLS = {
    "He": 2, "Ne": 10, "Ar": 18, "Sc": 21, "V": 23, "Kr": 36, "Y": 39,
    "Zr": 40, "Nb": 41, "Mo": 42, "Tc": 43, "Ru": 44, "Rh": 45, "Pd": 46,
    "In": 49, "Xe": 54, "La": 57, "W": 74, "Re": 75, "Os": 76, "Ir": 77,
    "Tl": 81, "Po": 84, "Rn": 86, "Ra": 88, "U": 92,
}
SYMBOL_TO_NUMBER: dict[str, int] = {r.symbol: r.atomic_number for r in _TABLE}
SYMBOL_TO_NUMBER.update(_EXTRA_SYMBOLS)
NUMBER_TO_SYMBOL: dict[int, str] = {z: s for s, z in SYMBOL_TO_NUMBER.items()}


class UnknownElementError(KeyError):
    pass


def record(atomic_number: int) -> ElementRecord:
    try:
        return BY_NUMBER[atomic_number]
    except KeyError:
        raise UnknownElementError(
            f"no property record for element Z={atomic_number}"
        ) from None


def atomic_number(symbol: str) -> int:
    try:
        return SYMBOL_TO_NUMBER[symbol]
    except KeyError:
        raise UnknownElementError(f"unknown element symbol {symbol!r}") from None


def symbol(z: int) -> str:
    try:
        return NUMBER_TO_SYMBOL[z]
    except KeyError:
        raise UnknownElementError(f"unknown atomic number {z}") from None


# standard valences used for implicit-hydrogen filling; multi-valent elements
# list the alternatives in increasing order
VALENCES: dict[int, tuple[int, ...]] = {
    5: (3,),          # B
    6: (4,),          # C
    7: (3, 5),        # N (5 admits as-drawn nitro/azide, normalized later)
    8: (2,),          # O
    9: (1,),          # F
    14: (4,),         # Si
    15: (3, 5),       # P
    16: (2, 4, 6),    # S
    17: (1,),         # Cl
    34: (2, 4, 6),    # Se
    35: (1,),         # Br
    53: (1,),         # I
}

ORGANIC_SUBSET = {"B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I"}

# elements treated as forming organic scaffolds when ranking fragments
ORGANIC_NUMBERS = {SYMBOL_TO_NUMBER[s] for s in ORGANIC_SUBSET} | {1, 14, 34}
