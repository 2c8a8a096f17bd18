from .mol import Atom, Bond, BondOrder, Hybridization, Molecule
from .sdf import SdfError, read_sdf, write_sdf
from .smiles import SmilesError, parse_smiles, randomized_smiles, randomized_traversal
from .standardize import EmptyMoleculeError, perturb_coordinates, standardize

__all__ = [
    "Atom", "Bond", "BondOrder", "Hybridization", "Molecule",
    "SdfError", "read_sdf", "write_sdf",
    "SmilesError", "parse_smiles", "randomized_smiles", "randomized_traversal",
    "EmptyMoleculeError", "perturb_coordinates", "standardize",
]
