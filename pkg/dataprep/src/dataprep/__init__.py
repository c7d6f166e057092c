"""Featurization pipeline: SMILES CSV in, model-ready JSONL out."""

from dataprep.chem import Atom, Bond, Molecule, PrepError, parse_smiles
from dataprep.prep import PrepConfig, prep_dataset, prep_molecule

__all__ = [
    "Atom", "Bond", "Molecule", "PrepError", "parse_smiles",
    "PrepConfig", "prep_dataset", "prep_molecule",
]

__version__ = "0.1.0"
