"""Bracket-token string encoding of molecular graphs.

Produces a deterministic depth-first serialization using only bracketed
tokens, the format the downstream sequence tokenizer expects: atom tokens
like [C], [=O], or [c] (lowercase for aromatic atoms, with the bond order
to the parent as a prefix), [Branch] before each non-final child subtree,
and [Ring] where depth-first traversal meets an already-visited atom.
"""

from __future__ import annotations

from dataprep.chem import Molecule

_BOND_PREFIX = {1: "", 2: "=", 3: "#", "aromatic": ""}


def _atom_token(mol: Molecule, idx: int, order) -> str:
    atom = mol.atoms[idx]
    sym = atom.element.lower() if atom.aromatic else atom.element
    token = _BOND_PREFIX[order] + sym
    if atom.formal_charge > 0:
        token += "+" * atom.formal_charge
    elif atom.formal_charge < 0:
        token += "-" * (-atom.formal_charge)
    return f"[{token}]"


def encode_selfies(mol: Molecule) -> str:
    """Depth-first bracket-token serialization starting from atom 0."""
    visited = set()
    closed_rings = set()
    tokens = []

    def walk(idx, parent, order):
        visited.add(idx)
        tokens.append(_atom_token(mol, idx, order))
        forward = []
        for j, bond_order in sorted(mol.neighbors(idx)):
            if j == parent:
                continue
            if j in visited:
                pair = (min(idx, j), max(idx, j))
                if pair not in closed_rings:
                    closed_rings.add(pair)
                    tokens.append("[Ring]")
            else:
                forward.append((j, bond_order))
        for pos, (j, bond_order) in enumerate(forward):
            if j in visited:
                continue
            if pos < len(forward) - 1:
                tokens.append("[Branch]")
            walk(j, idx, bond_order)

    walk(0, -1, 1)
    return "".join(tokens)
