"""Scaffold keys: ring-and-linker frameworks hashed canonically.

The framework is what remains after iteratively pruning terminal atoms
(rings plus the linkers connecting them). Acyclic molecules have an empty
framework and share the sentinel key "-". Cyclic frameworks are hashed with
an iterative neighborhood-refinement scheme so that the key depends only on
the framework graph, not on atom numbering in the input SMILES.
"""

from __future__ import annotations

import hashlib

from dataprep.chem import Molecule

ACYCLIC_KEY = "-"
_REFINE_ROUNDS = 4


def _stable_hash(text: str) -> str:
    return hashlib.sha1(text.encode("utf-8")).hexdigest()[:16]


def framework_atoms(mol: Molecule) -> set:
    """Indices surviving iterative removal of degree-1 atoms."""
    alive = set(range(len(mol.atoms)))
    adj = {i: set() for i in alive}
    for b in mol.bonds:
        adj[b.i].add(b.j)
        adj[b.j].add(b.i)
    while True:
        leaves = [i for i in alive if len(adj[i]) <= 1]
        if not leaves:
            return alive
        for leaf in leaves:
            alive.discard(leaf)
            for nb in adj[leaf]:
                adj[nb].discard(leaf)
            adj[leaf] = set()


def scaffold_key(mol: Molecule) -> str:
    """Order-invariant key for the molecule's ring framework."""
    kept = framework_atoms(mol)
    if not kept:
        return ACYCLIC_KEY
    # Neighborhood refinement over the induced subgraph.
    labels = {i: _stable_hash(f"{mol.atoms[i].element}|{mol.atoms[i].aromatic}")
              for i in kept}
    adj = {i: [] for i in kept}
    for b in mol.bonds:
        if b.i in kept and b.j in kept:
            adj[b.i].append((b.j, str(b.order)))
            adj[b.j].append((b.i, str(b.order)))
    for _ in range(_REFINE_ROUNDS):
        new_labels = {}
        for i in kept:
            env = sorted(f"{order}:{labels[j]}" for j, order in adj[i])
            new_labels[i] = _stable_hash(labels[i] + "|" + ",".join(env))
        labels = new_labels
    digest = _stable_hash(",".join(sorted(labels.values())))
    return f"scaffold-{digest}"
