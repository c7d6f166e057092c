"""Synthetic molecule generators for verification and overfit oracles."""

from __future__ import annotations

import numpy as np

from .records import ELEMENTS, HYBRIDIZATIONS, AtomSpec, Conformer, MoleculeRecord

_ELEMS = ["C", "N", "O", "S"]
_TOKENS = {"C": "[C]", "N": "[N]", "O": "[O]", "S": "[S]"}


def random_record(rng: np.random.Generator, rec_id: str, n_atoms=None, k=3, n_tasks=1,
                  context_dim=8, scaffold_key=None, coord_scale=1.5) -> MoleculeRecord:
    """A chemically meaningless but schema-valid random molecule (chain graph)."""
    n = int(n_atoms if n_atoms is not None else rng.integers(4, 10))
    elems = [_ELEMS[rng.integers(len(_ELEMS))] for _ in range(n)]
    atoms = [AtomSpec(element=e,
                      degree=1 if i in (0, n - 1) and n > 1 else min(2, n - 1),
                      formal_charge=0,
                      num_h=int(rng.integers(0, 4)),
                      hybridization="SP3")
             for i, e in enumerate(elems)]
    bonds = [(i, i + 1, 1) for i in range(n - 1)]
    conformers = []
    for _ in range(k):
        coords = rng.normal(0.0, coord_scale, size=(n, 3))
        energy = float(rng.normal(0.0, 1.0))
        conformers.append(Conformer(coords=coords, energy=energy))
    labels = [float(rng.integers(2)) for _ in range(n_tasks)]
    return MoleculeRecord(
        id=rec_id,
        selfies="".join(_TOKENS[e] for e in elems),
        atoms=atoms, bonds=bonds, conformers=conformers, labels=labels,
        context=[0.0] * context_dim,
        scaffold_key=scaffold_key if scaffold_key is not None else rec_id,
    )


def geometry_labelled_dataset(n_pairs=16, k=3, context_dim=8, seed=7):
    """Pairs sharing SELFIES and graph but differing in 3D extent.

    The compact twin (tight coil) is labelled 0; the extended twin (straight
    chain, 2.5 A spacing) is labelled 1. Sequence and graph views are
    identical within a pair, so only the 3D pathway can separate the classes.
    """
    rng = np.random.default_rng(seed)
    records = []
    for p in range(n_pairs):
        n = int(rng.integers(5, 9))
        elems = [_ELEMS[rng.integers(len(_ELEMS))] for _ in range(n)]
        atoms = [AtomSpec(element=e,
                          degree=1 if i in (0, n - 1) else 2,
                          formal_charge=0, num_h=2, hybridization="SP3")
                 for i, e in enumerate(elems)]
        bonds = [(i, i + 1, 1) for i in range(n - 1)]
        selfies = "".join(_TOKENS[e] for e in elems)
        for extended in (0, 1):
            conformers = []
            for ck in range(k):
                jitter = rng.normal(0.0, 0.05, size=(n, 3))
                if extended:
                    base = np.stack([np.arange(n) * 2.5, np.zeros(n), np.zeros(n)], axis=1)
                else:
                    angles = np.arange(n) * 2.2
                    base = np.stack([0.7 * np.cos(angles), 0.7 * np.sin(angles),
                                     0.15 * np.arange(n)], axis=1)
                conformers.append(Conformer(coords=base + jitter,
                                            energy=float(rng.normal(0.0, 0.5))))
            records.append(MoleculeRecord(
                id=f"pair{p}_{'ext' if extended else 'cmp'}",
                selfies=selfies, atoms=atoms, bonds=bonds, conformers=conformers,
                labels=[float(extended)], context=[0.0] * context_dim,
                scaffold_key=f"scaf{p}_{extended}",
            ))
    return records
