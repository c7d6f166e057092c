"""Hashed circular fingerprints (radius-2 neighborhood hashing, 2048 bits)."""

from __future__ import annotations

import base64
import hashlib

import numpy as np

from dataprep.chem import Molecule

N_BITS = 2048
RADIUS = 2


def _stable_int(text: str) -> int:
    return int.from_bytes(hashlib.sha1(text.encode("utf-8")).digest()[:8], "big")


def circular_fingerprint(mol: Molecule, n_bits: int = N_BITS,
                         radius: int = RADIUS) -> np.ndarray:
    """Boolean bit vector; invariant to atom numbering of the input."""
    adj = {i: [] for i in range(len(mol.atoms))}
    for b in mol.bonds:
        adj[b.i].append((b.j, str(b.order)))
        adj[b.j].append((b.i, str(b.order)))
    ids = []
    for a in mol.atoms:
        ids.append(_stable_int(
            f"{a.element}|{a.degree}|{a.formal_charge}|{a.num_h}|"
            f"{a.aromatic}|{a.in_ring}"))
    bits = np.zeros(n_bits, dtype=bool)
    for i in ids:
        bits[i % n_bits] = True
    for _ in range(radius):
        new_ids = []
        for i, old in enumerate(ids):
            env = sorted(f"{order}:{ids[j]}" for j, order in adj[i])
            new_ids.append(_stable_int(f"{old}|{','.join(env)}"))
        ids = new_ids
        for i in ids:
            bits[i % n_bits] = True
    return bits


def fingerprint_b64(bits: np.ndarray) -> str:
    packed = np.packbits(bits.astype(np.uint8))
    return base64.b64encode(packed.tobytes()).decode("ascii")
