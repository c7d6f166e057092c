"""Deterministic coarse 3D embedding with pseudo force-field energies.

Conformers are generated by jittered breadth-first chain layout followed by
steepest-descent relaxation of a toy potential (harmonic bonds plus a
short-range nonbonded repulsion). Energies are the relaxed potential values
in kcal/mol-like units; they are crude but finite, deterministic, and vary
across conformers, which is all the downstream ensemble weighting needs.
"""

from __future__ import annotations

import numpy as np

from dataprep.chem import Molecule, PrepError

BOND_LENGTH = 1.5          # target heavy-atom bond length, Angstrom
REPULSION_CUTOFF = 2.4     # nonbonded pairs closer than this are penalized
BOND_K = 30.0              # kcal/mol/A^2
REPULSION_K = 10.0         # kcal/mol/A^2
ATTRACT_K = 0.02           # weak compaction term so minima differ by fold
RELAX_STEPS = 80


def _bfs_order(mol: Molecule):
    n = len(mol.atoms)
    order, seen = [], set()
    parent = [-1] * n
    queue = [0]
    seen.add(0)
    while queue:
        u = queue.pop(0)
        order.append(u)
        for v, _ in sorted(mol.neighbors(u)):
            if v not in seen:
                seen.add(v)
                parent[v] = u
                queue.append(v)
    if len(order) != n:
        raise PrepError("molecule graph is disconnected")
    return order, parent


def _initial_coords(mol: Molecule, rng: np.random.Generator) -> np.ndarray:
    """Place each atom near its BFS parent with a random offset."""
    n = len(mol.atoms)
    coords = np.zeros((n, 3))
    order, parent = _bfs_order(mol)
    for u in order:
        if parent[u] < 0:
            continue
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction) + 1e-12
        coords[u] = coords[parent[u]] + BOND_LENGTH * direction + 0.1 * rng.normal(size=3)
    return coords


def _energy_and_grad(mol: Molecule, coords: np.ndarray):
    n = coords.shape[0]
    grad = np.zeros_like(coords)
    energy = 0.0
    bonded = {(min(b.i, b.j), max(b.i, b.j)) for b in mol.bonds}
    for b in mol.bonds:
        d = coords[b.i] - coords[b.j]
        r = np.linalg.norm(d) + 1e-12
        diff = r - BOND_LENGTH
        energy += BOND_K * diff * diff
        g = 2.0 * BOND_K * diff * d / r
        grad[b.i] += g
        grad[b.j] -= g
    for i in range(n):
        for j in range(i + 1, n):
            if (i, j) in bonded:
                continue
            d = coords[i] - coords[j]
            r = np.linalg.norm(d) + 1e-12
            if r < REPULSION_CUTOFF:
                diff = REPULSION_CUTOFF - r
                energy += REPULSION_K * diff * diff
                g = -2.0 * REPULSION_K * diff * d / r
                grad[i] += g
                grad[j] -= g
            # Weak quadratic attraction between all nonbonded pairs; it
            # frustrates the repulsion so different starting folds settle
            # into minima with distinct energies.
            energy += ATTRACT_K * r * r
            g = 2.0 * ATTRACT_K * d
            grad[i] += g
            grad[j] -= g
    return energy, grad


def _relax(mol: Molecule, coords: np.ndarray, step: float = 0.01):
    """Steepest descent with backtracking: a step is kept only if it lowers
    the energy, otherwise the step size is halved. This keeps the stiff bond
    term from oscillating."""
    energy, grad = _energy_and_grad(mol, coords)
    for _ in range(RELAX_STEPS):
        trial = coords - step * grad
        trial_energy, trial_grad = _energy_and_grad(mol, trial)
        if np.isfinite(trial_energy) and trial_energy < energy:
            coords, energy, grad = trial, trial_energy, trial_grad
            step *= 1.2
        else:
            step *= 0.5
            if step < 1e-6:
                break
    return coords, float(energy)


def embed_conformers(mol: Molecule, k: int = 5, seed: int = 42):
    """Return k (coords, energy) pairs; deterministic for a given molecule.

    The generator is reseeded per molecule, so output does not depend on
    which other molecules were processed before. If a relaxation produces
    non-finite values the attempt is retried once with a smaller step; a
    second failure raises PrepError so the caller can skip the molecule.
    """
    if k < 1:
        raise ValueError(f"conformer count must be >= 1, got {k}")
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(k):
        init = _initial_coords(mol, rng)
        coords, energy = _relax(mol, init)
        if not (np.all(np.isfinite(coords)) and np.isfinite(energy)):
            coords, energy = _relax(mol, init, step=0.005)
            if not (np.all(np.isfinite(coords)) and np.isfinite(energy)):
                raise PrepError("conformer embedding failed to converge")
        out.append((coords, energy))
    return out
