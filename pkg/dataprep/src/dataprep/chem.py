"""Minimal SMILES parser producing heavy-atom molecular graphs.

Supports the organic subset (B, C, N, O, P, S, F, Cl, Br, I plus aromatic
b, c, n, o, p, s), bracket atoms with explicit hydrogen counts and formal
charges, branches, ring closures (including %nn), and bond symbols
- = # : / \\. Stereo markers are accepted and ignored. Implicit hydrogen
counts follow the usual default valences; aromatic bonds contribute 1.5
to the valence sum.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

# Default valences for implicit hydrogen counting on organic-subset atoms.
DEFAULT_VALENCE = {"B": 3, "C": 4, "N": 3, "O": 2, "P": 3, "S": 2,
                   "F": 1, "Cl": 1, "Br": 1, "I": 1}
AROMATIC_SYMBOLS = {"b": "B", "c": "C", "n": "N", "o": "O", "p": "P", "s": "S"}
# Elements accepted inside brackets (hydrogen counts are explicit there).
BRACKET_ELEMENTS = set(DEFAULT_VALENCE) | {"H", "Si", "Se", "Na", "K", "Li", "Mg", "Ca", "Zn"}
BOND_SYMBOLS = {"-": 1, "=": 2, "#": 3, ":": "aromatic", "/": 1, "\\": 1}

_BRACKET_RE = re.compile(
    r"\[(?P<isotope>\d*)"
    r"(?P<symbol>[A-Z][a-z]?|[bcnops])"
    r"(?P<chiral>@{1,2})?"
    r"(?P<hcount>H\d*)?"
    r"(?P<charge>\+\d+|-\d+|\++|-+)?"
    r"\]")


class PrepError(ValueError):
    """Unparsable or unsupported input molecule."""


@dataclass
class Atom:
    element: str
    aromatic: bool = False
    formal_charge: int = 0
    explicit_h: int = None  # None means derive from default valence
    # Derived after parsing:
    degree: int = 0
    num_h: int = 0
    hybridization: str = "SP3"
    in_ring: bool = False


@dataclass
class Bond:
    i: int
    j: int
    order: object  # 1, 2, 3, or "aromatic"


@dataclass
class Molecule:
    atoms: list = field(default_factory=list)
    bonds: list = field(default_factory=list)
    smiles: str = ""

    def neighbors(self, i):
        out = []
        for b in self.bonds:
            if b.i == i:
                out.append((b.j, b.order))
            elif b.j == i:
                out.append((b.i, b.order))
        return out


def _parse_bracket(token, pos):
    m = _BRACKET_RE.fullmatch(token)
    if m is None:
        raise PrepError(f"bad bracket atom {token!r} at position {pos}")
    sym = m.group("symbol")
    aromatic = sym in AROMATIC_SYMBOLS
    element = AROMATIC_SYMBOLS.get(sym, sym)
    if element not in BRACKET_ELEMENTS:
        raise PrepError(f"unsupported element {element!r} in bracket atom {token!r}")
    h = m.group("hcount")
    if h is None:
        explicit_h = 0
    else:
        explicit_h = int(h[1:]) if len(h) > 1 else 1
    charge_s = m.group("charge")
    if charge_s is None:
        charge = 0
    elif charge_s[-1].isdigit():
        charge = int(charge_s[1:]) * (1 if charge_s[0] == "+" else -1)
    else:
        charge = len(charge_s) * (1 if charge_s[0] == "+" else -1)
    return Atom(element=element, aromatic=aromatic, formal_charge=charge,
                explicit_h=explicit_h)


def parse_smiles(smiles: str) -> Molecule:
    """Parse a SMILES string into a heavy-atom graph.

    Raises PrepError on syntax errors, unsupported features (disconnected
    components), or unknown elements.
    """
    if not smiles or not smiles.strip():
        raise PrepError("empty SMILES string")
    smiles = smiles.strip()
    mol = Molecule(smiles=smiles)
    prev = None            # index of the atom a new bond attaches to
    pending_order = None   # explicit bond symbol awaiting the next atom
    branch_stack = []
    ring_open = {}         # closure digit -> (atom index, pending order)
    seen_pairs = set()

    def add_atom(atom):
        nonlocal prev, pending_order
        idx = len(mol.atoms)
        mol.atoms.append(atom)
        if prev is not None:
            add_bond(prev, idx, pending_order)
        pending_order = None
        prev = idx

    def add_bond(i, j, order):
        if i == j:
            raise PrepError(f"self-bond on atom {i}")
        key = (min(i, j), max(i, j))
        if key in seen_pairs:
            raise PrepError(f"duplicate bond between atoms {i} and {j}")
        seen_pairs.add(key)
        if order is None:
            both_aromatic = mol.atoms[i].aromatic and mol.atoms[j].aromatic
            order = "aromatic" if both_aromatic else 1
        mol.bonds.append(Bond(i, j, order))

    pos = 0
    n = len(smiles)
    while pos < n:
        ch = smiles[pos]
        if ch == "[":
            end = smiles.find("]", pos)
            if end < 0:
                raise PrepError(f"unclosed bracket at position {pos}")
            add_atom(_parse_bracket(smiles[pos:end + 1], pos))
            pos = end + 1
        elif ch.isupper():
            sym = ch
            if pos + 1 < n and smiles[pos:pos + 2] in ("Cl", "Br"):
                sym = smiles[pos:pos + 2]
            if sym not in DEFAULT_VALENCE:
                raise PrepError(f"unsupported element {sym!r} at position {pos}")
            add_atom(Atom(element=sym))
            pos += len(sym)
        elif ch in AROMATIC_SYMBOLS:
            add_atom(Atom(element=AROMATIC_SYMBOLS[ch], aromatic=True))
            pos += 1
        elif ch in BOND_SYMBOLS:
            if pending_order is not None:
                raise PrepError(f"two bond symbols in a row at position {pos}")
            pending_order = BOND_SYMBOLS[ch]
            pos += 1
        elif ch.isdigit() or ch == "%":
            if prev is None:
                raise PrepError(f"ring closure before any atom at position {pos}")
            if ch == "%":
                if pos + 2 >= n or not smiles[pos + 1:pos + 3].isdigit():
                    raise PrepError(f"bad %nn ring closure at position {pos}")
                num = smiles[pos + 1:pos + 3]
                pos += 3
            else:
                num = ch
                pos += 1
            if num in ring_open:
                other, open_order = ring_open.pop(num)
                order = pending_order if pending_order is not None else open_order
                add_bond(other, prev, order)
            else:
                ring_open[num] = (prev, pending_order)
            pending_order = None
        elif ch == "(":
            if prev is None:
                raise PrepError("branch opened before any atom")
            branch_stack.append(prev)
            pos += 1
        elif ch == ")":
            if not branch_stack:
                raise PrepError(f"unmatched ')' at position {pos}")
            prev = branch_stack.pop()
            pos += 1
        elif ch == ".":
            raise PrepError("disconnected components are not supported")
        else:
            raise PrepError(f"unexpected character {ch!r} at position {pos}")

    if branch_stack:
        raise PrepError("unclosed branch parenthesis")
    if ring_open:
        raise PrepError(f"unclosed ring closure(s): {sorted(ring_open)}")
    if pending_order is not None:
        raise PrepError("dangling bond symbol at end of string")
    if not mol.atoms:
        raise PrepError("no atoms parsed")

    _finalize(mol)
    return mol


def _finalize(mol: Molecule):
    """Derive degree, implicit hydrogens, hybridization, and ring flags."""
    order_sum = [0.0] * len(mol.atoms)
    degree = [0] * len(mol.atoms)
    has_double = [False] * len(mol.atoms)
    has_triple = [False] * len(mol.atoms)
    for b in mol.bonds:
        value = 1.5 if b.order == "aromatic" else float(b.order)
        for end in (b.i, b.j):
            order_sum[end] += value
            degree[end] += 1
            if b.order == 2:
                has_double[end] = True
            elif b.order == 3:
                has_triple[end] = True

    in_ring = _ring_membership(mol)
    for i, atom in enumerate(mol.atoms):
        atom.degree = degree[i]
        atom.in_ring = in_ring[i]
        if atom.explicit_h is not None:
            atom.num_h = atom.explicit_h
        else:
            valence = DEFAULT_VALENCE.get(atom.element)
            if valence is None:
                raise PrepError(f"no default valence for element {atom.element!r}")
            atom.num_h = max(0, int(round(valence + atom.formal_charge - order_sum[i])))
        if has_triple[i]:
            atom.hybridization = "SP"
        elif atom.aromatic or has_double[i]:
            atom.hybridization = "SP2"
        else:
            atom.hybridization = "SP3"


def _ring_membership(mol: Molecule) -> list:
    """Per-atom ring flags via bridge detection (non-bridge edge => in a cycle)."""
    n = len(mol.atoms)
    adj = [[] for _ in range(n)]
    for e, b in enumerate(mol.bonds):
        adj[b.i].append((b.j, e))
        adj[b.j].append((b.i, e))
    disc = [-1] * n
    low = [0] * n
    is_bridge = [False] * len(mol.bonds)
    timer = [0]

    def dfs(root):
        # Iterative DFS so deep chains cannot overflow the stack.
        stack = [(root, -1, iter(adj[root]))]
        disc[root] = low[root] = timer[0]
        timer[0] += 1
        while stack:
            u, parent_edge, it = stack[-1]
            advanced = False
            for v, e in it:
                if e == parent_edge:
                    continue
                if disc[v] == -1:
                    disc[v] = low[v] = timer[0]
                    timer[0] += 1
                    stack.append((v, e, iter(adj[v])))
                    advanced = True
                    break
                low[u] = min(low[u], disc[v])
            if not advanced:
                stack.pop()
                if stack:
                    pu = stack[-1][0]
                    low[pu] = min(low[pu], low[u])
                    if low[u] > disc[pu]:
                        is_bridge[parent_edge] = True

    for i in range(n):
        if disc[i] == -1:
            dfs(i)

    flags = [False] * n
    for e, b in enumerate(mol.bonds):
        if not is_bridge[e]:
            flags[b.i] = True
            flags[b.j] = True
    return flags
