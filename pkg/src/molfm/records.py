"""Molecule records: JSONL parsing, SELFIES tokenization, atom features, Boltzmann weights."""

from __future__ import annotations

import base64
import json
import math
import re
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

MAX_SEQ_LEN = 256
PAD_ID, UNK_ID, MASK_ID = 0, 1, 2
RESERVED_TOKENS = ("<pad>", "<unk>", "<mask>")

# Gas constant in kcal/(mol*K); MMFF94 energies are per-mole quantities.
GAS_CONSTANT_KCAL = 0.0019872

ELEMENTS = ["C", "N", "O", "S", "F", "Cl", "Br", "I", "P", "B", "Si", "Se", "H", "Na", "K", "OTHER"]
HYBRIDIZATIONS = ["S", "SP", "SP2", "SP3", "SP3D", "OTHER"]

N_ELEMENT = len(ELEMENTS)          # 16
N_DEGREE = 6                       # 0-4, >=5
N_CHARGE = 5                       # -2..+2
N_NUM_H = 5                        # 0-3, >=4
N_HYBRID = len(HYBRIDIZATIONS)     # 6
ATOM_FEATURE_DIM = N_ELEMENT + N_DEGREE + N_CHARGE + N_NUM_H + N_HYBRID  # 38

FINGERPRINT_BITS = 2048

_TOKEN_RE = re.compile(r"\[[^\[\]]*\]")


class DatasetError(ValueError):
    """Malformed dataset content; carries the offending line number when known."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass
class AtomSpec:
    element: str
    degree: int
    formal_charge: int
    num_h: int
    hybridization: str


@dataclass
class Conformer:
    coords: np.ndarray  # (n_atoms, 3), Angstrom
    energy: float       # kcal/mol


@dataclass
class MoleculeRecord:
    id: str
    selfies: str
    atoms: list
    bonds: list                      # (i, j, order) with order in {1,2,3,"aromatic"}
    conformers: list
    labels: list                     # per-task float or None (missing)
    context: list
    scaffold_key: str
    fingerprint: Optional[np.ndarray] = None  # bool array of length 2048


@dataclass
class Vocabulary:
    token_to_id: dict
    id_to_token: list = field(default_factory=list)

    def __post_init__(self):
        if not self.id_to_token:
            self.id_to_token = [None] * len(self.token_to_id)
            for tok, i in self.token_to_id.items():
                self.id_to_token[i] = tok

    def __len__(self):
        return len(self.token_to_id)


@dataclass
class TokenSequence:
    ids: np.ndarray   # int array, length MAX_SEQ_LEN
    mask: np.ndarray  # bool array, True = real token


def split_selfies(s: str) -> list:
    """Split a SELFIES string into its bracketed tokens, validating coverage."""
    tokens = _TOKEN_RE.findall(s)
    if "".join(tokens) != s:
        raise ValueError(f"malformed SELFIES string (stray characters or unbalanced brackets): {s!r}")
    return tokens


def build_vocab(corpus) -> Vocabulary:
    """Deterministic vocabulary: reserved ids then tokens sorted lexicographically."""
    corpus = list(corpus)
    if not corpus:
        raise ValueError("empty corpus")
    seen = set()
    for s in corpus:
        try:
            seen.update(split_selfies(s))
        except ValueError as exc:
            raise ValueError(f"tokenization failed for {s!r}: {exc}") from exc
    token_to_id = {tok: i for i, tok in enumerate(RESERVED_TOKENS)}
    for tok in sorted(seen):
        token_to_id[tok] = len(token_to_id)
    return Vocabulary(token_to_id)


def tokenize_selfies(s: str, vocab: Vocabulary) -> TokenSequence:
    tokens = split_selfies(s)[:MAX_SEQ_LEN]
    ids = np.full(MAX_SEQ_LEN, PAD_ID, dtype=np.int64)
    mask = np.zeros(MAX_SEQ_LEN, dtype=bool)
    for i, tok in enumerate(tokens):
        ids[i] = vocab.token_to_id.get(tok, UNK_ID)
        mask[i] = True
    return TokenSequence(ids=ids, mask=mask)


def detokenize(seq: TokenSequence, vocab: Vocabulary) -> str:
    return "".join(vocab.id_to_token[i] for i, m in zip(seq.ids, seq.mask) if m)


def atom_features(a: AtomSpec) -> np.ndarray:
    """38-d concatenated one-hots; out-of-range values clamp to the last bucket."""
    vec = np.zeros(ATOM_FEATURE_DIM, dtype=np.float64)
    off = 0
    idx = ELEMENTS.index(a.element) if a.element in ELEMENTS else N_ELEMENT - 1
    vec[off + idx] = 1.0
    off += N_ELEMENT
    vec[off + min(max(a.degree, 0), N_DEGREE - 1)] = 1.0
    off += N_DEGREE
    vec[off + min(max(a.formal_charge + 2, 0), N_CHARGE - 1)] = 1.0
    off += N_CHARGE
    vec[off + min(max(a.num_h, 0), N_NUM_H - 1)] = 1.0
    off += N_NUM_H
    idx = HYBRIDIZATIONS.index(a.hybridization) if a.hybridization in HYBRIDIZATIONS else N_HYBRID - 1
    vec[off + idx] = 1.0
    return vec


def element_class(a: AtomSpec) -> int:
    """Element-block index (0..15); target class for masked-atom prediction."""
    return ELEMENTS.index(a.element) if a.element in ELEMENTS else N_ELEMENT - 1


def boltzmann_weights(energies, temperature: float = 298.0) -> np.ndarray:
    """Normalized exp(-E/RT); shift-invariant in the energies."""
    energies = np.asarray(energies, dtype=np.float64)
    if energies.size == 0:
        raise ValueError("empty energy list")
    if not np.all(np.isfinite(energies)):
        raise ValueError("non-finite conformer energy")
    if temperature <= 0:
        raise ValueError(f"temperature must be positive: {temperature}")
    rt = GAS_CONSTANT_KCAL * temperature
    logits = -(energies - energies.min()) / rt
    w = np.exp(logits)
    return w / w.sum()


def _require(cond, msg, line):
    if not cond:
        raise DatasetError(msg, line)


def _parse_record(obj: dict, line: int, n_tasks, context_dim) -> MoleculeRecord:
    required = ["id", "selfies", "atoms", "bonds", "conformers", "labels", "context", "scaffold"]
    for key in required:
        _require(key in obj, f"missing required field '{key}'", line)

    atoms = []
    for i, a in enumerate(obj["atoms"]):
        for key in ("element", "degree", "formal_charge", "num_h", "hybridization"):
            _require(key in a, f"atom {i}: missing field '{key}'", line)
        atoms.append(AtomSpec(a["element"], int(a["degree"]), int(a["formal_charge"]),
                              int(a["num_h"]), a["hybridization"]))
    n_atoms = len(atoms)
    _require(n_atoms >= 1, "molecule has no atoms", line)

    bonds, seen_pairs = [], set()
    for b in obj["bonds"]:
        _require(len(b) == 3, f"bond entry must be [i, j, order]: {b}", line)
        i, j, order = int(b[0]), int(b[1]), b[2]
        _require(0 <= i < n_atoms and 0 <= j < n_atoms, f"bond index out of range: ({i},{j})", line)
        _require(i != j, f"self-bond on atom {i}", line)
        key = (min(i, j), max(i, j))
        _require(key not in seen_pairs, f"duplicate bond ({i},{j})", line)
        seen_pairs.add(key)
        _require(order in (1, 2, 3, "aromatic"), f"bad bond order {order!r}", line)
        bonds.append((i, j, order))

    conformers = []
    _require(len(obj["conformers"]) >= 1, "record must have at least one conformer", line)
    for k, c in enumerate(obj["conformers"]):
        _require("coords" in c and "energy" in c, f"conformer {k}: missing coords/energy", line)
        coords = np.asarray(c["coords"], dtype=np.float64)
        _require(coords.ndim == 2 and coords.shape[1] == 3,
                 f"conformer {k}: coords must be triples", line)
        _require(coords.shape[0] == n_atoms,
                 f"conformer {k}: {coords.shape[0]} coords for {n_atoms} atoms", line)
        _require(bool(np.all(np.isfinite(coords))), f"conformer {k}: non-finite coords", line)
        energy = float(c["energy"])
        _require(math.isfinite(energy), f"conformer {k}: non-finite energy", line)
        conformers.append(Conformer(coords=coords, energy=energy))

    labels = [None if v is None else float(v) for v in obj["labels"]]
    if n_tasks is not None:
        _require(len(labels) == n_tasks,
                 f"labels length {len(labels)} != dataset task count {n_tasks}", line)
    context = [float(v) for v in obj["context"]]
    if context_dim is not None:
        _require(len(context) == context_dim,
                 f"context length {len(context)} != dataset context dim {context_dim}", line)

    fingerprint = None
    if obj.get("fingerprint_b64"):
        try:
            raw = base64.b64decode(obj["fingerprint_b64"], validate=True)
        except Exception as exc:
            raise DatasetError(f"bad fingerprint_b64: {exc}", line) from exc
        _require(len(raw) == FINGERPRINT_BITS // 8,
                 f"fingerprint must decode to {FINGERPRINT_BITS // 8} bytes, got {len(raw)}", line)
        fingerprint = np.unpackbits(np.frombuffer(raw, dtype=np.uint8)).astype(bool)

    return MoleculeRecord(
        id=str(obj["id"]), selfies=str(obj["selfies"]), atoms=atoms, bonds=bonds,
        conformers=conformers, labels=labels, context=context,
        scaffold_key=str(obj["scaffold"]), fingerprint=fingerprint,
    )


def parse_dataset(stream) -> list:
    """Parse JSON Lines into records, preserving file order.

    `stream` is an iterable of lines (an open text file works). Raises
    DatasetError with the 1-based line number on the first invalid record.
    """
    records = []
    n_tasks = context_dim = None
    for lineno, raw in enumerate(stream, start=1):
        stripped = raw.strip()
        if not stripped:
            continue
        try:
            obj = json.loads(stripped)
        except json.JSONDecodeError as exc:
            raise DatasetError(f"malformed JSON: {exc}", lineno) from exc
        rec = _parse_record(obj, lineno, n_tasks, context_dim)
        if n_tasks is None:
            n_tasks, context_dim = len(rec.labels), len(rec.context)
        records.append(rec)
    return records


def parse_dataset_file(path) -> list:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_dataset(fh)
