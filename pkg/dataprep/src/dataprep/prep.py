"""CSV-to-JSONL featurization pipeline.

Reads a CSV with a SMILES column and optional label columns, featurizes
each molecule independently (graph, sequence encoding, conformer ensemble,
scaffold key, fingerprint), and writes one JSON object per line in the
schema the training stack consumes, plus a manifest with counts and a skip
log. Unparsable rows are skipped and logged, never half-written. Output
order follows input order and the whole run is deterministic.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field

import numpy as np

from dataprep.chem import PrepError, parse_smiles
from dataprep.conformers import embed_conformers
from dataprep.fingerprint import circular_fingerprint, fingerprint_b64
from dataprep.scaffold import scaffold_key
from dataprep.selfies_enc import encode_selfies

TOOLKIT_VERSION = "dataprep/0.1.0"


@dataclass
class PrepConfig:
    input_path: str
    output_path: str
    smiles_column: str = "smiles"
    label_columns: tuple = ()
    n_conformers: int = 5
    conformer_seed: int = 42
    temperature: float = 298.0  # recorded in the manifest, not applied here
    context_dim: int = 4
    max_molecules: int = None

    def __post_init__(self):
        self.label_columns = tuple(self.label_columns)
        if self.n_conformers < 1:
            raise ValueError(f"n_conformers must be >= 1, got {self.n_conformers}")
        if self.temperature <= 0:
            raise ValueError(f"temperature must be positive, got {self.temperature}")
        if self.context_dim < 1:
            raise ValueError(f"context_dim must be >= 1, got {self.context_dim}")

    @property
    def manifest_path(self):
        return self.output_path + ".manifest.json"


def prep_molecule(smiles: str, labels, mol_id: str, cfg: PrepConfig) -> dict:
    """Featurize one molecule into a record dict; raises PrepError on failure."""
    mol = parse_smiles(smiles)
    conformers = embed_conformers(mol, k=cfg.n_conformers, seed=cfg.conformer_seed)
    fp = circular_fingerprint(mol)
    return {
        "id": mol_id,
        "selfies": encode_selfies(mol),
        "atoms": [{"element": a.element, "degree": a.degree,
                   "formal_charge": a.formal_charge, "num_h": a.num_h,
                   "hybridization": a.hybridization} for a in mol.atoms],
        "bonds": [[b.i, b.j, b.order] for b in mol.bonds],
        "conformers": [{"coords": np.round(coords, 6).tolist(),
                        "energy": round(float(energy), 6)}
                       for coords, energy in conformers],
        "labels": list(labels),
        "context": [0.0] * cfg.context_dim,
        "scaffold": scaffold_key(mol),
        "fingerprint_b64": fingerprint_b64(fp),
        "smiles": smiles,
    }


def _parse_labels(row, columns, lineno):
    labels = []
    for col in columns:
        raw = (row.get(col) or "").strip()
        if raw == "":
            labels.append(None)
            continue
        try:
            labels.append(float(raw))
        except ValueError:
            raise PrepError(f"row {lineno}: label {col!r} is not numeric: {raw!r}")
    return labels


def prep_dataset(cfg: PrepConfig) -> dict:
    """Run the pipeline over a CSV; write JSONL and manifest, return the manifest."""
    with open(cfg.input_path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        fields = reader.fieldnames or []
        missing = [c for c in (cfg.smiles_column,) + cfg.label_columns
                   if c not in fields]
        if missing:
            raise ValueError(
                f"input CSV {cfg.input_path} is missing column(s): {missing} "
                f"(found {fields})")
        rows = list(reader)
    if cfg.max_molecules is not None:
        rows = rows[:cfg.max_molecules]

    records, skipped = [], []
    for i, row in enumerate(rows):
        smiles = (row.get(cfg.smiles_column) or "").strip()
        mol_id = f"mol-{i:05d}"
        try:
            labels = _parse_labels(row, cfg.label_columns, i + 2)
            records.append(prep_molecule(smiles, labels, mol_id, cfg))
        except PrepError as exc:
            skipped.append({"row": i + 2, "smiles": smiles, "reason": str(exc)})

    out_dir = os.path.dirname(os.path.abspath(cfg.output_path))
    os.makedirs(out_dir, exist_ok=True)
    with open(cfg.output_path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")

    manifest = {
        "input": os.path.basename(cfg.input_path),
        "output": os.path.basename(cfg.output_path),
        "rows_read": len(rows),
        "count": len(records),
        "skipped": skipped,
        "task_names": list(cfg.label_columns),
        "n_conformers": cfg.n_conformers,
        "conformer_seed": cfg.conformer_seed,
        "temperature": cfg.temperature,
        "toolkit_version": TOOLKIT_VERSION,
    }
    with open(cfg.manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest
