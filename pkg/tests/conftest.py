"""Shared helpers: record serialization, tiny configs, synthetic JSONL datasets."""

import base64
import json
import os

import numpy as np
import pytest

from molfm.config import ModelConfig
from molfm.encoders import Encoder1DConfig, Encoder2DConfig, Encoder3DConfig
from molfm.records import MoleculeRecord

FIXTURE_PATH = os.path.join(os.path.dirname(__file__), "..", "data", "fixture.jsonl")


def record_to_obj(rec: MoleculeRecord) -> dict:
    """Serialize a record back into the JSONL schema."""
    obj = {
        "id": rec.id,
        "selfies": rec.selfies,
        "atoms": [{"element": a.element, "degree": a.degree,
                   "formal_charge": a.formal_charge, "num_h": a.num_h,
                   "hybridization": a.hybridization} for a in rec.atoms],
        "bonds": [[i, j, o] for i, j, o in rec.bonds],
        "conformers": [{"coords": np.asarray(c.coords).tolist(), "energy": c.energy}
                       for c in rec.conformers],
        "labels": rec.labels,
        "context": rec.context,
        "scaffold": rec.scaffold_key,
    }
    if rec.fingerprint is not None:
        packed = np.packbits(rec.fingerprint.astype(np.uint8))
        obj["fingerprint_b64"] = base64.b64encode(packed.tobytes()).decode()
    return obj


def write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(record_to_obj(rec)) + "\n")


def small_model_config(n_tasks=1, context_dim=8, vocab_size=32, task_kind="binary_multitask"):
    """A reduced-width configuration for fast training tests."""
    return ModelConfig(
        enc1d=Encoder1DConfig(vocab_size=vocab_size, d_model=32, layers=1, heads=2,
                              d_ff=64, max_len=32, dropout=0.0),
        enc2d=Encoder2DConfig(d_model=32, layers=2, mlp_hidden=32),
        enc3d=Encoder3DConfig(d_model=32, interactions=2, cutoff=10.0, n_rbf=16),
        context_dim=context_dim, n_tasks=n_tasks, task_kind=task_kind,
        head_hidden=16, head_dropout=0.0, fusion_hidden=32, contrastive_dim=16,
    )


@pytest.fixture
def fixture_records():
    from molfm.records import parse_dataset_file
    return parse_dataset_file(FIXTURE_PATH)


def labelled_chain_dataset(n=30, n_tasks=1, seed=3, singleton_scaffolds=True):
    """Random chain molecules with alternating labels and singleton scaffolds.

    With singleton scaffolds and ids r00..r(n-1) the greedy split is the
    sorted prefix, so alternating labels give every part both classes.
    """
    from molfm.synth import random_record
    rng = np.random.default_rng(seed)
    records = []
    for i in range(n):
        rec = random_record(rng, f"r{i:03d}", k=3, n_tasks=n_tasks,
                            scaffold_key=f"r{i:03d}" if singleton_scaffolds else f"s{i % 4}")
        rec.labels = [float((i + t) % 2) for t in range(n_tasks)]
        records.append(rec)
    return records
