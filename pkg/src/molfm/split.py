"""Scaffold-grouped dataset splitting and split audits."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field


@dataclass
class SplitSpec:
    ratios: tuple = (0.8, 0.1, 0.1)
    seed: int = 0
    assignment: dict = field(default_factory=dict)  # record id -> "train"|"val"|"test"

    def part(self, name):
        return [rid for rid, p in self.assignment.items() if p == name]

    def to_json(self) -> dict:
        return {"train": self.part("train"), "val": self.part("val"), "test": self.part("test")}

    @classmethod
    def from_json(cls, doc: dict, ratios=(0.8, 0.1, 0.1), seed=0) -> "SplitSpec":
        assignment = {}
        for part in ("train", "val", "test"):
            for rid in doc.get(part, []):
                assignment[rid] = part
        return cls(ratios=ratios, seed=seed, assignment=assignment)


def scaffold_split(records, ratios=(0.8, 0.1, 0.1), seed=0) -> SplitSpec:
    """Greedy deterministic scaffold split.

    Scaffold groups ordered by (size descending, key ascending) fill train
    until it holds >= ratios[0] of the molecules, then val likewise, with the
    remainder going to test. The seed is recorded but unused by the greedy
    rule (reserved for a future randomized mode).
    """
    if not records:
        raise ValueError("empty dataset")
    groups = {}
    for rec in records:
        groups.setdefault(rec.scaffold_key, []).append(rec.id)
    ordered = sorted(groups.items(), key=lambda kv: (-len(kv[1]), kv[0]))
    n = len(records)
    train_target = ratios[0] * n
    val_target = ratios[1] * n
    assignment = {}
    counts = {"train": 0, "val": 0, "test": 0}
    for _key, ids in ordered:
        if counts["train"] < train_target:
            part = "train"
        elif counts["val"] < val_target:
            part = "val"
        else:
            part = "test"
        for rid in ids:
            assignment[rid] = part
        counts[part] += len(ids)
    if counts["val"] == 0 or counts["test"] == 0:
        warnings.warn("scaffold split left a part empty (too few scaffold groups)")
    return SplitSpec(ratios=tuple(ratios), seed=seed, assignment=assignment)


def scaffold_overlap_stats(split: SplitSpec, records) -> dict:
    """Audit a split: unique test scaffolds and how many also occur in train.

    The greedy splitter yields 0 overlap by construction; this exists to
    check externally supplied splits.
    """
    by_id = {rec.id: rec.scaffold_key for rec in records}
    train_scaffolds = {by_id[rid] for rid, p in split.assignment.items() if p == "train"}
    test_scaffolds = {by_id[rid] for rid, p in split.assignment.items() if p == "test"}
    overlap = test_scaffolds & train_scaffolds
    return {"unique_test_scaffolds": len(test_scaffolds),
            "overlapping_with_train": len(overlap)}


def save_split(split: SplitSpec, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(split.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_split(path) -> SplitSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return SplitSpec.from_json(json.load(fh))
