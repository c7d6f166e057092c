"""Conformers, scaffold keys, fingerprints, sequence encoding, and the CSV pipeline."""

import base64
import csv
import json
import re

import numpy as np
import pytest

from dataprep.chem import parse_smiles
from dataprep.cli import EXIT_CONFIG, EXIT_DATA, EXIT_OK, main
from dataprep.conformers import embed_conformers
from dataprep.fingerprint import circular_fingerprint, fingerprint_b64
from dataprep.prep import PrepConfig, prep_dataset, prep_molecule
from dataprep.scaffold import scaffold_key
from dataprep.selfies_enc import encode_selfies

BRACKET_TOKENS = re.compile(r"(\[[^\[\]]*\])+")


class TestConformers:
    def test_count_shape_and_finiteness(self):
        mol = parse_smiles("CCOC(=O)C")
        confs = embed_conformers(mol, k=5)
        assert len(confs) == 5
        for coords, energy in confs:
            assert coords.shape == (6, 3)
            assert np.all(np.isfinite(coords))
            assert np.isfinite(energy)

    def test_deterministic_and_independent_of_k(self):
        mol = parse_smiles("c1ccncc1")
        a = embed_conformers(mol, k=3)
        b = embed_conformers(mol, k=5)
        for (ca, ea), (cb, eb) in zip(a, b[:3]):
            np.testing.assert_array_equal(ca, cb)
            assert ea == eb

    def test_conformers_are_distinct(self):
        mol = parse_smiles("CC(C)(C)O")
        confs = embed_conformers(mol, k=5)
        keys = {tuple(np.round(c, 6).ravel()) for c, _ in confs}
        assert len(keys) == 5

    def test_single_atom(self):
        confs = embed_conformers(parse_smiles("C"), k=2)
        for coords, energy in confs:
            assert coords.shape == (1, 3)
            assert energy == 0.0

    def test_bad_count_rejected(self):
        with pytest.raises(ValueError, match=">= 1"):
            embed_conformers(parse_smiles("C"), k=0)

    def test_bonded_atoms_near_target_length(self):
        mol = parse_smiles("CCCC")
        coords, _ = embed_conformers(mol, k=1)[0]
        for b in mol.bonds:
            d = np.linalg.norm(coords[b.i] - coords[b.j])
            assert 1.0 < d < 2.0


class TestScaffold:
    def test_acyclic_sentinel(self):
        for smi in ("C", "CCO", "CC(=O)NC", "C#N"):
            assert scaffold_key(parse_smiles(smi)) == "-"

    def test_substituents_do_not_change_key(self):
        base = scaffold_key(parse_smiles("c1ccccc1"))
        assert scaffold_key(parse_smiles("Cc1ccccc1")) == base
        assert scaffold_key(parse_smiles("OCCc1ccccc1")) == base

    def test_distinct_ring_systems_distinct_keys(self):
        keys = {scaffold_key(parse_smiles(s))
                for s in ("c1ccccc1", "C1CCCCC1", "c1ccncc1", "C1CCOC1")}
        assert len(keys) == 4

    def test_atom_order_invariance(self):
        assert (scaffold_key(parse_smiles("CCc1ccccc1"))
                == scaffold_key(parse_smiles("c1ccccc1CC")))

    def test_linker_is_part_of_framework(self):
        one_ring = scaffold_key(parse_smiles("c1ccccc1"))
        two_rings = scaffold_key(parse_smiles("c1ccccc1Cc1ccccc1"))
        assert two_rings != one_ring


class TestFingerprint:
    def test_shape_and_dtype(self):
        bits = circular_fingerprint(parse_smiles("CCO"))
        assert bits.shape == (2048,) and bits.dtype == bool
        assert 0 < bits.sum() < 2048

    def test_atom_order_invariance(self):
        np.testing.assert_array_equal(circular_fingerprint(parse_smiles("CCO")),
                                      circular_fingerprint(parse_smiles("OCC")))

    def test_different_molecules_differ(self):
        a = circular_fingerprint(parse_smiles("CCO"))
        b = circular_fingerprint(parse_smiles("CCN"))
        assert not np.array_equal(a, b)

    def test_b64_round_trip(self):
        bits = circular_fingerprint(parse_smiles("c1ccncc1"))
        raw = base64.b64decode(fingerprint_b64(bits))
        assert len(raw) == 256
        back = np.unpackbits(np.frombuffer(raw, dtype=np.uint8)).astype(bool)
        np.testing.assert_array_equal(back, bits)


class TestSequenceEncoding:
    def test_linear_chain(self):
        assert encode_selfies(parse_smiles("CCO")) == "[C][C][O]"

    def test_bond_order_prefixes(self):
        s = encode_selfies(parse_smiles("CC(=O)O"))
        assert "[=O]" in s and "[Branch]" in s

    def test_only_bracket_tokens(self):
        for smi in ("c1ccccc1", "CC(C)(C)O", "CC(=O)[O-]", "C#N"):
            s = encode_selfies(parse_smiles(smi))
            assert BRACKET_TOKENS.fullmatch(s), s

    def test_one_ring_token_per_cycle(self):
        assert encode_selfies(parse_smiles("c1ccccc1")).count("[Ring]") == 1
        assert encode_selfies(parse_smiles("c1ccccc1Cc1ccccc1")).count("[Ring]") == 2

    def test_charge_in_token(self):
        assert "[O-]" in encode_selfies(parse_smiles("CC(=O)[O-]"))


def write_csv(path, rows, header=("smiles", "y")):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def read_jsonl(path):
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


class TestPrepMolecule:
    def test_record_schema(self):
        cfg = PrepConfig(input_path="x", output_path="y", label_columns=("y",))
        rec = prep_molecule("CCO", [1.0], "mol-00000", cfg)
        assert set(rec) >= {"id", "selfies", "atoms", "bonds", "conformers",
                            "labels", "context", "scaffold", "fingerprint_b64"}
        assert len(rec["conformers"]) == 5
        assert rec["context"] == [0.0, 0.0, 0.0, 0.0]
        assert rec["labels"] == [1.0]
        assert all(set(a) == {"element", "degree", "formal_charge", "num_h",
                              "hybridization"} for a in rec["atoms"])


class TestPrepDataset:
    def test_invalid_rows_skipped_and_logged(self, tmp_path):
        rows = [(f"{'C' * (i + 1)}O", i % 2) for i in range(9)]
        rows.insert(4, ("C1CC", ""))  # unclosed ring closure
        src = tmp_path / "in.csv"
        write_csv(src, rows)
        cfg = PrepConfig(str(src), str(tmp_path / "out.jsonl"), label_columns=("y",))
        manifest = prep_dataset(cfg)
        assert manifest["rows_read"] == 10
        assert manifest["count"] == 9
        assert len(manifest["skipped"]) == 1
        assert manifest["skipped"][0]["smiles"] == "C1CC"
        assert manifest["skipped"][0]["row"] == 6  # 1-based, after the header
        assert "ring" in manifest["skipped"][0]["reason"]
        assert len(read_jsonl(cfg.output_path)) == 9

    def test_output_follows_input_order(self, tmp_path):
        smiles = ["CCO", "c1ccccc1", "CCN", "CC(=O)O"]
        src = tmp_path / "in.csv"
        write_csv(src, [(s, 0) for s in smiles])
        cfg = PrepConfig(str(src), str(tmp_path / "out.jsonl"), label_columns=("y",))
        prep_dataset(cfg)
        recs = read_jsonl(cfg.output_path)
        assert [r["smiles"] for r in recs] == smiles
        assert [r["id"] for r in recs] == [f"mol-{i:05d}" for i in range(4)]

    def test_blank_label_becomes_null(self, tmp_path):
        src = tmp_path / "in.csv"
        write_csv(src, [("CCO", ""), ("CCN", "1")])
        cfg = PrepConfig(str(src), str(tmp_path / "out.jsonl"), label_columns=("y",))
        prep_dataset(cfg)
        recs = read_jsonl(cfg.output_path)
        assert recs[0]["labels"] == [None]
        assert recs[1]["labels"] == [1.0]

    def test_non_numeric_label_is_skipped(self, tmp_path):
        src = tmp_path / "in.csv"
        write_csv(src, [("CCO", "high"), ("CCN", "1")])
        cfg = PrepConfig(str(src), str(tmp_path / "out.jsonl"), label_columns=("y",))
        manifest = prep_dataset(cfg)
        assert manifest["count"] == 1
        assert "not numeric" in manifest["skipped"][0]["reason"]

    def test_missing_column_rejected(self, tmp_path):
        src = tmp_path / "in.csv"
        write_csv(src, [("CCO", 0)], header=("structure", "y"))
        cfg = PrepConfig(str(src), str(tmp_path / "out.jsonl"))
        with pytest.raises(ValueError, match="missing column"):
            prep_dataset(cfg)

    def test_empty_csv_gives_empty_output(self, tmp_path):
        src = tmp_path / "in.csv"
        write_csv(src, [])
        cfg = PrepConfig(str(src), str(tmp_path / "out.jsonl"))
        manifest = prep_dataset(cfg)
        assert manifest["count"] == 0 and manifest["skipped"] == []
        assert read_jsonl(cfg.output_path) == []

    def test_max_molecules(self, tmp_path):
        src = tmp_path / "in.csv"
        write_csv(src, [("C" * (i + 1), 0) for i in range(8)])
        cfg = PrepConfig(str(src), str(tmp_path / "out.jsonl"),
                         label_columns=("y",), max_molecules=3)
        assert prep_dataset(cfg)["count"] == 3

    def test_config_validation(self):
        with pytest.raises(ValueError, match="n_conformers"):
            PrepConfig("a", "b", n_conformers=0)
        with pytest.raises(ValueError, match="temperature"):
            PrepConfig("a", "b", temperature=-1.0)


class TestCli:
    def test_ok_run(self, tmp_path, capsys):
        src = tmp_path / "in.csv"
        write_csv(src, [("CCO", 1), ("CCN", 0)])
        out = tmp_path / "out.jsonl"
        code = main([str(src), str(out), "--label-cols", "y"])
        assert code == EXIT_OK
        assert "wrote 2 records (0 skipped)" in capsys.readouterr().out
        assert out.exists() and (tmp_path / "out.jsonl.manifest.json").exists()

    def test_missing_input_exit_2(self, tmp_path, capsys):
        code = main([str(tmp_path / "nope.csv"), str(tmp_path / "out.jsonl")])
        assert code == EXIT_DATA
        assert "data error" in capsys.readouterr().err

    def test_bad_k_exit_1(self, tmp_path, capsys):
        src = tmp_path / "in.csv"
        write_csv(src, [("CCO", 1)])
        code = main([str(src), str(tmp_path / "out.jsonl"), "--k", "0"])
        assert code == EXIT_CONFIG
        assert "config error" in capsys.readouterr().err
