"""Binary checkpoint format: round trips, corruption handling, model loading."""

import struct

import numpy as np
import pytest

from conftest import small_model_config
from molfm.checkpoint import (MAGIC, VERSION, CheckpointError, load_checkpoint,
                              load_into_model, save_checkpoint)
from molfm.fusion import MolFMModel


def sample_tensors():
    rng = np.random.default_rng(0)
    return {
        "a.W": rng.normal(size=(3, 4)).astype(np.float32),
        "a.b": rng.normal(size=4).astype(np.float32),
        "scalar": np.float32(2.5),
        "empty_meta_dim": rng.normal(size=(2, 1, 3)).astype(np.float32),
    }


class TestRoundTrip:
    def test_tensors_and_meta_bitwise(self, tmp_path):
        path = tmp_path / "m.ckpt"
        tensors = sample_tensors()
        meta = {"epoch": 7, "config": {"lr": 1e-4}, "note": None}
        save_checkpoint(path, tensors, meta)
        loaded, got_meta = load_checkpoint(path)
        assert got_meta == meta
        assert set(loaded) == set(tensors)
        for name in tensors:
            np.testing.assert_array_equal(loaded[name],
                                          np.asarray(tensors[name], dtype=np.float32))

    def test_save_is_deterministic(self, tmp_path):
        p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        save_checkpoint(p1, sample_tensors(), {"x": 1})
        save_checkpoint(p2, sample_tensors(), {"x": 1})
        assert p1.read_bytes() == p2.read_bytes()

    def test_header_layout(self, tmp_path):
        path = tmp_path / "m.ckpt"
        save_checkpoint(path, {}, {"k": "v"})
        raw = path.read_bytes()
        assert raw[:4] == MAGIC
        assert struct.unpack("<I", raw[4:8])[0] == VERSION

    def test_atomic_write_leaves_no_temp_files(self, tmp_path):
        save_checkpoint(tmp_path / "m.ckpt", sample_tensors(), {})
        leftovers = [p for p in tmp_path.iterdir() if p.suffix == ".tmp"]
        assert not leftovers


class TestCorruption:
    def test_bad_magic_names_offset_zero(self, tmp_path):
        path = tmp_path / "m.ckpt"
        save_checkpoint(path, {}, {})
        data = bytearray(path.read_bytes())
        data[:4] = b"XXXX"
        path.write_bytes(bytes(data))
        with pytest.raises(CheckpointError, match="offset 0"):
            load_checkpoint(path)

    def test_unsupported_version(self, tmp_path):
        path = tmp_path / "m.ckpt"
        save_checkpoint(path, {}, {})
        data = bytearray(path.read_bytes())
        data[4:8] = struct.pack("<I", 99)
        path.write_bytes(bytes(data))
        with pytest.raises(CheckpointError, match="version 99"):
            load_checkpoint(path)

    def test_truncated_payload(self, tmp_path):
        path = tmp_path / "m.ckpt"
        save_checkpoint(path, sample_tensors(), {})
        raw = path.read_bytes()
        path.write_bytes(raw[:-5])
        with pytest.raises(CheckpointError, match="truncated"):
            load_checkpoint(path)


class TestModelLoading:
    def test_forward_is_bitwise_stable_after_round_trip(self, tmp_path):
        from conftest import labelled_chain_dataset
        from molfm.fusion import PreparedBatch
        from molfm.records import build_vocab

        cfg = small_model_config()
        model = MolFMModel(cfg, seed=0)
        model.eval()
        records = labelled_chain_dataset(n=4)
        vocab = build_vocab([r.selfies for r in records])
        batch = PreparedBatch(records, vocab, cfg)
        before = model.forward(batch, np.random.default_rng(0)).data.copy()

        path = tmp_path / "m.ckpt"
        save_checkpoint(path, model.state_dict(), {"cfg": "small"})
        other = MolFMModel(cfg, seed=123)
        other.eval()
        load_into_model(path, other)
        after = other.forward(batch, np.random.default_rng(0)).data
        np.testing.assert_array_equal(before, after)

    def test_name_table_mismatch_listed(self, tmp_path):
        cfg = small_model_config()
        model = MolFMModel(cfg, seed=0)
        state = model.state_dict()
        state.pop("head.fc1.W")
        path = tmp_path / "m.ckpt"
        save_checkpoint(path, state, {})
        with pytest.raises(CheckpointError, match="head.fc1.W"):
            load_into_model(path, MolFMModel(cfg, seed=1))
