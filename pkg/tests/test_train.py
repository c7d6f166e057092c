"""Training loops: pre-training, fine-tuning with early stopping, determinism."""

import numpy as np
import pytest

from conftest import labelled_chain_dataset, small_model_config
from molfm.config import AblationVariant, TrainConfig
from molfm.fusion import MolFMModel
from molfm.records import build_vocab
from molfm.split import scaffold_split
from molfm.train import (DivergenceError, attention_boltzmann_correlation,
                         calibration_report, load_pretrained_encoders, predict,
                         run_ablation, run_finetune, run_pretrain)


def pretrain_cfg(**over):
    base = dict(phase="pretrain", epochs=2, batch_size=8, lr=1e-3, weight_decay=0.0,
                warmup_steps=2, seeds=(0,))
    base.update(over)
    return TrainConfig(**base)


def finetune_cfg(**over):
    base = dict(phase="finetune", epochs=3, batch_size=8, lr=1e-3, weight_decay=0.0,
                patience=15, seeds=(0,))
    base.update(over)
    return TrainConfig(**base)


class TestPretrain:
    def test_history_and_loss_decrease(self):
        records = labelled_chain_dataset(n=16, seed=0)
        cfg = small_model_config()
        model, vocab, history = run_pretrain(records, cfg, pretrain_cfg(epochs=3), seed=0)
        assert len(history) == 3
        for row in history:
            assert np.isfinite(row["total"])
            assert row["total"] == pytest.approx(
                row["contrastive"] + 0.5 * row["masked_atom"], rel=1e-6)
        assert history[-1]["total"] < history[0]["total"]

    def test_deterministic_given_seed(self):
        records = labelled_chain_dataset(n=8, seed=1)
        cfg = small_model_config()
        _, _, h1 = run_pretrain(records, cfg, pretrain_cfg(), seed=5)
        _, _, h2 = run_pretrain(records, cfg, pretrain_cfg(), seed=5)
        assert h1 == h2

    def test_encoder_transfer(self):
        records = labelled_chain_dataset(n=8, seed=2)
        cfg = small_model_config()
        pre_model, vocab, _ = run_pretrain(records, cfg, pretrain_cfg(epochs=1), seed=0)
        fresh = MolFMModel(cfg, seed=99)
        n_loaded = load_pretrained_encoders(fresh, pre_model.state_dict())
        assert n_loaded > 0
        np.testing.assert_array_equal(fresh.enc2d.in_proj.W.data,
                                      pre_model.enc2d.in_proj.W.data)
        # the supervised head must stay untouched
        assert not np.array_equal(
            fresh.head.fc1.W.data, pre_model.head.fc1.W.data)

    def test_no_loadable_tensors_rejected(self):
        cfg = small_model_config()
        with pytest.raises(ValueError, match="no loadable"):
            load_pretrained_encoders(MolFMModel(cfg, seed=0), {"foo": np.zeros(2)})


class TestFinetune:
    def _run(self, train_cfg=None, variant=AblationVariant.FULL, n=30):
        records = labelled_chain_dataset(n=n, seed=3)
        split = scaffold_split(records)
        cfg = small_model_config()
        return run_finetune(records, split, cfg, train_cfg or finetune_cfg(),
                            variant=variant)

    def test_summary_shape(self):
        res = self._run(finetune_cfg(seeds=(0, 1)))
        assert res["variant"] == "full"
        assert len(res["runs"]) == 2
        assert res["test_mean"] is not None
        for run in res["runs"]:
            assert run["epochs_ran"] >= 1
            assert run["history"]

    def test_early_stopping_with_patience_one(self):
        # A vanishing learning rate freezes the model, so the val AUC never
        # improves after the first epoch and patience=1 stops at epoch 2.
        res = self._run(finetune_cfg(epochs=50, lr=1e-12, patience=1))
        assert res["runs"][0]["epochs_ran"] == 2

    def test_deterministic_given_seed(self):
        r1 = self._run()
        r2 = self._run()
        assert r1["runs"][0]["val_metric"] == r2["runs"][0]["val_metric"]
        assert r1["test_mean"] == r2["test_mean"]
        s1 = r1["runs"][0]["model"].state_dict()
        s2 = r2["runs"][0]["model"].state_dict()
        for name in s1:
            np.testing.assert_array_equal(s1[name], s2[name])

    def test_empty_split_part_rejected(self):
        records = labelled_chain_dataset(n=6, seed=4)
        split = scaffold_split(records)
        split.assignment = {r.id: "train" for r in records}
        with pytest.raises(ValueError, match="empty"):
            run_finetune(records, split, small_model_config(), finetune_cfg())

    def test_predict_returns_probabilities(self):
        records = labelled_chain_dataset(n=8, seed=5)
        cfg = small_model_config()
        vocab = build_vocab([r.selfies for r in records])
        preds, _ = predict(MolFMModel(cfg, seed=0), records, vocab, cfg)
        assert preds.shape == (8, 1)
        assert np.all((preds > 0) & (preds < 1))


class TestAblation:
    def test_rows_include_delta_vs_full(self):
        records = labelled_chain_dataset(n=30, seed=6)
        split = scaffold_split(records)
        cfg = small_model_config()
        variants = [AblationVariant.FULL, AblationVariant.ONLY_2D]
        rows, results = run_ablation(records, split, cfg, finetune_cfg(epochs=2),
                                     variants)
        assert [r["variant"] for r in rows] == ["full", "only_2d"]
        assert rows[0]["delta_vs_full"] == pytest.approx(0.0)
        assert rows[1]["delta_vs_full"] == pytest.approx(
            rows[1]["mean"] - rows[0]["mean"])

    def test_variant_failure_is_isolated(self, monkeypatch):
        import molfm.train as train_mod

        records = labelled_chain_dataset(n=30, seed=7)
        split = scaffold_split(records)
        cfg = small_model_config()
        real = train_mod.run_finetune

        def flaky(records, split, model_cfg, train_cfg, variant=AblationVariant.FULL,
                  init_tensors=None, vocab=None, log=None):
            if variant is AblationVariant.ONLY_1D:
                raise RuntimeError("boom")
            return real(records, split, model_cfg, train_cfg, variant,
                        init_tensors, vocab, log)

        monkeypatch.setattr(train_mod, "run_finetune", flaky)
        rows, _ = run_ablation(records, split, cfg, finetune_cfg(epochs=1),
                               [AblationVariant.FULL, AblationVariant.ONLY_1D])
        assert rows[1]["error"] == "boom"
        assert "error" not in rows[0]


class TestAnalysis:
    def test_attention_boltzmann_correlation_keys(self):
        records = labelled_chain_dataset(n=6, seed=8)
        cfg = small_model_config()
        out = attention_boltzmann_correlation(MolFMModel(cfg, seed=0), records, cfg)
        assert set(out) == {"pearson_r", "argmax_agreement", "n_pairs"}
        assert -1.0 <= out["pearson_r"] <= 1.0

    def test_correlation_requires_multi_conformer(self):
        records = labelled_chain_dataset(n=4, seed=9)
        for rec in records:
            rec.conformers = rec.conformers[:1]
        cfg = small_model_config()
        with pytest.raises(ValueError, match="K >= 2"):
            attention_boltzmann_correlation(MolFMModel(cfg, seed=0), records, cfg)

    def test_calibration_report(self):
        records = labelled_chain_dataset(n=8, seed=10)
        cfg = small_model_config()
        cfg.head_dropout = 0.2
        vocab = build_vocab([r.selfies for r in records])
        out = calibration_report(MolFMModel(cfg, seed=0), records, vocab, cfg,
                                 passes=4, seed=0)
        assert out["high_count"] + out["low_count"] == 8
