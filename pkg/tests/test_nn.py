"""Layers, optimizer, and schedules: by-hand oracles and statistical properties."""

import numpy as np
import pytest

from molfm.autodiff import Tensor
from molfm.nn import (MLP2, AdamW, BatchNorm1d, CosineWarmRestarts, Dropout, Embedding,
                      LayerNorm, Linear, Module, WarmupCosine)

RNG = np.random.default_rng(0)


class TestLinearEmbedding:
    def test_linear_matches_manual(self):
        lin = Linear(3, 2, np.random.default_rng(1), np.float64)
        x = np.random.default_rng(2).normal(size=(4, 3))
        out = lin(Tensor(x))
        np.testing.assert_allclose(out.data, x @ lin.W.data + lin.b.data, atol=1e-12)

    def test_embedding_lookup(self):
        emb = Embedding(5, 3, np.random.default_rng(3), np.float64)
        ids = np.array([[0, 4], [2, 2]])
        out = emb(ids)
        np.testing.assert_array_equal(out.data, emb.W.data[ids])


class TestNorms:
    def test_layer_norm_zero_mean_unit_var(self):
        ln = LayerNorm(8, dtype=np.float64)
        x = Tensor(np.random.default_rng(4).normal(2.0, 3.0, size=(5, 8)))
        y = ln(x).data
        np.testing.assert_allclose(y.mean(axis=1), 0.0, atol=1e-10)
        np.testing.assert_allclose(y.std(axis=1), 1.0, atol=1e-4)

    def test_batch_norm_train_stats_then_eval_matches(self):
        bn = BatchNorm1d(4, dtype=np.float64)
        x = Tensor(np.random.default_rng(5).normal(1.0, 2.0, size=(64, 4)))
        bn.train()
        for _ in range(200):
            train_out = bn(x).data
        bn.eval()
        eval_out = bn(x).data
        np.testing.assert_allclose(eval_out, train_out, atol=1e-3)

    def test_batch_norm_running_stats_are_buffers(self):
        bn = BatchNorm1d(4)
        names = dict(bn.named_buffers())
        assert "running_mean" in names and "running_var" in names
        assert not any("running" in n for n, _ in bn.named_parameters())


class TestDropout:
    def test_eval_mode_is_identity(self):
        drop = Dropout(0.5)
        drop.eval()
        x = Tensor(np.ones((3, 3)))
        assert drop(x, RNG) is x

    def test_train_mode_preserves_expectation(self):
        drop = Dropout(0.3)
        drop.train()
        x = Tensor(np.ones((200, 200)))
        out = drop(x, np.random.default_rng(6)).data
        assert out.mean() == pytest.approx(1.0, abs=0.01)
        kept = out[out != 0]
        assert np.allclose(kept, 1.0 / 0.7)

    def test_mc_flag_keeps_dropout_active_in_eval(self):
        drop = Dropout(0.5)
        drop.eval()
        drop.mc = True
        out = drop(Tensor(np.ones(1000)), np.random.default_rng(7)).data
        assert (out == 0).any()

    def test_invalid_probability(self):
        with pytest.raises(ValueError):
            Dropout(1.0)


class TestAdamW:
    def test_first_step_matches_hand_computation(self):
        p = Tensor(np.array([1.0]), requires_grad=True)
        opt = AdamW([p], lr=0.1, weight_decay=0.0)
        p.grad = np.array([0.5])
        opt.step()
        m_hat, v_hat = 0.5, 0.25
        expected = 1.0 - 0.1 * m_hat / (np.sqrt(v_hat) + 1e-8)
        assert p.data[0] == pytest.approx(expected, rel=1e-12)

    def test_weight_decay_is_decoupled(self):
        p1 = Tensor(np.array([1.0]), requires_grad=True)
        p2 = Tensor(np.array([1.0]), requires_grad=True)
        opt1 = AdamW([p1], lr=0.1, weight_decay=0.0)
        opt2 = AdamW([p2], lr=0.1, weight_decay=0.01)
        p1.grad = np.array([0.5])
        p2.grad = np.array([0.5])
        opt1.step()
        opt2.step()
        # Decay multiplies the post-Adam value by (1 - lr * wd), independent of grads.
        assert p2.data[0] == pytest.approx(p1.data[0] * (1 - 0.1 * 0.01), rel=1e-12)

    def test_none_grad_treated_as_zero(self):
        p = Tensor(np.array([2.0]), requires_grad=True)
        opt = AdamW([p], lr=0.1)
        opt.step()
        assert p.data[0] == pytest.approx(2.0)

    def test_descends_a_quadratic(self):
        p = Tensor(np.array([5.0]), requires_grad=True)
        opt = AdamW([p], lr=0.1)
        for _ in range(300):
            opt.zero_grad()
            loss = (p * p).sum()
            loss.backward()
            opt.step()
        assert abs(p.data[0]) < 1e-2


class TestSchedules:
    def test_warmup_cosine_endpoints_and_midpoint(self):
        sched = WarmupCosine(1.0, warmup_steps=10, total_steps=110)
        assert sched.lr_at(0) == 0.0
        assert sched.lr_at(5) == pytest.approx(0.5)
        assert sched.lr_at(10) == pytest.approx(1.0)
        assert sched.lr_at(60) == pytest.approx(0.5)   # cosine midpoint
        assert sched.lr_at(110) == pytest.approx(0.0, abs=1e-12)
        assert sched.lr_at(1000) == pytest.approx(0.0, abs=1e-12)

    def test_warm_restarts_cycle_doubling(self):
        sched = CosineWarmRestarts(1.0, t0_epochs=10, t_mult=2)
        assert sched.lr_at(0) == pytest.approx(1.0)
        assert sched.lr_at(5) == pytest.approx(0.5)
        assert sched.lr_at(10) == pytest.approx(1.0)   # restart
        assert sched.lr_at(20) == pytest.approx(0.5)   # midpoint of 20-epoch cycle
        assert sched.lr_at(30) == pytest.approx(1.0)   # second restart

    def test_negative_step_rejected(self):
        with pytest.raises(ValueError):
            WarmupCosine(1.0, 10, 100).lr_at(-1)
        with pytest.raises(ValueError):
            CosineWarmRestarts(1.0).lr_at(-1)


class TestModuleStateDict:
    def test_round_trip(self):
        rng = np.random.default_rng(8)
        m1 = MLP2(4, 8, 2, rng, np.float64)
        m2 = MLP2(4, 8, 2, np.random.default_rng(9), np.float64)
        m2.load_state_dict(m1.state_dict())
        x = Tensor(np.random.default_rng(10).normal(size=(3, 4)))
        np.testing.assert_array_equal(m1(x).data, m2(x).data)

    def test_missing_and_extra_names_reported(self):
        m = MLP2(4, 8, 2, np.random.default_rng(11))
        state = m.state_dict()
        state.pop("fc1.W")
        state["bogus"] = np.zeros(1)
        with pytest.raises(ValueError) as err:
            m.load_state_dict(state)
        assert "fc1.W" in str(err.value) and "bogus" in str(err.value)

    def test_nested_module_lists_are_discovered(self):
        class Stack(Module):
            def __init__(self):
                super().__init__()
                self.blocks = [Linear(2, 2, np.random.default_rng(i)) for i in range(3)]

        names = [n for n, _ in Stack().named_parameters()]
        assert "blocks.0.W" in names and "blocks.2.b" in names
