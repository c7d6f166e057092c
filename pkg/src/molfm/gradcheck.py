"""Finite-difference verification of every layer and the composed model (float64)."""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor, grad_check, softmax
from .config import ModelConfig
from .encoders import (Encoder1DConfig, Encoder2DConfig, Encoder3DConfig,
                       SchNetInteraction, TransformerLayer, batch_conformers, gin_layer)
from .fusion import CrossAttnBlock, EnsembleAttention, FiLMConditioner, MolFMModel
from .nn import MLP2, BatchNorm1d, LayerNorm, Linear
from .objectives import info_nce, masked_atom_loss, supervised_loss
from .synth import random_record


def tiny_config(n_tasks=1, context_dim=4) -> ModelConfig:
    return ModelConfig(
        enc1d=Encoder1DConfig(vocab_size=32, d_model=16, layers=2, heads=2, d_ff=32,
                              max_len=32, dropout=0.0),
        enc2d=Encoder2DConfig(d_model=16, layers=2, mlp_hidden=16),
        enc3d=Encoder3DConfig(d_model=16, interactions=2, cutoff=10.0, n_rbf=8),
        context_dim=context_dim, n_tasks=n_tasks, head_hidden=8, head_dropout=0.0,
        fusion_hidden=16, contrastive_dim=8,
    )


def _freeze_batchnorm(module):
    from .nn import BatchNorm1d as BN, Module
    stack = [module]
    while stack:
        mod = stack.pop()
        if isinstance(mod, BN):
            mod.momentum = 0.0
        if isinstance(mod, Module):
            stack.extend(mod._children())


def _readout(rng, shape):
    # Fixed random projection; a plain sum-of-squares readout is degenerate
    # for normalization layers (the loss becomes constant and FD noise wins).
    return Tensor(rng.normal(size=shape))


def layer_checks(seed=0) -> dict:
    """Max FD relative error per layer on random float64 inputs."""
    rng = np.random.default_rng(seed)
    f64 = np.float64
    results = {}

    x = Tensor(rng.normal(size=(4, 6)).astype(f64), requires_grad=True)
    lin = Linear(6, 5, rng, f64)
    results["linear"] = grad_check(lambda t: (lin(t) * lin(t)).sum(), x)

    x = Tensor(rng.normal(size=(4, 6)).astype(f64), requires_grad=True)
    ln = LayerNorm(6, dtype=f64)
    w = _readout(rng, (4, 6))
    results["layer_norm"] = grad_check(lambda t: (ln(t) * w).sum(), x)

    x = Tensor(rng.normal(size=(5, 6)).astype(f64), requires_grad=True)
    bn = BatchNorm1d(6, dtype=f64, momentum=0.0)
    w = _readout(rng, (5, 6))
    results["batch_norm"] = grad_check(lambda t: (bn(t) * w).sum(), x)

    x = Tensor(rng.normal(size=(3, 7)).astype(f64), requires_grad=True)
    w = Tensor(rng.normal(size=7).astype(f64))
    results["softmax"] = grad_check(lambda t: (softmax(t, axis=1) @ w).sum(), x)

    x = Tensor(rng.normal(size=(2, 5, 16)).astype(f64), requires_grad=True)
    tl = TransformerLayer(16, 2, 32, 0.0, rng, f64)
    mask = np.array([[True] * 5, [True, True, True, False, False]])
    w = _readout(rng, (2, 5, 16))
    results["transformer_layer"] = grad_check(
        lambda t: (tl(t, mask, rng) * w).sum(), x)

    x = Tensor(rng.normal(size=(5, 8)).astype(f64), requires_grad=True)
    mlp = MLP2(8, 8, 8, rng, f64)
    eps = Tensor(np.asarray(0.3, dtype=f64), requires_grad=True)
    src = np.array([0, 1, 1, 2, 3, 4])
    dst = np.array([1, 0, 2, 1, 4, 3])
    results["gin_layer"] = grad_check(
        lambda t: (gin_layer(t, src, dst, eps, mlp) ** 2.0).sum(), x)

    cfg3 = Encoder3DConfig(d_model=8, interactions=1, cutoff=10.0, n_rbf=8)
    coords = rng.normal(0.0, 1.5, size=(5, 3))
    feats = rng.normal(size=(5, 8)).astype(f64)  # treated as pre-embedded states
    cbatch = batch_conformers([(np.zeros((5, 38)), coords)], cfg3, f64)
    inter = SchNetInteraction(8, 8, rng, f64)
    x = Tensor(feats, requires_grad=True)
    results["schnet_interaction"] = grad_check(
        lambda t: (inter(t, cbatch) ** 2.0).sum(), x)

    ens = EnsembleAttention(8, 12, rng, f64)
    energies = rng.normal(size=3)
    x = Tensor(rng.normal(size=(3, 8)).astype(f64), requires_grad=True)

    def ens_loss(t):
        h, _ = ens(t, energies, mode="full")
        return (ens.project(h) ** 2.0).sum()

    results["ensemble_attention"] = grad_check(ens_loss, x)

    ca = CrossAttnBlock(16, 2, rng, f64)
    q = Tensor(rng.normal(size=(3, 16)).astype(f64))
    x = Tensor(rng.normal(size=(3, 16)).astype(f64), requires_grad=True)
    results["cross_attention"] = grad_check(lambda t: ((q + ca(q, t)) ** 2.0).sum(), x)

    film = FiLMConditioner(4, 16, rng, f64)
    ctx = Tensor(rng.normal(size=(3, 4)).astype(f64))
    x = Tensor(rng.normal(size=(3, 16)).astype(f64), requires_grad=True)
    results["film"] = grad_check(lambda t: (film(t, ctx) ** 2.0).sum(), x)

    za = Tensor(rng.normal(size=(4, 8)).astype(f64), requires_grad=True)
    zb = Tensor(rng.normal(size=(4, 8)).astype(f64))
    results["info_nce"] = grad_check(lambda t: info_nce(t, zb, 0.07), za)

    logits = Tensor(rng.normal(size=(5, 16)).astype(f64), requires_grad=True)
    targets = rng.integers(0, 16, size=5)
    results["masked_atom_loss"] = grad_check(lambda t: masked_atom_loss(t, targets), logits)

    out = Tensor(rng.normal(size=(4, 2)).astype(f64), requires_grad=True)
    labels = rng.integers(0, 2, size=(4, 2)).astype(f64)
    mask = np.array([[True, True], [True, False], [False, True], [True, True]])
    results["supervised_bce"] = grad_check(
        lambda t: supervised_loss(t, labels, mask, "binary_multitask"), out)
    out = Tensor(rng.normal(size=(4, 2)).astype(f64), requires_grad=True)
    results["supervised_mse"] = grad_check(
        lambda t: supervised_loss(t, labels, mask, "regression"), out)

    return results


def full_model_check(seed=0, n_params=8) -> dict:
    """FD check of the composed model loss w.r.t. representative parameters."""
    from .fusion import PreparedBatch
    from .records import build_vocab

    cfg = tiny_config()
    rng = np.random.default_rng(seed)
    records = [random_record(rng, f"m{i}", n_atoms=5, k=3, context_dim=cfg.context_dim)
               for i in range(3)]
    for rec in records:
        rec.context = list(rng.normal(size=cfg.context_dim))
    vocab = build_vocab([r.selfies for r in records])
    model = MolFMModel(cfg, seed=seed, dtype=np.float64)
    _freeze_batchnorm(model)
    batch = PreparedBatch(records, vocab, cfg, dtype=np.float64)
    fixed_rng = np.random.default_rng(0)

    def loss_fn(_t):
        out = model.forward(batch, fixed_rng)
        return supervised_loss(out, batch.labels, batch.label_mask, cfg.task_kind)

    chosen = ["ensemble.w_q", "enc2d.eps.0", "film.gamma_net.W", "head.fc2.W",
              "fusion_mlp.fc1.b", "enc3d.interactions.0.filter2.b",
              "enc1d.layers.0.attn.wo.b", "ca_1d_2d.wv.b"][:n_params]
    named = dict(model.named_parameters())
    results = {}
    for name in chosen:
        results[f"model::{name}"] = grad_check(loss_fn, named[name])
    return results


def gradcheck_report(seed=0):
    """All layer and composed-model checks; returns (per-check dict, max error)."""
    results = layer_checks(seed)
    results.update(full_model_check(seed))
    return results, max(results.values())
