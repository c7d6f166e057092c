"""Conformer ensemble attention, cross-modal fusion, FiLM, head, and the full model."""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor, concat, softmax, stack
from .config import AblationVariant, ModelConfig
from .encoders import (Conformer3DBatch, Encoder1D, Encoder2D, Encoder3D, GraphBatch,
                       batch_conformers, batch_graphs)
from .nn import MLP2, Dropout, Linear, Module
from .records import atom_features, boltzmann_weights, tokenize_selfies


class EnsembleAttention(Module):
    """Learned query score plus Boltzmann log-prior over conformer embeddings."""

    def __init__(self, d_model, out_dim, rng, dtype=np.float32):
        super().__init__()
        self.d_model = d_model
        self.scale = 1.0 / np.sqrt(d_model)
        self.w_q = Tensor(rng.normal(0.0, 1.0 / np.sqrt(d_model), size=d_model).astype(dtype),
                          requires_grad=True)
        self.proj = Linear(d_model, out_dim, rng, dtype)

    def __call__(self, h_k: Tensor, energies, mode="full", temperature=298.0, rng=None):
        """Aggregate a (K, d) conformer stack into one d-vector.

        Returns (h_3d Tensor of shape (d,), alpha numpy array of shape (K,)).
        """
        k = h_k.shape[0]
        energies = np.asarray(energies, dtype=np.float64)
        if k == 0:
            raise ValueError("empty conformer ensemble")
        if energies.shape[0] != k:
            raise ValueError(f"{k} embeddings but {energies.shape[0]} energies")
        if mode == "single":
            idx = int(np.argmin(energies))
            alpha = np.zeros(k)
            alpha[idx] = 1.0
            return h_k[idx], alpha
        if mode == "random":
            if rng is None:
                raise ValueError("random mode requires an rng")
            idx = int(rng.integers(k))
            alpha = np.zeros(k)
            alpha[idx] = 1.0
            return h_k[idx], alpha
        if mode not in ("full", "no_prior"):
            raise ValueError(f"bad ensemble mode {mode!r}")
        scores = (h_k @ self.w_q) * self.scale
        if mode == "full":
            prior = boltzmann_weights(energies, temperature)
            scores = scores + Tensor(np.log(prior).astype(h_k.data.dtype))
        alpha_t = softmax(scores, axis=0)
        h_3d = (h_k * alpha_t.reshape(k, 1)).sum(axis=0)
        return h_3d, alpha_t.data.astype(np.float64)

    def project(self, h_3d: Tensor) -> Tensor:
        return self.proj(h_3d)


class CrossAttnBlock(Module):
    """Multi-head cross-attention between two pooled single-token embeddings."""

    def __init__(self, d_model, heads, rng, dtype=np.float32):
        super().__init__()
        self.heads = heads
        self.head_dim = d_model // heads
        self.wq = Linear(d_model, d_model, rng, dtype)
        self.wk = Linear(d_model, d_model, rng, dtype)
        self.wv = Linear(d_model, d_model, rng, dtype)
        self.wo = Linear(d_model, d_model, rng, dtype)

    def __call__(self, q: Tensor, kv: Tensor) -> Tensor:
        # One query and one key per molecule: the softmax over a singleton is
        # exactly 1, so attention reduces to W_O(W_V(kv)); W_Q/W_K still shape
        # the gradient path and the general form is kept for clarity.
        v = self.wv(kv)
        return self.wo(v)


class FiLMConditioner(Module):
    """gamma(c) * h + beta(c); identity at initialization for zero context."""

    def __init__(self, context_dim, d_model, rng, dtype=np.float32):
        super().__init__()
        self.gamma_net = Linear(context_dim, d_model, rng, dtype)
        self.beta_net = Linear(context_dim, d_model, rng, dtype)
        self.gamma_net.b.data = np.ones(d_model, dtype=dtype)

    def __call__(self, h: Tensor, c: Tensor) -> Tensor:
        return self.gamma_net(c) * h + self.beta_net(c)


class PredictionHead(Module):
    def __init__(self, d_model, hidden, out_dim, dropout, rng, dtype=np.float32):
        super().__init__()
        self.fc1 = Linear(d_model, hidden, rng, dtype)
        self.drop = Dropout(dropout)
        self.fc2 = Linear(hidden, out_dim, rng, dtype)

    def __call__(self, h: Tensor, rng) -> Tensor:
        return self.fc2(self.drop(self.fc1(h).relu(), rng))


class PreparedBatch:
    """Model-ready arrays for a list of records."""

    def __init__(self, records, vocab, cfg: ModelConfig, dtype=np.float32, need_1d=True, need_3d=True):
        self.n = len(records)
        self.records = records
        if need_1d:
            seqs = [tokenize_selfies(r.selfies, vocab) for r in records]
            self.token_ids = np.stack([s.ids for s in seqs])
            self.token_mask = np.stack([s.mask for s in seqs])
        else:
            self.token_ids = self.token_mask = None
        self.graph = batch_graphs(records, dtype)
        if need_3d:
            units, offsets, energies = [], [0], []
            for r in records:
                feats = np.stack([atom_features(a) for a in r.atoms]).astype(dtype)
                for c in r.conformers:
                    units.append((feats, c.coords))
                offsets.append(offsets[-1] + len(r.conformers))
                energies.append(np.asarray([c.energy for c in r.conformers]))
            self.conf_batch = batch_conformers(units, cfg.enc3d, dtype)
            self.conf_offsets = offsets
            self.energies = energies
        else:
            self.conf_batch = None
        self.context = np.asarray([r.context for r in records], dtype=dtype)
        if self.context.shape[1] != cfg.context_dim:
            raise ValueError(f"context length {self.context.shape[1]} != context_dim {cfg.context_dim}")
        labels = np.zeros((self.n, cfg.n_tasks), dtype=dtype)
        present = np.zeros((self.n, cfg.n_tasks), dtype=bool)
        for i, r in enumerate(records):
            for t, v in enumerate(r.labels[:cfg.n_tasks]):
                if v is not None:
                    labels[i, t] = v
                    present[i, t] = True
        self.labels = labels
        self.label_mask = present


class MolFMModel(Module):
    """Tri-modal molecular property model with ensemble attention and fusion."""

    def __init__(self, cfg: ModelConfig, seed=0, dtype=np.float32,
                 variant: AblationVariant = AblationVariant.FULL):
        super().__init__()
        self.cfg = cfg
        self.dtype = dtype
        self.variant = variant
        rng = np.random.default_rng(seed)
        d = cfg.enc1d.d_model
        self.enc1d = Encoder1D(cfg.enc1d, rng, dtype)
        self.enc2d = Encoder2D(cfg.enc2d, rng, dtype)
        self.enc3d = Encoder3D(cfg.enc3d, rng, dtype)
        self.ensemble = EnsembleAttention(cfg.enc3d.d_model, d, rng, dtype)
        self.ca_1d_2d = CrossAttnBlock(d, cfg.enc1d.heads, rng, dtype)
        self.ca_1d_3d = CrossAttnBlock(d, cfg.enc1d.heads, rng, dtype)
        self.ca_2d_3d = CrossAttnBlock(d, cfg.enc1d.heads, rng, dtype)
        self.fusion_mlp = MLP2(3 * d, cfg.fusion_hidden, d, rng, dtype)
        self.film = FiLMConditioner(cfg.context_dim, d, rng, dtype)
        self.head = PredictionHead(d, cfg.head_hidden, cfg.n_tasks, cfg.head_dropout, rng, dtype)
        # Pre-training heads (contrastive projections + masked-atom classifier)
        self.proj_1d = Linear(d, cfg.contrastive_dim, rng, dtype)
        self.proj_2d = Linear(d, cfg.contrastive_dim, rng, dtype)
        self.proj_3d = Linear(cfg.enc3d.d_model, cfg.contrastive_dim, rng, dtype)
        self.mask_classifier = Linear(d, cfg.n_element_classes, rng, dtype)

    # -- embedding -----------------------------------------------------------

    def embed_3d(self, batch: PreparedBatch, rng):
        conf_emb = self.enc3d(batch.conf_batch)
        h_list, alphas = [], []
        mode = self.variant.ensemble_mode
        for i in range(batch.n):
            lo, hi = batch.conf_offsets[i], batch.conf_offsets[i + 1]
            h_i, alpha = self.ensemble(conf_emb[lo:hi], batch.energies[i], mode=mode,
                                       temperature=self.cfg.temperature_k, rng=rng)
            h_list.append(h_i)
            alphas.append(alpha)
        return stack(h_list), alphas

    def embed(self, batch: PreparedBatch, rng):
        """Per-modality pooled embeddings; inactive modalities come back as None."""
        active = self.variant.active_modalities
        h1d = self.enc1d(batch.token_ids, batch.token_mask, rng) if "1d" in active else None
        h2d = self.enc2d(batch.graph) if "2d" in active else None
        if "3d" in active:
            h3d, alphas = self.embed_3d(batch, rng)
        else:
            h3d, alphas = None, None
        return h1d, h2d, h3d, alphas

    # -- fusion --------------------------------------------------------------

    def fuse(self, h1d, h2d, h3d_128, n_rows):
        d = self.cfg.enc1d.d_model
        zero = Tensor(np.zeros((n_rows, d), dtype=self.dtype))
        h3d = self.ensemble.project(h3d_128) if h3d_128 is not None else None
        if self.variant.fusion_mode == "cross_attn":
            t1 = h1d
            if h1d is not None:
                if h2d is not None:
                    t1 = t1 + self.ca_1d_2d(h1d, h2d)
                if h3d is not None:
                    t1 = t1 + self.ca_1d_3d(h1d, h3d)
            t2 = h2d
            if h2d is not None and h3d is not None:
                t2 = t2 + self.ca_2d_3d(h2d, h3d)
        else:
            t1, t2 = h1d, h2d
        parts = [t1 if t1 is not None else zero,
                 t2 if t2 is not None else zero,
                 h3d if h3d is not None else zero]
        return self.fusion_mlp(concat(parts, axis=1))

    def forward(self, batch: PreparedBatch, rng) -> Tensor:
        """Logits (classification) or raw outputs (regression), shape (B, n_tasks)."""
        h1d, h2d, h3d, _ = self.embed(batch, rng)
        fused = self.fuse(h1d, h2d, h3d, batch.n)
        if self.variant.film_enabled:
            fused = self.film(fused, Tensor(batch.context))
        return self.head(fused, rng)

    __call__ = forward

    def set_mc_dropout(self, flag: bool):
        stack_ = [self]
        while stack_:
            mod = stack_.pop()
            if isinstance(mod, Dropout):
                mod.mc = flag
            stack_.extend(mod._children())

    def count_parameters(self) -> int:
        return sum(p.data.size for p in self.parameters())


def mc_dropout_predict(model: MolFMModel, batch: PreparedBatch, passes: int, seed: int):
    """Mean and population std over dropout-active forward passes.

    Classification statistics are computed post-sigmoid. Each pass draws from
    an independent stream derived from (seed, pass index).
    """
    if passes < 1:
        raise ValueError("passes must be >= 1")
    was_training = model.training
    model.eval()
    model.set_mc_dropout(True)
    try:
        outs = []
        for t in range(passes):
            rng = np.random.default_rng([seed, t])
            out = model.forward(batch, rng)
            if model.cfg.task_kind == "binary_multitask":
                out = out.sigmoid()
            outs.append(out.data.copy())
    finally:
        model.set_mc_dropout(False)
        model.train(was_training)
    arr = np.stack(outs)
    return arr.mean(axis=0), arr.std(axis=0)
