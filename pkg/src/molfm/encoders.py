"""Modality encoders: SELFIES transformer (1D), GIN (2D), SchNet-lite (3D)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor, concat, gather_rows, segment_sum, softmax
from .nn import MLP2, BatchNorm1d, Dropout, Embedding, LayerNorm, Linear, Module
from .records import ATOM_FEATURE_DIM, MAX_SEQ_LEN, atom_features


@dataclass
class Encoder1DConfig:
    vocab_size: int = 16384
    d_model: int = 256
    layers: int = 4
    heads: int = 8
    d_ff: int = 1024
    max_len: int = MAX_SEQ_LEN
    dropout: float = 0.1

    def __post_init__(self):
        if self.d_model % self.heads != 0:
            raise ValueError("d_model must be divisible by heads")


@dataclass
class Encoder2DConfig:
    in_dim: int = ATOM_FEATURE_DIM
    d_model: int = 256
    layers: int = 4
    mlp_hidden: int = 256


@dataclass
class Encoder3DConfig:
    d_model: int = 128
    interactions: int = 3
    cutoff: float = 10.0
    n_rbf: int = 64


# -- graph batching ----------------------------------------------------------


@dataclass
class GraphBatch:
    """Batched molecular graphs as one disconnected graph.

    Edges are stored directed, both orientations per bond, intra-graph only.
    `mask_flag` is the masked-atom indicator channel appended to the 38
    symbolic features before the input projection.
    """

    features: np.ndarray     # (N, 38)
    mask_flag: np.ndarray    # (N,)
    edge_src: np.ndarray
    edge_dst: np.ndarray
    graph_ids: np.ndarray    # (N,)
    n_graphs: int
    node_counts: np.ndarray  # (n_graphs,)


def batch_graphs(records, dtype=np.float32) -> GraphBatch:
    feats, src, dst, gids, counts = [], [], [], [], []
    offset = 0
    for g, rec in enumerate(records):
        n = len(rec.atoms)
        if n == 0:
            raise ValueError(f"record {rec.id}: empty graph")
        feats.append(np.stack([atom_features(a) for a in rec.atoms]))
        for i, j, _order in rec.bonds:
            src.extend((offset + i, offset + j))
            dst.extend((offset + j, offset + i))
        gids.extend([g] * n)
        counts.append(n)
        offset += n
    return GraphBatch(
        features=np.concatenate(feats).astype(dtype),
        mask_flag=np.zeros(offset, dtype=dtype),
        edge_src=np.asarray(src, dtype=np.int64),
        edge_dst=np.asarray(dst, dtype=np.int64),
        graph_ids=np.asarray(gids, dtype=np.int64),
        n_graphs=len(records),
        node_counts=np.asarray(counts, dtype=np.int64),
    )


def gin_layer(h: Tensor, edge_src, edge_dst, eps: Tensor, mlp) -> Tensor:
    """One GIN update: MLP((1 + eps) * h_v + sum of neighbor states)."""
    n = h.shape[0]
    if len(edge_src):
        neigh = segment_sum(gather_rows(h, edge_src), edge_dst, n)
        agg = h * (eps + 1.0) + neigh
    else:
        agg = h * (eps + 1.0)
    return mlp(agg)


def segment_mean(h: Tensor, segment_ids, counts) -> Tensor:
    total = segment_sum(h, segment_ids, len(counts))
    return total * Tensor((1.0 / np.asarray(counts, dtype=h.data.dtype))[:, None])


# -- 2D encoder --------------------------------------------------------------


class Encoder2D(Module):
    """4-layer GIN with batch norm and residual connections, mean-pooled."""

    def __init__(self, cfg: Encoder2DConfig, rng, dtype=np.float32):
        super().__init__()
        self.cfg = cfg
        d = cfg.d_model
        # +1 input channel for the masked-atom flag
        self.in_proj = Linear(cfg.in_dim + 1, d, rng, dtype)
        self.mlps = [MLP2(d, cfg.mlp_hidden, d, rng, dtype) for _ in range(cfg.layers)]
        self.norms = [BatchNorm1d(d, dtype=dtype) for _ in range(cfg.layers)]
        self.eps = [Tensor(np.zeros((), dtype=dtype), requires_grad=True) for _ in range(cfg.layers)]

    def node_states(self, g: GraphBatch) -> Tensor:
        x = Tensor(np.concatenate([g.features, g.mask_flag[:, None]], axis=1))
        h = self.in_proj(x)
        for mlp, norm, eps in zip(self.mlps, self.norms, self.eps):
            h = norm(gin_layer(h, g.edge_src, g.edge_dst, eps, mlp)) + h
        return h

    def __call__(self, g: GraphBatch) -> Tensor:
        return segment_mean(self.node_states(g), g.graph_ids, g.node_counts)

    def named_parameters(self, prefix=""):
        yield from super().named_parameters(prefix)
        for i, e in enumerate(self.eps):
            yield f"{prefix}eps.{i}", e


# -- 1D encoder --------------------------------------------------------------


def sinusoidal_positions(length: int, dim: int, dtype=np.float32) -> np.ndarray:
    pos = np.arange(length)[:, None]
    idx = np.arange(dim // 2)[None, :]
    angle = pos / np.power(10000.0, 2.0 * idx / dim)
    pe = np.zeros((length, dim))
    pe[:, 0::2] = np.sin(angle)
    pe[:, 1::2] = np.cos(angle)
    return pe.astype(dtype)


class MultiHeadSelfAttention(Module):
    def __init__(self, d_model, heads, rng, dtype=np.float32):
        super().__init__()
        self.heads = heads
        self.head_dim = d_model // heads
        self.wq = Linear(d_model, d_model, rng, dtype)
        self.wk = Linear(d_model, d_model, rng, dtype)
        self.wv = Linear(d_model, d_model, rng, dtype)
        self.wo = Linear(d_model, d_model, rng, dtype)

    def __call__(self, x: Tensor, key_mask: np.ndarray) -> Tensor:
        b, t, d = x.shape
        h, dh = self.heads, self.head_dim

        def split(t_):
            return t_.reshape(b, t, h, dh).transpose(0, 2, 1, 3)

        q, k, v = split(self.wq(x)), split(self.wk(x)), split(self.wv(x))
        scores = q @ k.transpose(0, 1, 3, 2) * (1.0 / np.sqrt(dh))
        bias = np.where(key_mask[:, None, None, :], 0.0, -1e9).astype(x.data.dtype)
        attn = softmax(scores + Tensor(bias), axis=-1)
        out = (attn @ v).transpose(0, 2, 1, 3).reshape(b, t, d)
        return self.wo(out)


class TransformerLayer(Module):
    def __init__(self, d_model, heads, d_ff, dropout, rng, dtype=np.float32):
        super().__init__()
        self.attn = MultiHeadSelfAttention(d_model, heads, rng, dtype)
        self.ff = MLP2(d_model, d_ff, d_model, rng, dtype)
        self.norm1 = LayerNorm(d_model, dtype=dtype)
        self.norm2 = LayerNorm(d_model, dtype=dtype)
        self.drop = Dropout(dropout)

    def __call__(self, x, key_mask, rng):
        x = self.norm1(x + self.drop(self.attn(x, key_mask), rng))
        x = self.norm2(x + self.drop(self.ff(x), rng))
        return x


class Encoder1D(Module):
    """Transformer over SELFIES tokens; masked mean pool over valid positions."""

    def __init__(self, cfg: Encoder1DConfig, rng, dtype=np.float32):
        super().__init__()
        self.cfg = cfg
        self.embed = Embedding(cfg.vocab_size, cfg.d_model, rng, dtype)
        self.pe = sinusoidal_positions(cfg.max_len, cfg.d_model, dtype)
        self.layers = [TransformerLayer(cfg.d_model, cfg.heads, cfg.d_ff, cfg.dropout, rng, dtype)
                       for _ in range(cfg.layers)]
        self.final_norm = LayerNorm(cfg.d_model, dtype=dtype)

    def __call__(self, ids: np.ndarray, mask: np.ndarray, rng) -> Tensor:
        valid = mask.sum(axis=1)
        if np.any(valid == 0):
            raise ValueError("all-PAD sequence in batch")
        # Trailing all-PAD columns cannot affect the output; trim them for speed.
        t = int(valid.max())
        ids, mask = ids[:, :t], mask[:, :t]
        x = self.embed(ids) + Tensor(self.pe[None, :t, :])
        for layer in self.layers:
            x = layer(x, mask, rng)
        x = self.final_norm(x)
        m = Tensor(mask[:, :, None].astype(x.data.dtype))
        return (x * m).sum(axis=1) * Tensor((1.0 / valid)[:, None].astype(x.data.dtype))


# -- 3D encoder --------------------------------------------------------------


def rbf_expand(d, cutoff: float, n_rbf: int) -> np.ndarray:
    """Gaussian radial basis on [0, cutoff] with a cosine cutoff envelope.

    Centers are evenly spaced; the Gaussian width equals the center spacing.
    Distances at or beyond the cutoff expand to the zero vector.
    """
    d = np.asarray(d, dtype=np.float64)
    centers = np.linspace(0.0, cutoff, n_rbf)
    width = centers[1] - centers[0] if n_rbf > 1 else cutoff
    gauss = np.exp(-((d[..., None] - centers) ** 2) / (2.0 * width ** 2))
    envelope = np.where(d <= cutoff, 0.5 * (np.cos(np.pi * d / cutoff) + 1.0), 0.0)
    return gauss * envelope[..., None]


@dataclass
class Conformer3DBatch:
    """One unit per (molecule, conformer); distances precomputed as constants."""

    features: np.ndarray   # (N, 38)
    unit_ids: np.ndarray   # (N,)
    n_units: int
    node_counts: np.ndarray
    edge_src: np.ndarray
    edge_dst: np.ndarray
    edge_rbf: np.ndarray   # (E, n_rbf)


def batch_conformers(units, cfg: Encoder3DConfig, dtype=np.float32) -> Conformer3DBatch:
    """`units` is a list of (feature matrix (n,38), coords (n,3)) pairs."""
    feats, uids, counts = [], [], []
    src, dst, rbf = [], [], []
    offset = 0
    for u, (f, coords) in enumerate(units):
        n = f.shape[0]
        if n == 0:
            raise ValueError("empty conformer unit")
        feats.append(f)
        uids.extend([u] * n)
        counts.append(n)
        if n > 1:
            diff = coords[:, None, :] - coords[None, :, :]
            dist = np.sqrt((diff * diff).sum(axis=-1))
            ii, jj = np.nonzero((dist < cfg.cutoff) & ~np.eye(n, dtype=bool))
            src.append(offset + jj)   # message flows from neighbor j ...
            dst.append(offset + ii)   # ... into atom i
            rbf.append(rbf_expand(dist[ii, jj], cfg.cutoff, cfg.n_rbf))
        offset += n
    empty = np.zeros(0, dtype=np.int64)
    return Conformer3DBatch(
        features=np.concatenate(feats).astype(dtype),
        unit_ids=np.asarray(uids, dtype=np.int64),
        n_units=len(units),
        node_counts=np.asarray(counts, dtype=np.int64),
        edge_src=np.concatenate(src) if src else empty,
        edge_dst=np.concatenate(dst) if dst else empty,
        edge_rbf=(np.concatenate(rbf) if rbf else np.zeros((0, cfg.n_rbf))).astype(dtype),
    )


class SchNetInteraction(Module):
    """Continuous-filter update: h_i += sum_j h_j * W(||r_i - r_j||)."""

    def __init__(self, d_model, n_rbf, rng, dtype=np.float32):
        super().__init__()
        self.filter1 = Linear(n_rbf, d_model, rng, dtype)
        self.filter2 = Linear(d_model, d_model, rng, dtype)

    def __call__(self, h: Tensor, batch: Conformer3DBatch) -> Tensor:
        if not len(batch.edge_src):
            return h
        w = self.filter2(self.filter1(Tensor(batch.edge_rbf)).softplus())
        msg = gather_rows(h, batch.edge_src) * w
        return h + segment_sum(msg, batch.edge_dst, h.shape[0])


class Encoder3D(Module):
    """SchNet-lite: atom embedding, 3 interactions, mean pool, output projection."""

    def __init__(self, cfg: Encoder3DConfig, rng, dtype=np.float32):
        super().__init__()
        self.cfg = cfg
        self.embed = Linear(ATOM_FEATURE_DIM, cfg.d_model, rng, dtype)
        self.interactions = [SchNetInteraction(cfg.d_model, cfg.n_rbf, rng, dtype)
                             for _ in range(cfg.interactions)]
        self.out_proj = Linear(cfg.d_model, cfg.d_model, rng, dtype)

    def __call__(self, batch: Conformer3DBatch) -> Tensor:
        h = self.embed(Tensor(batch.features))
        for inter in self.interactions:
            h = inter(h, batch)
        pooled = segment_mean(h, batch.unit_ids, batch.node_counts)
        return self.out_proj(pooled)

    def encode_single(self, conformer, atoms, dtype=np.float32) -> Tensor:
        feats = np.stack([atom_features(a) for a in atoms]).astype(dtype)
        batch = batch_conformers([(feats, conformer.coords)], self.cfg, dtype)
        return self(batch).reshape(self.cfg.d_model)
