"""Pre-training losses (InfoNCE, masked-atom prediction) and supervised losses."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, gather_rows, log_softmax
from .encoders import GraphBatch
from .records import element_class


@dataclass
class MaskingConfig:
    mask_fraction: float = 0.15

    def __post_init__(self):
        if not 0.0 < self.mask_fraction <= 1.0:
            raise ValueError("mask_fraction must be in (0, 1]")


def l2_normalize(z: Tensor, eps_check=True) -> Tensor:
    norms = (z * z).sum(axis=1, keepdims=True).sqrt()
    if eps_check and np.any(norms.data < 1e-12):
        raise ValueError("zero-norm row cannot be L2-normalized")
    return z / norms


def info_nce(za: Tensor, zb: Tensor, tau: float, normalize=True) -> Tensor:
    """Contrastive loss with in-batch negatives over the rows of zb.

    Row i of za is the anchor; its positive is row i of zb, negatives are the
    other rows of zb.
    """
    n = za.shape[0]
    if n < 2:
        raise ValueError("info_nce needs at least 2 rows")
    if tau <= 0:
        raise ValueError("temperature must be positive")
    if normalize:
        za, zb = l2_normalize(za), l2_normalize(zb)
    sims = (za @ zb.transpose()) * (1.0 / tau)
    logp = log_softmax(sims, axis=1)
    diag = gather_rows(logp.reshape(n * n), np.arange(n) * (n + 1))
    return -diag.mean()


def symmetric_contrastive(z1d: Tensor, z2d: Tensor, z3d: Tensor, tau: float, normalize=True) -> Tensor:
    """Mean InfoNCE over both directions of the three modality pairs."""
    pairs = [(z1d, z2d), (z2d, z1d), (z1d, z3d), (z3d, z1d), (z2d, z3d), (z3d, z2d)]
    total = None
    for a, b in pairs:
        loss = info_nce(a, b, tau, normalize)
        total = loss if total is None else total + loss
    return total * (1.0 / len(pairs))


def mask_atoms(g: GraphBatch, records, cfg: MaskingConfig, rng: np.random.Generator):
    """Mask atom features per graph; returns (masked GraphBatch copy, targets).

    Each graph gets max(1, round(fraction * n_nodes)) masked nodes. Masked
    feature rows are zeroed and the mask flag channel set. Targets are
    (global node index, element class id) pairs.
    """
    features = g.features.copy()
    mask_flag = g.mask_flag.copy()
    targets = []
    offset = 0
    for gi, rec in enumerate(records):
        n = int(g.node_counts[gi])
        n_mask = max(1, int(round(cfg.mask_fraction * n)))
        chosen = rng.choice(n, size=min(n_mask, n), replace=False)
        for local in sorted(int(c) for c in chosen):
            node = offset + local
            targets.append((node, element_class(rec.atoms[local])))
            features[node, :] = 0.0
            mask_flag[node] = 1.0
        offset += n
    masked = GraphBatch(features=features, mask_flag=mask_flag, edge_src=g.edge_src,
                        edge_dst=g.edge_dst, graph_ids=g.graph_ids, n_graphs=g.n_graphs,
                        node_counts=g.node_counts)
    return masked, targets


def masked_atom_loss(logits: Tensor, element_ids) -> Tensor:
    """Mean cross-entropy of element-class logits at masked positions."""
    element_ids = np.asarray(element_ids, dtype=np.int64)
    m, c = logits.shape
    if m == 0:
        raise ValueError("no masked-atom targets")
    logp = log_softmax(logits, axis=1)
    picked = gather_rows(logp.reshape(m * c), np.arange(m) * c + element_ids)
    return -picked.mean()


def pretrain_loss(l_ctr: Tensor, l_map: Tensor, lambda_map: float = 0.5) -> Tensor:
    return l_ctr + l_map * lambda_map


def supervised_loss(outputs: Tensor, labels: np.ndarray, label_mask: np.ndarray,
                    task_kind: str) -> Tensor:
    """Masked loss over present labels: sigmoid cross-entropy or MSE."""
    mask = label_mask.astype(outputs.data.dtype)
    n_present = mask.sum()
    if n_present == 0:
        raise ValueError("all labels missing in batch")
    y = Tensor(labels.astype(outputs.data.dtype))
    w = Tensor(mask / n_present)
    if task_kind == "binary_multitask":
        # Stable BCE with logits: max(x,0) - x*y + log(1 + e^-|x|)
        x = outputs
        per = x.relu() - x * y + (-abs_t(x)).softplus()
        return (per * w).sum()
    if task_kind == "regression":
        diff = outputs - y
        return (diff * diff * w).sum()
    raise ValueError(f"bad task_kind {task_kind!r}")


def abs_t(x: Tensor) -> Tensor:
    sign = Tensor(np.sign(x.data).astype(x.data.dtype))
    return x * sign
