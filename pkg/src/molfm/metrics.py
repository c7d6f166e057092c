"""Evaluation metrics: ROC-AUC, RMSE, calibration, Tanimoto, attention statistics."""

from __future__ import annotations

import numpy as np


def roc_auc(scores, labels):
    """Mann-Whitney U / (n_pos * n_neg) with ties counted 0.5.

    Returns None when only one class is present (excluded from task means).
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    if len(pos) == 0 or len(neg) == 0:
        return None
    # Tied ranks over the pooled scores give the U statistic directly.
    pooled = np.concatenate([pos, neg])
    order = np.argsort(pooled, kind="stable")
    ranks = np.empty(len(pooled))
    sorted_scores = pooled[order]
    i = 0
    while i < len(pooled):
        j = i
        while j + 1 < len(pooled) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    n_pos = len(pos)
    u = ranks[:n_pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * len(neg)))


def multitask_mean_auc(score_columns, label_columns):
    """Unweighted mean AUC over tasks where both classes are present.

    Each column carries per-sample (score, label) with None labels skipped.
    """
    aucs = []
    for scores, labels in zip(score_columns, label_columns):
        keep = [(s, l) for s, l in zip(scores, labels) if l is not None]
        if not keep:
            continue
        s, l = zip(*keep)
        auc = roc_auc(np.asarray(s), np.asarray(l))
        if auc is not None:
            aucs.append(auc)
    if not aucs:
        raise ValueError("no computable task (every task is single-class)")
    return float(np.mean(aucs))


def rmse(preds, labels):
    preds = np.asarray(preds, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if preds.size == 0:
        raise ValueError("empty prediction list")
    if preds.shape != labels.shape:
        raise ValueError("length mismatch")
    return float(np.sqrt(np.mean((preds - labels) ** 2)))


def uncertainty_calibration(preds, stds, labels, sigma_threshold=0.15):
    """Error rates in high- vs low-uncertainty buckets and their ratio.

    Error = (pred >= 0.5) != label. Ratio is None when undefined (empty
    bucket or zero low-bucket rate with zero high-bucket rate).
    """
    preds = np.asarray(preds, dtype=np.float64)
    stds = np.asarray(stds, dtype=np.float64)
    labels = np.asarray(labels)
    errors = (preds >= 0.5).astype(int) != labels
    high = stds > sigma_threshold
    out = {"high_count": int(high.sum()), "low_count": int((~high).sum()),
           "high_error_rate": None, "low_error_rate": None, "ratio": None}
    if out["high_count"]:
        out["high_error_rate"] = float(errors[high].mean())
    if out["low_count"]:
        out["low_error_rate"] = float(errors[~high].mean())
    if out["high_error_rate"] is not None and out["low_error_rate"] not in (None, 0.0):
        out["ratio"] = out["high_error_rate"] / out["low_error_rate"]
    return out


def tanimoto(a, b):
    """|a AND b| / |a OR b| over equal-length bitsets; empty union counts as 1."""
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    if a.shape != b.shape:
        raise ValueError(f"bitset length mismatch: {a.shape} vs {b.shape}")
    union = np.logical_or(a, b).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(a, b).sum() / union)


def fingerprint_centroid(fps):
    """Majority-vote bitset over training fingerprints."""
    fps = np.asarray(list(fps), dtype=bool)
    if fps.size == 0:
        raise ValueError("no fingerprints")
    return fps.sum(axis=0) * 2 > fps.shape[0]


def distance_to_centroid(fp, training_fps):
    return 1.0 - tanimoto(fp, fingerprint_centroid(training_fps))


def pearson(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.std() == 0 or y.std() == 0:
        raise ValueError("zero variance in correlation input")
    return float(np.corrcoef(x, y)[0, 1])


def attention_boltzmann_stats(alphas, priors):
    """Pearson r between attention weights and Boltzmann priors plus the
    per-molecule rate at which their argmaxes agree. K=1 molecules are skipped."""
    flat_a, flat_p, agree = [], [], []
    for a, p in zip(alphas, priors):
        a = np.asarray(a, dtype=np.float64)
        p = np.asarray(p, dtype=np.float64)
        if len(a) < 2:
            continue
        flat_a.extend(a)
        flat_p.extend(p)
        agree.append(int(np.argmax(a) == np.argmax(p)))
    if not flat_a:
        raise ValueError("correlation undefined: no molecule has K >= 2 conformers")
    return {"pearson_r": pearson(flat_a, flat_p),
            "argmax_agreement": float(np.mean(agree)),
            "n_pairs": len(flat_a)}
