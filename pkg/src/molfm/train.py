"""Training loops: contrastive/masked pre-training, supervised fine-tuning, ablations."""

from __future__ import annotations

import copy
import math

import numpy as np

from .autodiff import Tensor, gather_rows
from .checkpoint import save_checkpoint
from .config import AblationVariant, ModelConfig, TrainConfig
from .fusion import MolFMModel, PreparedBatch, mc_dropout_predict
from .metrics import attention_boltzmann_stats, multitask_mean_auc, rmse, uncertainty_calibration
from .nn import AdamW, CosineWarmRestarts, WarmupCosine
from .objectives import (MaskingConfig, mask_atoms, masked_atom_loss, pretrain_loss,
                         supervised_loss, symmetric_contrastive)
from .records import boltzmann_weights, build_vocab


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss."""


def _batches(n, batch_size, rng=None):
    order = np.arange(n)
    if rng is not None:
        rng.shuffle(order)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def _check_finite(value, what):
    if not math.isfinite(value):
        raise DivergenceError(f"non-finite {what}: {value}")


def run_pretrain(records, model_cfg: ModelConfig, train_cfg: TrainConfig, seed=0,
                 vocab=None, log=None):
    """Optimize the combined contrastive + masked-atom objective.

    Returns (model, vocab, history) where history has per-epoch loss components.
    """
    if vocab is None:
        vocab = build_vocab([r.selfies for r in records])
    model = MolFMModel(model_cfg, seed=seed)
    rng = np.random.default_rng([seed, 1])
    mask_rng = np.random.default_rng([seed, 2])
    steps_per_epoch = max(1, math.ceil(len(records) / train_cfg.batch_size))
    sched = WarmupCosine(train_cfg.lr, train_cfg.warmup_steps,
                         max(train_cfg.epochs * steps_per_epoch, train_cfg.warmup_steps + 1))
    opt = AdamW(model.parameters(), lr=train_cfg.lr, weight_decay=train_cfg.weight_decay)
    mask_cfg = MaskingConfig(train_cfg.mask_fraction)
    history = []
    step = 0
    for epoch in range(train_cfg.epochs):
        epoch_ctr, epoch_map, epoch_total, n_batches = 0.0, 0.0, 0.0, 0
        for idx in _batches(len(records), train_cfg.batch_size, rng):
            batch_records = [records[i] for i in idx]
            if len(batch_records) < 2:
                continue  # contrastive loss needs in-batch negatives
            batch = PreparedBatch(batch_records, vocab, model_cfg)
            h1d, h2d, h3d, _ = model.embed(batch, rng)
            l_ctr = symmetric_contrastive(model.proj_1d(h1d), model.proj_2d(h2d),
                                          model.proj_3d(h3d), train_cfg.contrastive_tau)
            masked_graph, targets = mask_atoms(batch.graph, batch_records, mask_cfg, mask_rng)
            node_states = model.enc2d.node_states(masked_graph)
            node_idx = np.asarray([t[0] for t in targets])
            logits = model.mask_classifier(gather_rows(node_states, node_idx))
            l_map = masked_atom_loss(logits, [t[1] for t in targets])
            loss = pretrain_loss(l_ctr, l_map, train_cfg.lambda_map)
            _check_finite(float(loss.data), "pre-training loss")
            opt.zero_grad()
            loss.backward()
            step += 1
            opt.lr = sched.lr_at(step)
            opt.step()
            epoch_ctr += float(l_ctr.data)
            epoch_map += float(l_map.data)
            epoch_total += float(loss.data)
            n_batches += 1
        row = {"epoch": epoch, "contrastive": epoch_ctr / n_batches,
               "masked_atom": epoch_map / n_batches, "total": epoch_total / n_batches}
        history.append(row)
        if log:
            log(f"pretrain epoch {epoch}: total={row['total']:.4f} "
                f"ctr={row['contrastive']:.4f} map={row['masked_atom']:.4f}")
    return model, vocab, history


def load_pretrained_encoders(model: MolFMModel, tensors: dict):
    """Copy encoder/ensemble/projection tensors from a pre-training checkpoint."""
    prefixes = ("enc1d.", "enc2d.", "enc3d.", "ensemble.", "proj_", "mask_classifier.")
    own = dict(model.named_parameters())
    own.update(dict(model.named_buffers()))
    loaded = 0
    for name, arr in tensors.items():
        if not name.startswith(prefixes) or name not in own:
            continue
        target = own[name]
        if target.data.shape != arr.shape:
            raise ValueError(f"shape mismatch loading {name}: {arr.shape} vs {target.data.shape}")
        target.data = np.asarray(arr, dtype=target.data.dtype).copy()
        loaded += 1
    if loaded == 0:
        raise ValueError("checkpoint contained no loadable encoder tensors")
    return loaded


def predict(model: MolFMModel, records, vocab, model_cfg: ModelConfig):
    """Deterministic eval-mode forward; probabilities for classification."""
    was_training = model.training
    model.eval()
    try:
        batch = PreparedBatch(records, vocab, model_cfg,
                              need_1d="1d" in model.variant.active_modalities,
                              need_3d="3d" in model.variant.active_modalities)
        out = model.forward(batch, np.random.default_rng(0))
        if model_cfg.task_kind == "binary_multitask":
            out = out.sigmoid()
        return out.data.copy(), batch
    finally:
        model.train(was_training)


def evaluate(model, records, vocab, model_cfg: ModelConfig):
    """Returns (metric value or None, selection score: higher is better)."""
    preds, batch = predict(model, records, vocab, model_cfg)
    if model_cfg.task_kind == "regression":
        mask = batch.label_mask
        value = rmse(preds[mask], batch.labels[mask])
        return value, -value
    score_cols, label_cols = [], []
    for t in range(model_cfg.n_tasks):
        score_cols.append(list(preds[:, t]))
        label_cols.append([rec.labels[t] for rec in records])
    try:
        value = multitask_mean_auc(score_cols, label_cols)
        return value, value
    except ValueError:
        return None, float("-inf")


def run_finetune(records, split, model_cfg: ModelConfig, train_cfg: TrainConfig,
                 variant: AblationVariant = AblationVariant.FULL, init_tensors=None,
                 vocab=None, log=None):
    """Supervised training with early stopping; one run per configured seed.

    Returns a dict with per-seed results and the mean/std of the test metric.
    """
    if vocab is None:
        vocab = build_vocab([r.selfies for r in records])
    by_part = {p: [r for r in records if split.assignment.get(r.id) == p]
               for p in ("train", "val", "test")}
    for part in ("train", "val", "test"):
        if not by_part[part]:
            raise ValueError(f"split part '{part}' is empty")
    runs = []
    for seed in train_cfg.seeds:
        runs.append(_finetune_one_seed(by_part, model_cfg, train_cfg, variant,
                                       init_tensors, vocab, seed, log))
    tests = [r["test_metric"] for r in runs if r["test_metric"] is not None]
    summary = {
        "variant": variant.value,
        "runs": runs,
        "test_mean": float(np.mean(tests)) if tests else None,
        "test_std": float(np.std(tests)) if tests else None,
    }
    return summary


def _finetune_one_seed(by_part, model_cfg, train_cfg, variant, init_tensors, vocab, seed, log):
    model = MolFMModel(model_cfg, seed=seed, variant=variant)
    if init_tensors is not None and variant is not AblationVariant.NO_PRETRAIN:
        load_pretrained_encoders(model, init_tensors)
    rng = np.random.default_rng([seed, 3])
    opt = AdamW(model.parameters(), lr=train_cfg.lr, weight_decay=train_cfg.weight_decay)
    sched = CosineWarmRestarts(train_cfg.lr, train_cfg.restart_t0, train_cfg.restart_t_mult)
    train_recs = by_part["train"]
    best_score, best_state, bad_epochs = float("-inf"), None, 0
    history = []
    epochs_ran = 0
    for epoch in range(train_cfg.epochs):
        epochs_ran = epoch + 1
        opt.lr = sched.lr_at(epoch)
        for idx in _batches(len(train_recs), train_cfg.batch_size, rng):
            batch_records = [train_recs[i] for i in idx]
            batch = PreparedBatch(batch_records, vocab, model_cfg,
                                  need_1d="1d" in variant.active_modalities,
                                  need_3d="3d" in variant.active_modalities)
            if not batch.label_mask.any():
                continue
            out = model.forward(batch, rng)
            loss = supervised_loss(out, batch.labels, batch.label_mask, model_cfg.task_kind)
            _check_finite(float(loss.data), "fine-tuning loss")
            opt.zero_grad()
            loss.backward()
            opt.step()
        val_metric, val_score = evaluate(model, by_part["val"], vocab, model_cfg)
        history.append({"epoch": epoch, "val_metric": val_metric, "val_score": val_score})
        if log:
            log(f"finetune seed {seed} epoch {epoch}: val={val_metric}")
        if val_score > best_score:
            best_score = val_score
            best_state = copy.deepcopy(model.state_dict())
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= train_cfg.patience:
                break
    if best_state is not None:
        model.load_state_dict(best_state)
    val_metric, _ = evaluate(model, by_part["val"], vocab, model_cfg)
    test_metric, _ = evaluate(model, by_part["test"], vocab, model_cfg)
    return {"seed": seed, "val_metric": val_metric, "test_metric": test_metric,
            "best_val_score": best_score, "epochs_ran": epochs_ran,
            "history": history, "model": model}


def run_ablation(records, split, model_cfg, train_cfg, variants, init_tensors=None,
                 vocab=None, log=None):
    """Fine-tune each variant; rows report mean +/- std and delta vs the full model."""
    results, errors = {}, {}
    first_exc = None
    for variant in variants:
        try:
            results[variant] = run_finetune(records, split, model_cfg, train_cfg, variant,
                                            init_tensors, vocab, log)
        except Exception as exc:  # keep going; report per-variant failures
            errors[variant] = str(exc)
            first_exc = first_exc or exc
            if log:
                log(f"variant {variant.value} failed: {exc}")
    if not results and first_exc is not None:
        raise first_exc  # nothing succeeded; surface the underlying failure
    full = results.get(AblationVariant.FULL)
    rows = []
    for variant in variants:
        if variant in errors:
            rows.append({"variant": variant.value, "error": errors[variant]})
            continue
        res = results[variant]
        delta = None
        if full is not None and full["test_mean"] is not None and res["test_mean"] is not None:
            delta = res["test_mean"] - full["test_mean"]
        rows.append({"variant": variant.value, "mean": res["test_mean"],
                     "std": res["test_std"], "delta_vs_full": delta})
    return rows, results


def attention_boltzmann_correlation(model: MolFMModel, records, model_cfg: ModelConfig):
    """Correlation between learned ensemble attention and Boltzmann priors."""
    was_training = model.training
    model.eval()
    try:
        usable = [r for r in records if len(r.conformers) >= 2]
        if not usable:
            raise ValueError("correlation undefined: no molecule has K >= 2 conformers")
        batch = PreparedBatch(usable, None, model_cfg, need_1d=False)
        _, alphas = model.embed_3d(batch, np.random.default_rng(0))
        priors = [boltzmann_weights([c.energy for c in r.conformers], model_cfg.temperature_k)
                  for r in usable]
        return attention_boltzmann_stats(alphas, priors)
    finally:
        model.train(was_training)


def calibration_report(model: MolFMModel, records, vocab, model_cfg: ModelConfig,
                       passes=20, seed=0, sigma_threshold=0.15):
    """MC-dropout calibration over all present binary labels."""
    batch = PreparedBatch(records, vocab, model_cfg,
                          need_1d="1d" in model.variant.active_modalities,
                          need_3d="3d" in model.variant.active_modalities)
    mean, std = mc_dropout_predict(model, batch, passes, seed)
    preds, stds, labels = [], [], []
    for i, rec in enumerate(records):
        for t in range(model_cfg.n_tasks):
            if rec.labels[t] is not None:
                preds.append(mean[i, t])
                stds.append(std[i, t])
                labels.append(int(rec.labels[t]))
    return uncertainty_calibration(preds, stds, labels, sigma_threshold)


def model_tensors(model: MolFMModel) -> dict:
    return model.state_dict()


def write_model_checkpoint(path, model: MolFMModel, config_blob: dict, epoch=0,
                           best_val=None, rng_state=None):
    meta = {"config": config_blob, "epoch": epoch, "best_val_metric": best_val,
            "rng_state": rng_state}
    save_checkpoint(path, model_tensors(model), meta)
