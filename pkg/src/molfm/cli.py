"""Command-line entry point: validate, pretrain, finetune, ablate, gradcheck, analyze."""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from collections import Counter

import numpy as np

from . import checkpoint as ckpt
from .config import (DEFAULT_RUN_CONFIG, ConfigError, apply_overrides, load_run_config,
                     model_config_from_run, parse_variant, TrainConfig)
from .records import DatasetError, UNK_ID, build_vocab, parse_dataset_file, tokenize_selfies
from .split import load_split, save_split, scaffold_overlap_stats, scaffold_split
from .train import (DivergenceError, attention_boltzmann_correlation, calibration_report,
                    load_pretrained_encoders, run_ablation, run_finetune, run_pretrain,
                    write_model_checkpoint)

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


def _flatten(d, prefix=""):
    for key, value in d.items():
        here = f"{prefix}.{key}" if prefix else key
        if isinstance(value, dict):
            yield from _flatten(value, here)
        else:
            yield here, value


def _config_help() -> str:
    lines = ["config keys and defaults:"]
    for key, value in _flatten(DEFAULT_RUN_CONFIG):
        lines.append(f"  {key} = {json.dumps(value)}")
    return "\n".join(lines)


def _load_config(args) -> dict:
    doc = {}
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    explicit_seeds = "seeds" in doc
    config = load_run_config(doc)
    config = apply_overrides(config, args.set or [])
    if not explicit_seeds and not any(o.startswith("seeds=") for o in (args.set or [])):
        env_seed = os.environ.get("MOLFM_SEED")
        if env_seed is not None:
            config["seeds"] = [int(env_seed)]
    if args.output_dir:
        config["output_dir"] = args.output_dir
    return config


def _prepare_run(config, need_labels=True):
    """Load data, build vocab, derive model config; returns a context dict."""
    path = config["data"]["path"]
    if not path:
        raise ConfigError("data.path is required")
    if not os.path.exists(path):
        raise FileNotFoundError(f"dataset not found: {path}")
    records = parse_dataset_file(path)
    if not records:
        raise DatasetError("dataset is empty")
    config = json.loads(json.dumps(config))  # deep copy, JSON-clean
    config["model"]["n_tasks"] = len(records[0].labels)
    config["model"]["context_dim"] = max(len(records[0].context), 1)
    vocab = build_vocab([r.selfies for r in records])
    config["model"]["vocab_size"] = max(config["model"]["vocab_size"], len(vocab))
    model_cfg = model_config_from_run(config)
    return {"records": records, "vocab": vocab, "model_cfg": model_cfg, "config": config}


def _outdir(config):
    out = config["output_dir"]
    os.makedirs(out, exist_ok=True)
    return out


def _resolve_split(config, records, out):
    split_path = config["data"]["split_path"]
    if split_path:
        if not os.path.exists(split_path):
            raise FileNotFoundError(f"{os.path.basename(split_path)} not found: {split_path}")
        return load_split(split_path)
    split = scaffold_split(records, seed=config["seeds"][0])
    save_split(split, os.path.join(out, "split.json"))
    return split


def _write_metrics_csv(path, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["variant", "seed", "split", "metric", "value"])
        writer.writerows(rows)


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


# -- commands ----------------------------------------------------------------


def cmd_validate(args) -> int:
    try:
        records = parse_dataset_file(args.data)
    except DatasetError as exc:
        print(f"invalid dataset: {exc}", file=sys.stderr)
        return EXIT_DATA
    if not records:
        print("warning: 0 molecules")
        return EXIT_OK
    k_counts = Counter(len(r.conformers) for r in records)
    k_desc = ",".join(f"K={k}x{n}" for k, n in sorted(k_counts.items()))
    if len(k_counts) == 1:
        k_desc = f"K={next(iter(k_counts))}"
    vocab = build_vocab([r.selfies for r in records])
    total = unk = 0
    for r in records:
        seq = tokenize_selfies(r.selfies, vocab)
        total += int(seq.mask.sum())
        unk += int(((seq.ids == UNK_ID) & seq.mask).sum())
    unk_rate = unk / total if total else 0.0
    print(f"{len(records)} molecules, {k_desc}, {len(records[0].labels)} tasks, "
          f"UNK rate {unk_rate:.4f}, 0 errors")
    return EXIT_OK


def cmd_pretrain(args) -> int:
    config = _load_config(args)
    ctx = _prepare_run(config)
    out = _outdir(config)
    metric_cfg = config["train"]
    train_cfg = TrainConfig(phase="pretrain", epochs=metric_cfg["pretrain_epochs"],
                            batch_size=metric_cfg["pretrain_batch_size"],
                            lr=metric_cfg["pretrain_lr"],
                            weight_decay=metric_cfg["pretrain_weight_decay"],
                            warmup_steps=metric_cfg["warmup_steps"],
                            contrastive_tau=metric_cfg["contrastive_tau"],
                            mask_fraction=metric_cfg["mask_fraction"],
                            lambda_map=metric_cfg["lambda_map"],
                            seeds=tuple(config["seeds"]))
    seed = config["seeds"][0]
    model, vocab, history = run_pretrain(ctx["records"], ctx["model_cfg"], train_cfg,
                                         seed=seed, vocab=ctx["vocab"],
                                         log=print if args.verbose else None)
    with open(os.path.join(out, "pretrain_losses.csv"), "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=["epoch", "contrastive", "masked_atom", "total"])
        writer.writeheader()
        writer.writerows(history)
    meta_cfg = dict(ctx["config"])
    meta_cfg["vocab_tokens"] = vocab.id_to_token
    ckpt_path = os.path.join(out, "pretrain.ckpt")
    write_model_checkpoint(ckpt_path, model, meta_cfg, epoch=train_cfg.epochs,
                           rng_state=seed)
    print(f"pretrain done: {train_cfg.epochs} epochs, final loss "
          f"{history[-1]['total']:.4f}, checkpoint {ckpt_path}")
    return EXIT_OK


def _finetune_common(args, variants):
    config = _load_config(args)
    ctx = _prepare_run(config)
    out = _outdir(config)
    records = ctx["records"]
    split = _resolve_split(config, records, out)
    tr = config["train"]
    train_cfg = TrainConfig(phase="finetune", epochs=tr["finetune_epochs"],
                            batch_size=tr["finetune_batch_size"], lr=tr["finetune_lr"],
                            weight_decay=tr["finetune_weight_decay"], patience=tr["patience"],
                            mc_passes=tr["mc_passes"], restart_t0=tr["restart_t0"],
                            restart_t_mult=tr["restart_t_mult"], seeds=tuple(config["seeds"]))
    init_tensors = None
    if args.init_checkpoint:
        init_tensors, _meta = ckpt.load_checkpoint(args.init_checkpoint)
    rows, summary = [], {}
    full_mean = None
    ablation_rows, results = run_ablation(records, split, ctx["model_cfg"], train_cfg,
                                          variants, init_tensors, vocab=ctx["vocab"],
                                          log=print if args.verbose else None)
    for row in ablation_rows:
        if row.get("error"):
            summary[row["variant"]] = {"error": row["error"]}
            continue
        summary[row["variant"]] = {"mean": row["mean"], "std": row["std"],
                                   "delta_vs_full": row["delta_vs_full"]}
    for variant, res in results.items():
        for run in res["runs"]:
            rows.append([variant.value, run["seed"], "val", "metric", run["val_metric"]])
            rows.append([variant.value, run["seed"], "test", "metric", run["test_metric"]])
    _write_metrics_csv(os.path.join(out, "metrics.csv"), rows)
    _write_json(os.path.join(out, "summary.json"), summary)
    return config, ctx, split, results, summary, out


def cmd_finetune(args) -> int:
    from .config import AblationVariant

    variant = parse_variant(args.variant)
    config, ctx, split, results, summary, out = _finetune_common(args, [variant])
    res = results[variant]
    best = max(res["runs"], key=lambda r: (r["test_metric"] is not None, r["test_metric"]))
    meta_cfg = dict(ctx["config"])
    meta_cfg["vocab_tokens"] = ctx["vocab"].id_to_token
    meta_cfg["variant"] = variant.value
    write_model_checkpoint(os.path.join(out, "finetune.ckpt"), best["model"], meta_cfg,
                           epoch=best["epochs_ran"], best_val=best["val_metric"])
    print(f"finetune done: variant={variant.value} test mean={res['test_mean']} "
          f"std={res['test_std']}")
    return EXIT_OK


def cmd_ablate(args) -> int:
    variants = [parse_variant(v) for v in (args.variants.split(",") if args.variants else [])]
    if not variants:
        config = _load_config(args)
        variants = [parse_variant(v) for v in config["ablation"]["variants"]]
    config, ctx, split, results, summary, out = _finetune_common(args, variants)
    with open(os.path.join(out, "ablation.csv"), "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["variant", "mean", "std", "delta_vs_full"])
        for name in sorted(summary):
            entry = summary[name]
            writer.writerow([name, entry.get("mean"), entry.get("std"),
                             entry.get("delta_vs_full")])
    print(f"ablation done: {len(variants)} variants, results in {out}/ablation.csv")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .gradcheck import gradcheck_report

    results, max_err = gradcheck_report(seed=args.seed)
    if args.verbose:
        for name in sorted(results):
            print(f"  {name}: {results[name]:.3e}")
    print(f"gradcheck: {len(results)} checks, max rel-err {max_err:.3e}")
    return EXIT_OK if max_err < 1e-4 else EXIT_NUMERIC


def cmd_analyze(args) -> int:
    config = _load_config(args)
    tensors, meta = ckpt.load_checkpoint(args.checkpoint)
    run_cfg = meta["config"]
    records = parse_dataset_file(args.data)
    if not records:
        raise DatasetError("dataset is empty")
    from .config import AblationVariant
    from .fusion import MolFMModel
    from .records import Vocabulary

    model_cfg = model_config_from_run(run_cfg)
    variant = parse_variant(run_cfg.get("variant", "full"))
    model = MolFMModel(model_cfg, seed=config["seeds"][0], variant=variant)
    model.load_state_dict(tensors)
    vocab = Vocabulary({tok: i for i, tok in enumerate(run_cfg["vocab_tokens"])})
    out = _outdir(config)
    report = {}
    try:
        report["conformer_attention"] = attention_boltzmann_correlation(model, records, model_cfg)
    except ValueError as exc:
        report["conformer_attention"] = {"error": str(exc)}
    if model_cfg.task_kind == "binary_multitask":
        report["calibration"] = calibration_report(
            model, records, vocab, model_cfg,
            passes=config["train"]["mc_passes"], seed=config["seeds"][0])
    _write_json(os.path.join(out, "analysis.json"), report)
    att = report["conformer_attention"]
    r_desc = f"r={att['pearson_r']:.4f}" if "pearson_r" in att else att.get("error")
    print(f"analyze done: conformer attention {r_desc}, report in {out}/analysis.json")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="molfm",
        description="Multi-modal molecular property model: training and analysis",
        epilog=_config_help(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON run config (defaults apply otherwise)")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config key, e.g. --set train.patience=5")
        p.add_argument("--output-dir", help="directory for run artifacts")
        p.add_argument("--verbose", action="store_true")

    p = sub.add_parser("validate", help="parse and validate a JSONL dataset")
    p.add_argument("data")
    p.set_defaults(fn=cmd_validate)

    p = sub.add_parser("pretrain", help="contrastive + masked-atom pre-training")
    common(p)
    p.set_defaults(fn=cmd_pretrain)

    p = sub.add_parser("finetune", help="supervised fine-tuning with early stopping")
    common(p)
    p.add_argument("--variant", default="full")
    p.add_argument("--init-checkpoint", help="pre-training checkpoint to start from")
    p.set_defaults(fn=cmd_finetune)

    p = sub.add_parser("ablate", help="run a set of ablation variants")
    common(p)
    p.add_argument("--variants", help="comma-separated variant names")
    p.add_argument("--init-checkpoint")
    p.add_argument("--jobs", type=int, default=1, help="worker threads for variants")
    p.set_defaults(fn=cmd_ablate)

    p = sub.add_parser("gradcheck", help="finite-difference check of all layers")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(fn=cmd_gradcheck)

    p = sub.add_parser("analyze", help="attention/Boltzmann and calibration statistics")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.set_defaults(fn=cmd_analyze)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DatasetError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except DivergenceError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
