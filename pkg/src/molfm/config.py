"""Run configuration: model/training hyperparameters, ablation variants, JSON schema."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from enum import Enum

from .encoders import Encoder1DConfig, Encoder2DConfig, Encoder3DConfig


class AblationVariant(str, Enum):
    FULL = "full"
    ONLY_1D = "only_1d"
    ONLY_2D = "only_2d"
    ONLY_3D = "only_3d"
    NO_3D = "no_3d"
    NO_2D = "no_2d"
    NO_1D = "no_1d"
    K1_CONFORMER = "k1_conformer"
    NO_BOLTZMANN = "no_boltzmann"
    RANDOM_CONFORMER = "random_conformer"
    CONCAT_ONLY = "concat_only"
    NO_FILM = "no_film"
    NO_PRETRAIN = "no_pretrain"

    @property
    def active_modalities(self) -> frozenset:
        table = {
            AblationVariant.ONLY_1D: {"1d"},
            AblationVariant.ONLY_2D: {"2d"},
            AblationVariant.ONLY_3D: {"3d"},
            AblationVariant.NO_3D: {"1d", "2d"},
            AblationVariant.NO_2D: {"1d", "3d"},
            AblationVariant.NO_1D: {"2d", "3d"},
        }
        return frozenset(table.get(self, {"1d", "2d", "3d"}))

    @property
    def ensemble_mode(self) -> str:
        return {
            AblationVariant.K1_CONFORMER: "single",
            AblationVariant.NO_BOLTZMANN: "no_prior",
            AblationVariant.RANDOM_CONFORMER: "random",
        }.get(self, "full")

    @property
    def fusion_mode(self) -> str:
        return "concat_only" if self is AblationVariant.CONCAT_ONLY else "cross_attn"

    @property
    def film_enabled(self) -> bool:
        return self is not AblationVariant.NO_FILM


# "No cross-attention" in reports is an alias of concat_only fusion.
VARIANT_ALIASES = {"no_cross_attention": AblationVariant.CONCAT_ONLY}


def parse_variant(name: str) -> AblationVariant:
    if name in VARIANT_ALIASES:
        return VARIANT_ALIASES[name]
    return AblationVariant(name)


@dataclass
class ModelConfig:
    enc1d: Encoder1DConfig = field(default_factory=Encoder1DConfig)
    enc2d: Encoder2DConfig = field(default_factory=Encoder2DConfig)
    enc3d: Encoder3DConfig = field(default_factory=Encoder3DConfig)
    context_dim: int = 8
    n_tasks: int = 1
    task_kind: str = "binary_multitask"  # or "regression"
    head_hidden: int = 128
    head_dropout: float = 0.2
    fusion_hidden: int = 256
    contrastive_dim: int = 128
    n_element_classes: int = 16
    temperature_k: float = 298.0

    def __post_init__(self):
        if self.task_kind not in ("binary_multitask", "regression"):
            raise ValueError(f"bad task_kind {self.task_kind!r}")


@dataclass
class TrainConfig:
    phase: str = "finetune"  # "pretrain" | "finetune"
    epochs: int = 100
    batch_size: int = 16
    lr: float = 5e-5
    weight_decay: float = 1e-4
    warmup_steps: int = 1000
    patience: int = 15
    seeds: tuple = (0, 1, 2)
    mc_passes: int = 20
    contrastive_tau: float = 0.07
    mask_fraction: float = 0.15
    lambda_map: float = 0.5
    restart_t0: int = 10
    restart_t_mult: int = 2

    def __post_init__(self):
        if self.phase not in ("pretrain", "finetune"):
            raise ValueError(f"bad phase {self.phase!r}")
        if self.epochs <= 0 or self.batch_size <= 0 or self.lr <= 0:
            raise ValueError("epochs, batch_size, lr must be positive")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")


def pretrain_defaults() -> TrainConfig:
    return TrainConfig(phase="pretrain", epochs=30, batch_size=64, lr=1e-4,
                       weight_decay=1e-5, warmup_steps=1000)


def finetune_defaults() -> TrainConfig:
    return TrainConfig(phase="finetune", epochs=100, batch_size=16, lr=5e-5,
                       weight_decay=1e-4, patience=15)


# -- JSON run-config schema --------------------------------------------------

DEFAULT_RUN_CONFIG = {
    "data": {
        "path": "",
        "split_path": "",
    },
    "model": {
        "vocab_size": 16384,
        "d_1d": 256,
        "d_2d": 256,
        "d_3d": 128,
        "transformer_layers": 4,
        "gin_layers": 4,
        "schnet_interactions": 3,
        "attention_heads": 8,
        "d_ff": 1024,
        "max_len": 256,
        "cutoff": 10.0,
        "n_rbf": 64,
        "encoder_dropout": 0.1,
        "head_dropout": 0.2,
        "context_dim": 8,
        "n_tasks": 1,
        "task_kind": "binary_multitask",
        "conformers_k": 5,
    },
    "train": {
        "pretrain_epochs": 30,
        "pretrain_batch_size": 64,
        "pretrain_lr": 1e-4,
        "pretrain_weight_decay": 1e-5,
        "warmup_steps": 1000,
        "contrastive_tau": 0.07,
        "mask_fraction": 0.15,
        "lambda_map": 0.5,
        "finetune_epochs": 100,
        "finetune_batch_size": 16,
        "finetune_lr": 5e-5,
        "finetune_weight_decay": 1e-4,
        "patience": 15,
        "mc_passes": 20,
        "restart_t0": 10,
        "restart_t_mult": 2,
    },
    "ablation": {
        "variants": ["full"],
    },
    "output_dir": "runs",
    "seeds": [0, 1, 2],
}


class ConfigError(ValueError):
    """Invalid run configuration; message lists every violation."""


def _merge_checked(defaults, given, path, errors):
    out = copy.deepcopy(defaults)
    for key, value in given.items():
        here = f"{path}.{key}" if path else key
        if key not in defaults:
            errors.append(f"unknown config key: {here}")
            continue
        if isinstance(defaults[key], dict):
            if not isinstance(value, dict):
                errors.append(f"{here}: expected an object")
                continue
            out[key] = _merge_checked(defaults[key], value, here, errors)
        else:
            out[key] = value
    return out


def load_run_config(doc: dict) -> dict:
    """Merge a user config over the defaults, rejecting unknown keys.

    All schema violations are reported at once in the ConfigError message.
    """
    errors = []
    if not isinstance(doc, dict):
        raise ConfigError("run config must be a JSON object")
    merged = _merge_checked(DEFAULT_RUN_CONFIG, doc, "", errors)
    for name in merged["ablation"]["variants"]:
        try:
            parse_variant(name)
        except ValueError:
            errors.append(f"ablation.variants: unknown variant {name!r}")
    if merged["model"]["task_kind"] not in ("binary_multitask", "regression"):
        errors.append("model.task_kind must be 'binary_multitask' or 'regression'")
    if errors:
        raise ConfigError("; ".join(errors))
    return merged


def apply_overrides(config: dict, overrides) -> dict:
    """Apply `--set section.key=value` pairs; values parsed as JSON when possible."""
    import json as _json

    errors = []
    config = copy.deepcopy(config)
    for item in overrides:
        if "=" not in item:
            errors.append(f"bad override (need key=value): {item!r}")
            continue
        key, raw = item.split("=", 1)
        try:
            value = _json.loads(raw)
        except ValueError:
            value = raw
        node = config
        parts = key.split(".")
        for part in parts[:-1]:
            if not isinstance(node, dict) or part not in node:
                errors.append(f"unknown config key: {key}")
                node = None
                break
            node = node[part]
        if node is None:
            continue
        leaf = parts[-1]
        if leaf not in node:
            errors.append(f"unknown config key: {key}")
            continue
        node[leaf] = value
    if errors:
        raise ConfigError("; ".join(errors))
    return config


def model_config_from_run(run: dict) -> ModelConfig:
    m = run["model"]
    return ModelConfig(
        enc1d=Encoder1DConfig(vocab_size=m["vocab_size"], d_model=m["d_1d"],
                              layers=m["transformer_layers"], heads=m["attention_heads"],
                              d_ff=m["d_ff"], max_len=m["max_len"], dropout=m["encoder_dropout"]),
        enc2d=Encoder2DConfig(d_model=m["d_2d"], layers=m["gin_layers"]),
        enc3d=Encoder3DConfig(d_model=m["d_3d"], interactions=m["schnet_interactions"],
                              cutoff=m["cutoff"], n_rbf=m["n_rbf"]),
        context_dim=m["context_dim"], n_tasks=m["n_tasks"], task_kind=m["task_kind"],
        head_dropout=m["head_dropout"],
    )
