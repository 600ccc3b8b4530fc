"""Training configuration with the published recipe as defaults.

Every field can be overridden, but with no overrides the serialized config
reproduces the recipe table exactly: rank-64 adapters with alpha 16 and
dropout 0.1, 4-bit nf4 loading with float16 compute, four epochs at a
constant 2e-4 with 3% warmup, Adam with 0.001 weight decay, batch size 4,
gradient clipping at 0.3, no packing.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any, Mapping

import yaml


class UnknownFieldError(KeyError):
    pass


@dataclass(frozen=True)
class TrainingConfig:
    # Low-rank adapter
    lora_r: int = 64
    lora_alpha: int = 16
    lora_dropout: float = 0.1
    # Quantized base-model loading
    four_bit: bool = True
    compute_dtype: str = "float16"
    quant_type: str = "nf4"
    nested_quant: bool = False
    # Optimization
    epochs: int = 4
    learning_rate: float = 2e-4
    lr_schedule: str = "constant"
    optimizer: str = "adam"
    weight_decay: float = 0.001
    warmup_ratio: float = 0.03
    bf16: bool = True
    train_batch_size: int = 4
    eval_batch_size: int = 4
    gradient_accumulation_steps: int = 1
    max_grad_norm: float = 0.3
    packing: bool = False
    # Model and task plumbing
    base_model: str = "meta-llama/Meta-Llama-3-8B"
    target_modules: tuple[str, ...] = ("q_proj", "v_proj")
    max_seq_len: int = 1024
    seed: int = 0


_FIELDS = {f.name: f for f in fields(TrainingConfig)}


def _coerce(name: str, value: Any) -> Any:
    """Coerce string overrides (from CLI --set or YAML) to the field type."""
    target = _FIELDS[name].type
    if isinstance(value, str):
        if target in ("int", int):
            return int(value)
        if target in ("float", float):
            return float(value)
        if target in ("bool", bool):
            if value.lower() in ("true", "1", "yes"):
                return True
            if value.lower() in ("false", "0", "no"):
                return False
            raise ValueError(f"cannot read boolean from {value!r}")
        if "tuple" in str(target):
            return tuple(part.strip() for part in value.split(",") if part.strip())
    if isinstance(value, list):
        return tuple(value)
    return value


def emit_config(overrides: Mapping[str, Any] | None = None) -> TrainingConfig:
    """Defaults plus overrides. Unknown field names are errors."""
    overrides = dict(overrides or {})
    unknown = sorted(set(overrides) - set(_FIELDS))
    if unknown:
        raise UnknownFieldError(f"unknown config fields: {', '.join(unknown)}")
    coerced = {name: _coerce(name, value) for name, value in overrides.items()}
    return replace(TrainingConfig(), **coerced)


def validate_config(config: TrainingConfig) -> None:
    if config.lora_r < 1:
        raise ValueError("lora_r must be >= 1")
    if config.lora_alpha <= 0:
        raise ValueError("lora_alpha must be positive")
    if not 0.0 <= config.lora_dropout < 1.0:
        raise ValueError("lora_dropout must be in [0, 1)")
    if config.epochs < 1:
        raise ValueError("epochs must be >= 1")
    if config.learning_rate <= 0:
        raise ValueError("learning_rate must be positive")
    if config.train_batch_size < 1 or config.eval_batch_size < 1:
        raise ValueError("batch sizes must be >= 1")
    if config.gradient_accumulation_steps < 1:
        raise ValueError("gradient_accumulation_steps must be >= 1")
    if not 0.0 <= config.warmup_ratio < 1.0:
        raise ValueError("warmup_ratio must be in [0, 1)")
    if config.max_grad_norm <= 0:
        raise ValueError("max_grad_norm must be positive")
    if not config.target_modules:
        raise ValueError("target_modules must name at least one module")


def config_to_mapping(config: TrainingConfig) -> dict[str, Any]:
    mapping = {}
    for name in _FIELDS:
        value = getattr(config, name)
        mapping[name] = list(value) if isinstance(value, tuple) else value
    return mapping


def save_config(config: TrainingConfig, path: str | Path) -> None:
    Path(path).write_text(
        yaml.safe_dump(config_to_mapping(config), sort_keys=False), encoding="utf-8"
    )


def load_config(path: str | Path) -> TrainingConfig:
    raw = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
    if not isinstance(raw, dict):
        raise ValueError(f"config file {path} must hold a mapping")
    return emit_config(raw)
