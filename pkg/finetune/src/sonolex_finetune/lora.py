"""Manual low-rank adapter layers for causal language models.

Wraps named projection modules with a pair of trainable factors: the
wrapped forward adds (alpha / r) * B(A(dropout(x))) to the frozen base
projection. A starts from a small random init and B from zeros, so the
adapted model is exactly the base model at step zero. Only adapter weights
are saved; the artifact stays small and re-attaches to a fresh base model.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import torch
from torch import nn

ADAPTER_WEIGHTS = "adapter_weights.pt"
ADAPTER_METADATA = "adapter_metadata.json"


def _module_features(module: nn.Module) -> tuple[int, int]:
    """(in_features, out_features) for Linear or transformer Conv1D."""
    if isinstance(module, nn.Linear):
        return module.in_features, module.out_features
    if hasattr(module, "nx") and hasattr(module, "nf"):  # transformers Conv1D
        return module.nx, module.nf
    raise TypeError(f"cannot adapt module of type {type(module).__name__}")


class LoRALayer(nn.Module):
    def __init__(self, base: nn.Module, r: int, alpha: float, dropout: float):
        super().__init__()
        in_features, out_features = _module_features(base)
        self.base = base
        self.lora_a = nn.Linear(in_features, r, bias=False)
        self.lora_b = nn.Linear(r, out_features, bias=False)
        nn.init.normal_(self.lora_a.weight, std=0.02)
        nn.init.zeros_(self.lora_b.weight)
        self.dropout = nn.Dropout(dropout)
        self.scaling = alpha / r

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.base(x) + self.scaling * self.lora_b(self.lora_a(self.dropout(x)))


def inject_adapters(
    model: nn.Module, target_modules: tuple[str, ...], r: int, alpha: float, dropout: float
) -> int:
    """Replace every module whose name ends with a target name, freeze all
    base parameters, and leave only adapter factors trainable. Returns the
    number of wrapped modules."""
    targets = []
    for name, module in model.named_modules():
        if any(name.endswith(t) for t in target_modules) and not isinstance(module, LoRALayer):
            targets.append(name)
    if not targets:
        raise ValueError(
            f"no modules matched {target_modules}; "
            "check target_modules against the base architecture"
        )
    for name in targets:
        parent_name, _, child_name = name.rpartition(".")
        parent = model.get_submodule(parent_name) if parent_name else model
        base = getattr(parent, child_name)
        setattr(parent, child_name, LoRALayer(base, r=r, alpha=alpha, dropout=dropout))

    for param_name, param in model.named_parameters():
        param.requires_grad = "lora_a" in param_name or "lora_b" in param_name
    return len(targets)


def trainable_parameter_counts(model: nn.Module) -> tuple[int, int]:
    trainable = sum(p.numel() for p in model.parameters() if p.requires_grad)
    total = sum(p.numel() for p in model.parameters())
    return trainable, total


def adapter_state_dict(model: nn.Module) -> dict[str, torch.Tensor]:
    return {
        name: tensor
        for name, tensor in model.state_dict().items()
        if "lora_a" in name or "lora_b" in name
    }


def save_adapter(model: nn.Module, output_dir: str | Path, metadata: dict[str, Any]) -> Path:
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    torch.save(adapter_state_dict(model), output_dir / ADAPTER_WEIGHTS)
    (output_dir / ADAPTER_METADATA).write_text(
        json.dumps(metadata, indent=2) + "\n", encoding="utf-8"
    )
    return output_dir


def load_adapter_metadata(adapter_dir: str | Path) -> dict[str, Any]:
    return json.loads((Path(adapter_dir) / ADAPTER_METADATA).read_text(encoding="utf-8"))


def load_adapter_weights(model: nn.Module, adapter_dir: str | Path) -> None:
    state = torch.load(Path(adapter_dir) / ADAPTER_WEIGHTS, map_location="cpu")
    missing, unexpected = model.load_state_dict(state, strict=False)
    if unexpected:
        raise ValueError(f"adapter weights do not match the model: {unexpected[:3]}")
    lora_keys = [k for k in missing if "lora_a" in k or "lora_b" in k]
    if lora_keys:
        raise ValueError(f"adapter weights incomplete; missing {lora_keys[:3]}")
