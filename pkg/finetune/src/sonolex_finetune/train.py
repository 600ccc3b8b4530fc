"""Adapter training over a causal language model.

The dry-run path validates the dataset and config and prints the training
plan without touching torch. The real path loads the base model through
transformers, injects low-rank adapters, and optimizes them with Adam under
a constant-with-warmup schedule, honoring batch size, gradient
accumulation, and gradient clipping from the config.

4-bit base loading requires a quantization backend; when none is installed
the base model loads in the configured compute dtype instead, which changes
memory use but not the adapter recipe.
"""

from __future__ import annotations

import math
import time
from pathlib import Path

from .config import TrainingConfig, config_to_mapping, validate_config
from .data import CHAT_TEMPLATE, TrainingExample, load_dataset


def training_plan(config: TrainingConfig, examples: list[TrainingExample]) -> str:
    steps_per_epoch = math.ceil(
        len(examples) / (config.train_batch_size * config.gradient_accumulation_steps)
    )
    lines = [
        f"examples: {len(examples)}",
        f"base model: {config.base_model}",
        f"adapter: r={config.lora_r} alpha={config.lora_alpha} dropout={config.lora_dropout} "
        f"targets={','.join(config.target_modules)}",
        f"quantized load: four_bit={config.four_bit} type={config.quant_type} "
        f"compute={config.compute_dtype} nested={config.nested_quant}",
        f"optimization: {config.optimizer} lr={config.learning_rate} schedule={config.lr_schedule} "
        f"warmup_ratio={config.warmup_ratio} weight_decay={config.weight_decay}",
        f"epochs: {config.epochs} ({steps_per_epoch} optimizer steps per epoch)",
        f"batch: train={config.train_batch_size} eval={config.eval_batch_size} "
        f"grad_accum={config.gradient_accumulation_steps} max_grad_norm={config.max_grad_norm}",
        f"packing: {config.packing}  bf16: {config.bf16}  max_seq_len: {config.max_seq_len}",
        f"chat template: {CHAT_TEMPLATE}",
    ]
    return "\n".join(lines)


def dry_run(config: TrainingConfig, dataset_path: str | Path) -> str:
    """Validate config and dataset; return the plan. Needs no GPU and no
    model download."""
    validate_config(config)
    examples = load_dataset(dataset_path)
    return training_plan(config, examples)


def _encode_batch(tokenizer, batch: list[TrainingExample], max_seq_len: int):
    import torch

    rows = []
    for example in batch:
        prompt_ids = tokenizer(example.prompt, add_special_tokens=False).input_ids
        completion_ids = tokenizer(example.completion, add_special_tokens=False).input_ids
        if tokenizer.eos_token_id is not None:
            completion_ids = completion_ids + [tokenizer.eos_token_id]
        ids = (prompt_ids + completion_ids)[:max_seq_len]
        # Loss is taken on the completion only.
        labels = ([-100] * len(prompt_ids) + completion_ids)[:max_seq_len]
        rows.append((ids, labels))

    width = max(len(ids) for ids, _ in rows)
    pad_id = tokenizer.pad_token_id
    if pad_id is None:
        pad_id = tokenizer.eos_token_id or 0
    input_ids = torch.full((len(rows), width), pad_id, dtype=torch.long)
    labels = torch.full((len(rows), width), -100, dtype=torch.long)
    attention = torch.zeros((len(rows), width), dtype=torch.long)
    for i, (ids, row_labels) in enumerate(rows):
        input_ids[i, : len(ids)] = torch.tensor(ids, dtype=torch.long)
        labels[i, : len(row_labels)] = torch.tensor(row_labels, dtype=torch.long)
        attention[i, : len(ids)] = 1
    return input_ids, attention, labels


def train(
    config: TrainingConfig,
    dataset_path: str | Path,
    output_dir: str | Path,
    max_steps: int | None = None,
    device: str = "cpu",
    resume_from: str | Path | None = None,
    log=print,
) -> Path:
    """Fine-tune adapters and save the artifact. ``max_steps`` caps the
    total optimizer steps (useful for smoke runs); ``resume_from`` loads a
    previously saved adapter before continuing."""
    validate_config(config)
    examples = load_dataset(dataset_path)

    try:
        import torch
        from transformers import AutoModelForCausalLM, AutoTokenizer
    except ImportError as exc:  # pragma: no cover - env without training deps
        raise RuntimeError(
            "training requires torch and transformers; install the [train] extra"
        ) from exc

    from .lora import (
        inject_adapters,
        load_adapter_weights,
        save_adapter,
        trainable_parameter_counts,
    )

    torch.manual_seed(config.seed)
    tokenizer = AutoTokenizer.from_pretrained(config.base_model)
    dtype = None
    if device != "cpu":
        dtype = torch.bfloat16 if config.bf16 else getattr(torch, config.compute_dtype)
    if config.four_bit:
        log("note: no 4-bit backend available here; loading base weights unquantized")
    model = AutoModelForCausalLM.from_pretrained(config.base_model, torch_dtype=dtype)
    model.to(device)
    model.train()

    wrapped = inject_adapters(
        model,
        target_modules=config.target_modules,
        r=config.lora_r,
        alpha=config.lora_alpha,
        dropout=config.lora_dropout,
    )
    if resume_from is not None:
        load_adapter_weights(model, resume_from)
        log(f"resumed adapter weights from {resume_from}")
    trainable, total = trainable_parameter_counts(model)
    log(f"wrapped {wrapped} modules; trainable {trainable:,} of {total:,} parameters")

    params = [p for p in model.parameters() if p.requires_grad]
    optimizer = torch.optim.Adam(
        params, lr=config.learning_rate, weight_decay=config.weight_decay
    )
    steps_per_epoch = math.ceil(
        len(examples) / (config.train_batch_size * config.gradient_accumulation_steps)
    )
    total_steps = steps_per_epoch * config.epochs
    if max_steps is not None:
        total_steps = min(total_steps, max_steps)
    warmup_steps = max(1, int(total_steps * config.warmup_ratio))
    schedule = torch.optim.lr_scheduler.LambdaLR(
        optimizer, lambda step: min(1.0, (step + 1) / warmup_steps)
    )

    started = time.perf_counter()
    step = 0
    last_loss = float("nan")
    done = False
    for epoch in range(config.epochs):
        for start in range(0, len(examples), config.train_batch_size * config.gradient_accumulation_steps):
            optimizer.zero_grad()
            accum = examples[start : start + config.train_batch_size * config.gradient_accumulation_steps]
            for micro_start in range(0, len(accum), config.train_batch_size):
                micro = accum[micro_start : micro_start + config.train_batch_size]
                input_ids, attention, labels = _encode_batch(tokenizer, micro, config.max_seq_len)
                output = model(
                    input_ids=input_ids.to(device),
                    attention_mask=attention.to(device),
                    labels=labels.to(device),
                )
                loss = output.loss / config.gradient_accumulation_steps
                loss.backward()
                last_loss = float(output.loss.detach())
            torch.nn.utils.clip_grad_norm_(params, config.max_grad_norm)
            optimizer.step()
            schedule.step()
            step += 1
            if not math.isfinite(last_loss):
                raise RuntimeError(f"non-finite loss at step {step}: {last_loss}")
            if step >= total_steps:
                done = True
                break
        log(f"epoch {epoch + 1}: step {step}/{total_steps} loss {last_loss:.4f}")
        if done:
            break

    metadata = {
        "base_model": config.base_model,
        "chat_template": CHAT_TEMPLATE,
        "config": config_to_mapping(config),
        "examples": len(examples),
        "steps": step,
        "final_loss": last_loss,
        "train_seconds": round(time.perf_counter() - started, 3),
    }
    artifact = save_adapter(model, output_dir, metadata)
    log(f"saved adapter to {artifact}")
    return artifact
