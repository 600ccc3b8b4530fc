"""Command-line entry points: emit-config, train, serve."""

from __future__ import annotations

import sys

import click

from . import __version__
from .config import (
    TrainingConfig,
    UnknownFieldError,
    emit_config,
    load_config,
    save_config,
)
from .data import DatasetFormatError


def _parse_overrides(pairs: tuple[str, ...]) -> dict:
    overrides = {}
    for pair in pairs:
        if "=" not in pair:
            raise click.ClickException(f"--set expects key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        overrides[key.strip()] = value.strip()
    return overrides


@click.group()
@click.version_option(version=__version__)
def main() -> None:
    """Adapter fine-tuning recipe and serving for report extraction."""


@main.command("emit-config")
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE",
              help="Override a config field; repeatable.")
def emit_config_cmd(out_path: str, overrides: tuple[str, ...]) -> None:
    """Write the training config (recipe defaults plus overrides)."""
    try:
        config = emit_config(_parse_overrides(overrides))
    except (UnknownFieldError, ValueError) as exc:
        raise click.ClickException(str(exc))
    save_config(config, out_path)
    click.echo(f"wrote config to {out_path}")


@main.command("train")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--data", "data_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", type=click.Path(), default="adapter")
@click.option("--dry-run", is_flag=True, help="Validate config and dataset, print the plan, train nothing.")
@click.option("--max-steps", type=int, default=None, help="Cap optimizer steps (smoke runs).")
@click.option("--device", default="cpu", show_default=True)
@click.option("--resume-from", type=click.Path(exists=True), default=None)
@click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE")
def train_cmd(config_path: str | None, data_path: str, out_dir: str, dry_run: bool,
              max_steps: int | None, device: str, resume_from: str | None,
              overrides: tuple[str, ...]) -> None:
    """Fine-tune adapters on a dataset file."""
    from .train import dry_run as run_dry
    from .train import train as run_train

    try:
        config = load_config(config_path) if config_path else TrainingConfig()
        if overrides:
            from dataclasses import replace

            from .config import _coerce  # same coercion as emit-config

            parsed = _parse_overrides(overrides)
            unknown = [k for k in parsed if k not in TrainingConfig.__dataclass_fields__]
            if unknown:
                raise click.ClickException(f"unknown config fields: {', '.join(unknown)}")
            config = replace(config, **{k: _coerce(k, v) for k, v in parsed.items()})
        if dry_run:
            click.echo(run_dry(config, data_path))
            click.echo("dry run ok: config and dataset are valid")
            return
        run_train(
            config,
            data_path,
            out_dir,
            max_steps=max_steps,
            device=device,
            resume_from=resume_from,
            log=click.echo,
        )
    except (DatasetFormatError, ValueError, RuntimeError) as exc:
        raise click.ClickException(str(exc))


@main.command("serve")
@click.option("--adapter", "adapter_dir", type=click.Path(exists=True), default=None)
@click.option("--base-model", default=None,
              help="Base model path or identifier; defaults to the adapter metadata's base model.")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8008, show_default=True, type=int)
@click.option("--stub", is_flag=True,
              help="Serve the deterministic stub engine (no model weights needed).")
def serve_cmd(adapter_dir: str | None, base_model: str | None, host: str, port: int,
              stub: bool) -> None:
    """Serve a chat-completions endpoint for the extraction pipeline."""
    import uvicorn

    from .server import LocalModelEngine, StubEngine, create_server_app

    if stub or (adapter_dir is None and base_model is None):
        if not stub:
            click.echo("no adapter or base model given; serving the stub engine", err=True)
        engine = StubEngine()
    else:
        if base_model is None:
            from .lora import load_adapter_metadata

            base_model = load_adapter_metadata(adapter_dir)["base_model"]
        engine = LocalModelEngine(base_model, adapter_dir=adapter_dir)
    app = create_server_app(engine)
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    sys.exit(main())
