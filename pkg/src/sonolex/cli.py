"""Command-line pipeline: parse reports, build prompts, run extraction
backends, generate synthetic corpora, corrupt predictions, build datasets,
and evaluate.

All record files are line-delimited UTF-8 JSON, written atomically. Every
command is reproducible: identical inputs, flags, and seeds give
byte-identical outputs. A YAML config file can supply option defaults
(top-level keys apply everywhere, per-command sections override them);
explicit flags always win.
"""

from __future__ import annotations

import sys
from pathlib import Path

import click
import yaml

from . import __version__, recordio
from .backends import (
    ExtractionOutput,
    LlmBackend,
    LlmEndpointConfig,
    RetryPolicy,
    RuleBackend,
    extract_batch,
)
from .dataset import build_dataset, split, write_dataset
from .metrics import EvalPair, evaluate_corpus, format_metrics_report, summary_to_mapping
from .normalizer import parse_model_output
from .prompts import FewShotExample, build_finetune_instruction, build_label_prompt
from .report_parser import NoObservationError, extract_sections
from .schema import ReportDocument, record_from_mapping, record_to_mapping
from .synth import MutationSpec, SynthConfig, corrupt, generate_corpus


def _load_config_map(path: str | None) -> dict:
    if not path:
        return {}
    with open(path, "r", encoding="utf-8") as handle:
        raw = yaml.safe_load(handle) or {}
    if not isinstance(raw, dict):
        raise click.ClickException(f"config file {path} must hold a mapping")
    shared = {k: v for k, v in raw.items() if not isinstance(v, dict)}
    default_map: dict = {}
    for command, options in raw.items():
        if isinstance(options, dict):
            default_map[command] = {**shared, **options}
    default_map["*"] = shared
    return default_map


@click.group()
@click.version_option(version=__version__)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="YAML file with option defaults; flags override it.")
@click.pass_context
def main(ctx: click.Context, config_path: str | None) -> None:
    """Structure breast ultrasound reports into per-lesion records."""
    default_map = _load_config_map(config_path)
    shared = default_map.pop("*", {})
    ctx.default_map = {
        name: {**shared, **default_map.get(name, {})} for name in main.commands
    }


def _read_reports(path: str) -> list[dict]:
    """Accept a JSONL records file, or any plain-text file as one report."""
    try:
        return list(recordio.read_records(path))
    except ValueError:
        text = Path(path).read_text(encoding="utf-8")
        return [{"id": Path(path).stem, "text": text}]


def _as_document(obj: dict) -> ReportDocument:
    """A record is either pre-sectioned or raw text to parse."""
    report_id = str(obj.get("id", ""))
    if "observation" in obj:
        return ReportDocument(
            id=report_id,
            raw_text=obj.get("text", ""),
            observation=obj["observation"],
            impression=obj.get("impression") or None,
        )
    return extract_sections(obj["text"], report_id=report_id)


def _documents_from_file(path: str) -> list[ReportDocument]:
    documents = []
    for obj in recordio.read_records(path):
        try:
            documents.append(_as_document(obj))
        except NoObservationError as exc:
            click.echo(f"skipping: {exc}", err=True)
    return documents


def _output_to_mapping(output: ExtractionOutput) -> dict:
    return {
        "id": output.report_id,
        "backend": output.backend_name,
        "latency": output.latency,
        "raw_text": output.raw_text,
        "parsed": [record_to_mapping(r) for r in output.parsed]
        if output.parsed is not None
        else None,
        "warnings": list(output.warnings),
        "error": output.error,
    }


def _output_from_mapping(obj: dict) -> ExtractionOutput:
    parsed = None
    if obj.get("parsed") is not None:
        records = []
        for item in obj["parsed"]:
            record, _ = record_from_mapping(item)
            records.append(record)
        parsed = tuple(records)
    return ExtractionOutput(
        report_id=str(obj.get("id", "")),
        raw_text=obj.get("raw_text", ""),
        parsed=parsed,
        backend_name=obj.get("backend", "unknown"),
        latency=obj.get("latency", 0.0),
        warnings=tuple(obj.get("warnings", ())),
        error=obj.get("error"),
    )


def _truths_from_file(path: str) -> dict[str, tuple]:
    truths: dict[str, tuple] = {}
    for obj in recordio.read_records(path):
        records = tuple(record_from_mapping(item)[0] for item in obj.get("lesions", []))
        truths[str(obj["id"])] = records
    return truths


def _fewshot_from_file(path: str | None) -> list[FewShotExample]:
    if path is None:
        from .synth import standin_fewshot_examples

        return list(standin_fewshot_examples())
    examples = []
    for obj in recordio.read_records(path):
        parsed = parse_model_output(obj["output"]) if isinstance(obj["output"], str) else tuple(
            record_from_mapping(item)[0] for item in obj["output"]
        )
        if parsed is None:
            raise click.ClickException(f"few-shot example {obj.get('id', '?')} has an unparseable output")
        examples.append(
            FewShotExample(
                observation=obj["observation"],
                impression=obj.get("impression") or "",
                expected_output=tuple(parsed),
            )
        )
    return examples


def _llm_config(base_url: str | None, model: str | None, api_key_env: str,
                concurrency: int, timeout: float, retries: int) -> LlmEndpointConfig:
    if not base_url or not model:
        raise click.ClickException("--base-url and --model are required for the llm backend")
    return LlmEndpointConfig(
        base_url=base_url,
        model_name=model,
        api_key_env=api_key_env,
        max_concurrent_requests=concurrency,
        request_timeout=timeout,
        retry=RetryPolicy(count=retries),
    )


@main.command()
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
def parse(in_path: str, out_path: str) -> None:
    """Isolate observation and impression sections."""
    rows = []
    rejected = 0
    for obj in _read_reports(in_path):
        try:
            document = extract_sections(str(obj["text"]), report_id=str(obj.get("id", "")))
        except NoObservationError as exc:
            click.echo(f"rejected: {exc}", err=True)
            rejected += 1
            continue
        rows.append(
            {
                "id": document.id,
                "observation": document.observation,
                "impression": document.impression,
            }
        )
    recordio.write_records(out_path, rows)
    click.echo(f"wrote {len(rows)} section records to {out_path}"
               + (f" ({rejected} rejected)" if rejected else ""))


@main.command()
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--mode", type=click.Choice(["label", "instruction"]), default="label")
@click.option("--examples", "examples_path", type=click.Path(exists=True), default=None,
              help="Few-shot records {observation, impression, output}; defaults to built-in synthetic stand-ins.")
@click.option("--template", "template_path", type=click.Path(exists=True), default=None,
              help="Override the instruction text with this file's contents.")
def prompt(in_path: str, out_path: str, mode: str, examples_path: str | None,
           template_path: str | None) -> None:
    """Render prompts for each report."""
    instruction_override = (
        Path(template_path).read_text(encoding="utf-8") if template_path else None
    )
    rows = []
    if mode == "label":
        examples = _fewshot_from_file(examples_path)
        for document in _documents_from_file(in_path):
            rows.append({"id": document.id, "prompt": build_label_prompt(examples, document)})
    else:
        for document in _documents_from_file(in_path):
            rows.append(
                {"id": document.id,
                 "prompt": build_finetune_instruction(document, instruction=instruction_override)}
            )
    recordio.write_records(out_path, rows)
    click.echo(f"wrote {len(rows)} prompts to {out_path}")


_llm_options = [
    click.option("--base-url", default=None, help="Chat-completions endpoint base URL."),
    click.option("--model", default=None, help="Model name sent with each request."),
    click.option("--api-key-env", default="BUREX_API_KEY", show_default=True,
                 help="Environment variable holding the bearer token."),
    click.option("--concurrency", default=4, show_default=True, type=int),
    click.option("--timeout", default=60.0, show_default=True, type=float),
    click.option("--retries", default=2, show_default=True, type=int),
]


def _with_llm_options(command):
    for option in reversed(_llm_options):
        command = option(command)
    return command


@main.command()
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--examples", "examples_path", type=click.Path(exists=True), default=None)
@_with_llm_options
def label(in_path: str, out_path: str, examples_path: str | None, base_url: str | None,
          model: str | None, api_key_env: str, concurrency: int, timeout: float,
          retries: int) -> None:
    """Label reports with the few-shot prompt against an LLM endpoint."""
    examples = _fewshot_from_file(examples_path)
    config = _llm_config(base_url, model, api_key_env, concurrency, timeout, retries)
    backend = LlmBackend(config, prompt_fn=lambda doc: build_label_prompt(examples, doc))
    documents = _documents_from_file(in_path)
    outputs = extract_batch(backend, documents)
    backend.close()
    recordio.write_records(out_path, (_output_to_mapping(o) for o in outputs))
    failures = sum(1 for o in outputs if o.error)
    click.echo(f"wrote {len(outputs)} labels to {out_path}"
               + (f" ({failures} failed)" if failures else ""))


@main.command()
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--backend", "backend_name", type=click.Choice(["rules", "llm"]),
              default="rules", show_default=True)
@_with_llm_options
def extract(in_path: str, out_path: str, backend_name: str, base_url: str | None,
            model: str | None, api_key_env: str, concurrency: int, timeout: float,
            retries: int) -> None:
    """Extract lesion records with the chosen backend."""
    documents = _documents_from_file(in_path)
    if backend_name == "rules":
        backend = RuleBackend()
        outputs = extract_batch(backend, documents, max_concurrent=1)
    else:
        config = _llm_config(base_url, model, api_key_env, concurrency, timeout, retries)
        backend = LlmBackend(config)
        outputs = extract_batch(backend, documents)
        backend.close()
    recordio.write_records(out_path, (_output_to_mapping(o) for o in outputs))
    failures = sum(1 for o in outputs if o.error)
    click.echo(f"wrote {len(outputs)} extractions to {out_path}"
               + (f" ({failures} failed)" if failures else ""))


@main.command()
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--n", "n_reports", default=100, show_default=True, type=int)
@click.option("--family", type=click.Choice(["A", "B"]), default="A", show_default=True)
@click.option("--out-reports", required=True, type=click.Path())
@click.option("--out-truths", required=True, type=click.Path())
def gen(seed: int, n_reports: int, family: str, out_reports: str, out_truths: str) -> None:
    """Generate a synthetic corpus with ground truth."""
    config = SynthConfig(seed=seed, n_reports=n_reports, template_family=family)
    corpus = generate_corpus(config)
    recordio.write_records(
        out_reports, ({"id": doc.id, "text": doc.raw_text} for doc, _ in corpus)
    )
    recordio.write_records(
        out_truths,
        (
            {"id": doc.id, "lesions": [record_to_mapping(r) for r in truth]}
            for doc, truth in corpus
        ),
    )
    click.echo(f"wrote {len(corpus)} reports to {out_reports} and truths to {out_truths}")


@main.command("corrupt")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--ledger", "ledger_path", required=True, type=click.Path())
@click.option("--drop-rate", default=0.0, show_default=True, type=float)
@click.option("--swap-rate", default=0.0, show_default=True, type=float)
@click.option("--na-rate", default=0.0, show_default=True, type=float)
@click.option("--seed", default=0, show_default=True, type=int)
def corrupt_cmd(in_path: str, out_path: str, ledger_path: str, drop_rate: float,
                swap_rate: float, na_rate: float, seed: int) -> None:
    """Apply seeded corruptions to predictions, recording a replay ledger."""
    predictions = [_output_from_mapping(obj) for obj in recordio.read_records(in_path)]
    spec = MutationSpec(
        drop_lesion_rate=drop_rate, swap_attribute_rate=swap_rate,
        na_out_rate=na_rate, seed=seed,
    )
    mutated, ledger = corrupt(predictions, spec)
    recordio.write_records(out_path, (_output_to_mapping(o) for o in mutated))
    recordio.write_records(ledger_path, (entry.to_mapping() for entry in ledger))
    click.echo(f"wrote {len(mutated)} mutated predictions ({len(ledger)} mutations)")


@main.group()
def dataset() -> None:
    """Build instruction-tuning datasets and corpus splits."""


@dataset.command("build")
@click.option("--reports", "reports_path", required=True, type=click.Path(exists=True))
@click.option("--labels", "labels_path", required=True, type=click.Path(exists=True),
              help="Predictions file whose raw_text fields are the labels.")
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--source", type=click.Choice(["llm", "rules"]), required=True)
def dataset_build(reports_path: str, labels_path: str, out_path: str, source: str) -> None:
    """Pair reports with labels into training records."""
    documents = _documents_from_file(reports_path)
    labels = {
        str(obj["id"]): obj.get("raw_text", "")
        for obj in recordio.read_records(labels_path)
    }
    result = build_dataset(documents, labels, source=source)
    write_dataset(out_path, result.records)
    for diagnostic in result.skipped:
        click.echo(f"skipped {diagnostic}", err=True)
    click.echo(f"wrote {len(result.records)} dataset records to {out_path}"
               + (f" ({len(result.skipped)} skipped)" if result.skipped else ""))


@dataset.command("split")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True),
              help="Any records file with an id field.")
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--ratios", default="0.90,0.07,0.03", show_default=True)
@click.option("--seed", default=0, show_default=True, type=int)
def dataset_split(in_path: str, out_path: str, ratios: str, seed: int) -> None:
    """Write a train/validation/test manifest."""
    try:
        parts = tuple(float(r) for r in ratios.split(","))
    except ValueError:
        raise click.ClickException(f"cannot parse ratios: {ratios!r}")
    ids = [str(obj["id"]) for obj in recordio.read_records(in_path)]
    try:
        result = split(ids, ratios=parts, seed=seed)
    except ValueError as exc:
        raise click.ClickException(str(exc))
    recordio.write_text_atomic(out_path, recordio.dumps_record(result.to_mapping()) + "\n")
    click.echo(
        f"split {len(ids)} ids into {len(result.train)}/{len(result.validation)}/{len(result.test)}"
    )


@main.command("eval")
@click.option("--pred", "pred_path", required=True, type=click.Path(exists=True))
@click.option("--truth", "truth_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--json-out", "json_path", type=click.Path(), default=None)
def eval_cmd(pred_path: str, truth_path: str, out_path: str, json_path: str | None) -> None:
    """Score predictions against ground truth."""
    predictions = {
        o.report_id: o
        for o in (_output_from_mapping(obj) for obj in recordio.read_records(pred_path))
    }
    truths = _truths_from_file(truth_path)
    missing = [report_id for report_id in truths if report_id not in predictions]
    if missing:
        raise click.ClickException(
            f"predictions missing for {len(missing)} reports (first: {missing[0]})"
        )
    pairs = [
        EvalPair(report_id=report_id, prediction=predictions[report_id], truth=truth)
        for report_id, truth in truths.items()
    ]
    summary = evaluate_corpus(pairs)
    recordio.write_text_atomic(out_path, format_metrics_report(summary))
    if json_path:
        recordio.write_text_atomic(
            json_path, recordio.dumps_record(summary_to_mapping(summary)) + "\n"
        )
    click.echo(format_metrics_report(summary), nl=False)


@main.command("lora-check")
@click.option("--seed", default=0, show_default=True, type=int)
def lora_check(seed: int) -> None:
    """Verify the adapter-math properties; nonzero exit on any failure."""
    from .adapter_math import run_verification

    results = run_verification(seed=seed)
    width = max(len(r.name) for r in results)
    failed = 0
    for result in results:
        status = "PASS" if result.passed else "FAIL"
        failed += 0 if result.passed else 1
        click.echo(f"{status}  {result.name:<{width}}  {result.measured}")
    if failed:
        raise click.ClickException(f"{failed} adapter-math checks failed")


if __name__ == "__main__":
    sys.exit(main())
