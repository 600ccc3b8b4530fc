"""FastAPI service wrapping the core package: section parsing, extraction,
output normalization, evaluation, prompt rendering, and corpus generation
behind JSON endpoints."""

from __future__ import annotations

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..backends import (
    LlmBackend,
    LlmEndpointConfig,
    RuleBackend,
    extract_batch,
)
from ..metrics import EvalPair, evaluate_corpus, format_metrics_report, summary_to_mapping
from ..normalizer import parse_reply
from ..prompts import build_finetune_instruction, build_label_prompt
from ..report_parser import NoObservationError, extract_sections
from ..schema import (
    ALL_KEYS,
    CLOSE_KEYS,
    VOCABULARIES,
    ReportDocument,
    record_from_mapping,
    record_to_mapping,
)
from ..synth import SynthConfig, generate_corpus, standin_fewshot_examples
from .models import (
    EvaluateRequest,
    EvaluateResponse,
    ExtractionOutputModel,
    ExtractRequest,
    ExtractResponse,
    GeneratedReport,
    GenerateRequest,
    GenerateResponse,
    HealthResponse,
    KeyInfo,
    NormalizeRequest,
    NormalizeResponse,
    ParseRequest,
    ParseResponse,
    PromptRequest,
    PromptResponse,
    ReportIn,
)


def _as_document(report: ReportIn) -> ReportDocument:
    if report.observation is not None:
        return ReportDocument(
            id=report.id,
            raw_text=report.text or "",
            observation=report.observation,
            impression=report.impression,
        )
    if report.text is None:
        raise HTTPException(422, detail=f"report {report.id!r}: provide text or observation")
    try:
        return extract_sections(report.text, report_id=report.id)
    except NoObservationError as exc:
        raise HTTPException(422, detail=str(exc))


def create_app() -> FastAPI:
    app = FastAPI(title="sonolex", version=__version__)

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok", version=__version__)

    @app.get("/schema/keys", response_model=list[KeyInfo])
    def schema_keys() -> list[KeyInfo]:
        close = set(CLOSE_KEYS)
        return [
            KeyInfo(
                key=key.value,
                json_path=key.json_path,
                allowed_values=list(VOCABULARIES[key].allowed_values),
                in_close_set=key in close,
            )
            for key in ALL_KEYS
        ]

    @app.post("/parse", response_model=ParseResponse)
    def parse(request: ParseRequest) -> ParseResponse:
        try:
            document = extract_sections(request.text, report_id=request.id)
        except NoObservationError as exc:
            raise HTTPException(422, detail=str(exc))
        return ParseResponse(
            id=document.id,
            observation=document.observation,
            impression=document.impression,
        )

    @app.post("/extract", response_model=ExtractResponse)
    def extract(request: ExtractRequest) -> ExtractResponse:
        documents = [_as_document(r) for r in request.reports]
        if request.backend == "rules":
            outputs = extract_batch(RuleBackend(), documents, max_concurrent=1)
        else:
            if request.llm is None:
                raise HTTPException(422, detail="llm settings required for the llm backend")
            config = LlmEndpointConfig(
                base_url=request.llm.base_url,
                model_name=request.llm.model_name,
                api_key_env=request.llm.api_key_env,
                temperature=request.llm.temperature,
                max_output_tokens=request.llm.max_output_tokens,
                request_timeout=request.llm.request_timeout,
                max_concurrent_requests=request.llm.max_concurrent_requests,
            )
            backend = LlmBackend(config)
            try:
                outputs = extract_batch(backend, documents)
            finally:
                backend.close()
        return ExtractResponse(
            outputs=[
                ExtractionOutputModel(
                    id=o.report_id,
                    backend=o.backend_name,
                    latency=o.latency,
                    raw_text=o.raw_text,
                    parsed=[record_to_mapping(r) for r in o.parsed]
                    if o.parsed is not None
                    else None,
                    warnings=list(o.warnings),
                    error=o.error,
                )
                for o in outputs
            ]
        )

    @app.post("/normalize", response_model=NormalizeResponse)
    def normalize(request: NormalizeRequest) -> NormalizeResponse:
        records, warnings = parse_reply(request.raw, strip_fences=request.strip_fences)
        return NormalizeResponse(
            jsonable=records is not None,
            records=[record_to_mapping(r) for r in records] if records is not None else None,
            warnings=warnings,
        )

    @app.post("/evaluate", response_model=EvaluateResponse)
    def evaluate(request: EvaluateRequest) -> EvaluateResponse:
        pairs = []
        for item in request.pairs:
            predicted = (
                [record_from_mapping(r)[0] for r in item.predicted]
                if item.predicted is not None
                else None
            )
            truth = [record_from_mapping(r)[0] for r in item.truth]
            pairs.append(EvalPair.from_records(item.id, predicted, truth))
        summary = evaluate_corpus(pairs)
        return EvaluateResponse(
            summary=summary_to_mapping(summary),
            report=format_metrics_report(summary),
        )

    @app.post("/generate", response_model=GenerateResponse)
    def generate(request: GenerateRequest) -> GenerateResponse:
        config = SynthConfig(
            seed=request.seed,
            n_reports=request.n_reports,
            template_family=request.template_family,
        )
        reports = [
            GeneratedReport(
                id=document.id,
                text=document.raw_text,
                observation=document.observation,
                impression=document.impression,
                truth=[record_to_mapping(r) for r in truth],
            )
            for document, truth in generate_corpus(config)
        ]
        return GenerateResponse(reports=reports)

    @app.post("/prompt", response_model=PromptResponse)
    def prompt(request: PromptRequest) -> PromptResponse:
        document = _as_document(request.report)
        if request.mode == "label":
            text = build_label_prompt(list(standin_fewshot_examples()), document)
        else:
            text = build_finetune_instruction(document)
        return PromptResponse(id=document.id, prompt=text)

    return app


app = create_app()
