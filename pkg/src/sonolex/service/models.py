"""Request/response models for the extraction service."""

from __future__ import annotations

from typing import Any, Optional

from pydantic import BaseModel, Field


class ParseRequest(BaseModel):
    id: str = ""
    text: str


class ParseResponse(BaseModel):
    id: str
    observation: str
    impression: Optional[str] = None


class ReportIn(BaseModel):
    """Either raw text or pre-isolated sections."""

    id: str = ""
    text: Optional[str] = None
    observation: Optional[str] = None
    impression: Optional[str] = None


class LlmSettings(BaseModel):
    base_url: str
    model_name: str
    api_key_env: str = "BUREX_API_KEY"
    temperature: float = 0.0
    max_output_tokens: int = 2048
    request_timeout: float = 60.0
    max_concurrent_requests: int = Field(default=4, ge=1)


class ExtractRequest(BaseModel):
    reports: list[ReportIn]
    backend: str = Field(default="rules", pattern="^(rules|llm)$")
    llm: Optional[LlmSettings] = None


class ExtractionOutputModel(BaseModel):
    id: str
    backend: str
    latency: float
    raw_text: str
    parsed: Optional[list[dict[str, Any]]] = None
    warnings: list[str] = []
    error: Optional[str] = None


class ExtractResponse(BaseModel):
    outputs: list[ExtractionOutputModel]


class NormalizeRequest(BaseModel):
    raw: str
    strip_fences: bool = True


class NormalizeResponse(BaseModel):
    jsonable: bool
    records: Optional[list[dict[str, Any]]] = None
    warnings: list[str] = []


class EvalPairIn(BaseModel):
    id: str
    predicted: Optional[list[dict[str, Any]]] = None  # None marks an unparseable output
    truth: list[dict[str, Any]]


class EvaluateRequest(BaseModel):
    pairs: list[EvalPairIn]


class EvaluateResponse(BaseModel):
    summary: dict[str, Any]
    report: str


class GenerateRequest(BaseModel):
    seed: int = 0
    n_reports: int = Field(default=10, ge=0, le=10_000)
    template_family: str = Field(default="A", pattern="^[AB]$")


class GeneratedReport(BaseModel):
    id: str
    text: str
    observation: str
    impression: Optional[str] = None
    truth: list[dict[str, Any]]


class GenerateResponse(BaseModel):
    reports: list[GeneratedReport]


class PromptRequest(BaseModel):
    report: ReportIn
    mode: str = Field(default="instruction", pattern="^(label|instruction)$")


class PromptResponse(BaseModel):
    id: str
    prompt: str


class KeyInfo(BaseModel):
    key: str
    json_path: str
    allowed_values: list[str]
    in_close_set: bool


class HealthResponse(BaseModel):
    status: str
    version: str
