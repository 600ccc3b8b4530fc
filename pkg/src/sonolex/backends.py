"""Extraction backends: a chat-completions LLM client and a deterministic
rule-based extractor.

The rule extractor splits the observation into lesion clauses anchored on
location phrases (a side word, a clock position, a named region, or a
nipple-distance phrase), scans each clause for controlled-vocabulary terms,
and links impression sentences back to lesions by side and clock. It is a
pure function of the report text, which makes it usable both as a baseline
and as an oracle against generated corpora.

Any object with a ``name`` attribute and an ``extract(report)`` method
works as a backend for batching.
"""

from __future__ import annotations

import os
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import httpx

from .schema import (
    NA,
    VOCABULARIES,
    AttributeKey,
    LesionRecord,
    ReportDocument,
    canonicalize_value,
)


class BackendError(Exception):
    """Base class for extraction backend failures."""


class TransportError(BackendError):
    def __init__(self, message: str, attempts: int = 1):
        super().__init__(message)
        self.attempts = attempts


class AuthFailureError(BackendError):
    pass


class RateLimitedError(BackendError):
    def __init__(self, message: str, attempts: int = 1):
        super().__init__(message)
        self.attempts = attempts


class MalformedReplyError(BackendError):
    pass


@dataclass(frozen=True)
class RetryPolicy:
    count: int = 2
    backoff: float = 0.5


@dataclass(frozen=True)
class LlmEndpointConfig:
    """Connection settings for a chat-completions endpoint."""

    base_url: str
    model_name: str
    api_key_env: str = "BUREX_API_KEY"
    temperature: float = 0.0
    max_output_tokens: int = 2048
    request_timeout: float = 60.0
    max_concurrent_requests: int = 4
    retry: RetryPolicy = field(default_factory=RetryPolicy)

    def __post_init__(self) -> None:
        if self.max_concurrent_requests < 1:
            raise ValueError("max_concurrent_requests must be >= 1")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")


@dataclass(frozen=True)
class ExtractionOutput:
    """A backend's reply for one report: the verbatim text, the parsed
    lesion list when the text was parseable, and bookkeeping."""

    report_id: str
    raw_text: str
    parsed: tuple[LesionRecord, ...] | None
    backend_name: str
    latency: float
    warnings: tuple[str, ...] = ()
    error: str | None = None


# --- rule-based extraction -------------------------------------------------

_SENTENCE_SPLIT = re.compile(r"(?<=[.!?])\s+")
_WS = re.compile(r"\s+")

_SIDE = re.compile(r"\b(left|right)\b")
_CLOCK = re.compile(r"\b(\d{1,2})(?::00|\s*o'?clock)\b")
_NIPPLE_DISTANCE = re.compile(r"\b(\d+(?:\.\d+)?)\s*cm from the nipple\b")
_N_SHORTHAND = re.compile(r"\bn(\d+(?:\.\d+)?)\b")
_DEPTH = re.compile(r"\b(anterior|middle|posterior) depth\b")
_SHAPE = re.compile(r"\b(oval|round|irregular)\b(?!\s+margin)")
_ORIENTATION = re.compile(r"\b(non-parallel|parallel|other)(?= orientation\b)|(?<=\boriented )(non-parallel|parallel)\b")
_MARGINS = re.compile(
    r"\b(circumscribed|obscured|angular|microlobulated|spiculated|lobulated|irregular|septated)(?=\s+margins?\b)"
)
_POSTERIOR_FEATURES = re.compile(r"\bposterior (?:acoustic )?(enhancement|shadowing)\b")
_NO_CALCIFICATIONS = re.compile(r"\b(?:without|no) (?:associated )?calcifications?\b")
_CALCIFICATIONS = re.compile(r"\bcalcifications?\b")
_NO_VASCULARITY = re.compile(r"\b(?:without|no) internal vascularity\b")
_VASCULARITY = re.compile(r"\bvascularity\b")

_REGION_TERMS = tuple(v for v in VOCABULARIES[AttributeKey.ANATOMICAL_REGION].allowed_values if v != NA)
_TYPE_TERMS = tuple(v for v in VOCABULARIES[AttributeKey.LESION_TYPE].allowed_values if v != NA)
_ECHO_TERMS = tuple(v for v in VOCABULARIES[AttributeKey.ECHOGENICITY].allowed_values if v != NA)
_SUSPICION_TERMS = tuple(VOCABULARIES[AttributeKey.SUSPICION].allowed_values)
_SUBTYPE_TERMS = tuple(v for v in VOCABULARIES[AttributeKey.LESION_SUBTYPE].allowed_values if v != NA)
_NEXT_STEP_TERMS = tuple(v for v in VOCABULARIES[AttributeKey.NEXT_STEP].allowed_values if v != NA)


def _normalize_clause(text: str) -> str:
    return _WS.sub(" ", text).lower()


def _scan_vocab(text: str, terms: Sequence[str]) -> str | None:
    """Leftmost match wins; on a tie in start position, the longest term."""
    best: tuple[tuple[int, int], str] | None = None
    for term in terms:
        m = re.search(rf"\b{re.escape(term)}\b", text)
        if m is None:
            continue
        rank = (m.start(), -len(term))
        if best is None or rank < best[0]:
            best = (rank, term)
    return best[1] if best else None


def _find_side(text: str) -> str:
    m = _SIDE.search(text)
    return m.group(1) if m else NA


def _find_clock(text: str) -> str:
    for m in _CLOCK.finditer(text):
        hour = int(m.group(1))
        if 1 <= hour <= 12:
            return str(hour)
    return NA


def _find_distance(text: str) -> str:
    m = _NIPPLE_DISTANCE.search(text) or _N_SHORTHAND.search(text)
    if m is None:
        return NA
    return canonicalize_value(AttributeKey.DISTANCE_FROM_NIPPLE, m.group(1))


def _has_location_anchor(text: str) -> bool:
    return bool(
        _SIDE.search(text)
        or _CLOCK.search(text)
        or _NIPPLE_DISTANCE.search(text)
        or _N_SHORTHAND.search(text)
        or _scan_vocab(text, _REGION_TERMS)
    )


def _sentences(text: str) -> list[str]:
    return [s for s in _SENTENCE_SPLIT.split(text) if s.strip()]


def _clause_record(clause: str) -> LesionRecord:
    values: dict[str, str] = {
        AttributeKey.SIDE_OF_BREAST.value: _find_side(clause),
        AttributeKey.CLOCK_POSITION.value: _find_clock(clause),
        AttributeKey.DISTANCE_FROM_NIPPLE.value: _find_distance(clause),
    }

    m = _DEPTH.search(clause)
    if m:
        values[AttributeKey.DEPTH.value] = m.group(1)
    region = _scan_vocab(clause, _REGION_TERMS)
    if region:
        values[AttributeKey.ANATOMICAL_REGION.value] = region
    lesion_type = _scan_vocab(clause, _TYPE_TERMS)
    if lesion_type:
        values[AttributeKey.LESION_TYPE.value] = lesion_type
    m = _SHAPE.search(clause)
    if m:
        values[AttributeKey.LESION_SHAPE.value] = m.group(1)
    m = _ORIENTATION.search(clause)
    if m:
        values[AttributeKey.ORIENTATION.value] = m.group(1) or m.group(2)
    m = _MARGINS.search(clause)
    if m:
        values[AttributeKey.LESION_MARGINS.value] = m.group(1)
    echo = _scan_vocab(clause, _ECHO_TERMS)
    if echo:
        values[AttributeKey.ECHOGENICITY.value] = echo
    if _NO_CALCIFICATIONS.search(clause):
        values[AttributeKey.CALCIFICATIONS.value] = "no"
    elif _CALCIFICATIONS.search(clause):
        values[AttributeKey.CALCIFICATIONS.value] = "yes"
    if _NO_VASCULARITY.search(clause):
        values[AttributeKey.VASCULARITY.value] = "absent"
    elif _VASCULARITY.search(clause):
        values[AttributeKey.VASCULARITY.value] = "present"
    m = _POSTERIOR_FEATURES.search(clause)
    if m:
        values[AttributeKey.POSTERIOR_FEATURES.value] = m.group(1)

    return LesionRecord(**values)


def _link_impression(
    records: list[LesionRecord], impression: str | None
) -> list[LesionRecord]:
    """Fill suspicion / subtype / next_step from impression sentences,
    preferring an exact (side, clock) match, then a unique-side match."""
    if not impression or not records:
        return records

    updated = list(records)
    for sentence in _sentences(impression):
        clause = _normalize_clause(sentence)
        suspicion = _scan_vocab(clause, _SUSPICION_TERMS)
        subtype = _scan_vocab(clause, _SUBTYPE_TERMS)
        next_step = _scan_vocab(clause, _NEXT_STEP_TERMS)
        if suspicion is None and subtype is None and next_step is None:
            continue
        side = _find_side(clause)
        clock = _find_clock(clause)

        target: int | None = None
        if side != NA and clock != NA:
            matches = [
                i
                for i, r in enumerate(updated)
                if r.side_of_breast == side and r.clock_position == clock
            ]
            if matches:
                target = matches[0]
        if target is None and side != NA:
            same_side = [i for i, r in enumerate(updated) if r.side_of_breast == side]
            if len(same_side) == 1:
                target = same_side[0]
        if target is None:
            continue

        record = updated[target]
        changes: dict[str, str] = {}
        if suspicion and record.suspicion_of_malignancy == NA:
            changes[AttributeKey.SUSPICION.value] = suspicion
        if subtype and record.lesion_subtype == NA:
            changes[AttributeKey.LESION_SUBTYPE.value] = subtype
        if next_step and record.next_step == NA:
            changes[AttributeKey.NEXT_STEP.value] = next_step
        if changes:
            updated[target] = LesionRecord(
                **{**{k.value: record.get(k) for k in AttributeKey}, **changes}
            )
    return updated


def extract_rule_records(report: ReportDocument) -> tuple[LesionRecord, ...]:
    """Rule-based lesion records for a report, in textual order."""
    records = [
        _clause_record(_normalize_clause(sentence))
        for sentence in _sentences(report.observation)
        if _has_location_anchor(_normalize_clause(sentence))
    ]
    return tuple(_link_impression(records, report.impression))


class RuleBackend:
    """Deterministic extraction from vocabulary cues; always parseable."""

    name = "rules"

    def extract(self, report: ReportDocument) -> ExtractionOutput:
        from .prompts import serialize_records

        records = extract_rule_records(report)
        # Pure function of the text: latency is pinned to keep outputs
        # byte-reproducible.
        return ExtractionOutput(
            report_id=report.id,
            raw_text=serialize_records(list(records), indent=None),
            parsed=records,
            backend_name=self.name,
            latency=0.0,
        )


def extract_rules(report: ReportDocument) -> ExtractionOutput:
    return RuleBackend().extract(report)


# --- LLM client ------------------------------------------------------------


def _resolve_api_key(config: LlmEndpointConfig) -> str:
    key = os.environ.get(config.api_key_env, "")
    return key


def extract_llm(
    config: LlmEndpointConfig,
    prompt: str,
    report_id: str,
    client: httpx.Client | None = None,
) -> ExtractionOutput:
    """Send one chat-completions request and normalize the reply.

    Transport failures and 429/5xx responses are retried per the config's
    policy; auth failures and malformed replies are surfaced immediately.
    """
    from .normalizer import parse_reply

    url = config.base_url.rstrip("/") + "/chat/completions"
    payload = {
        "model": config.model_name,
        "messages": [{"role": "user", "content": prompt}],
        "temperature": config.temperature,
        "max_tokens": config.max_output_tokens,
    }
    headers = {}
    api_key = _resolve_api_key(config)
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"

    owns_client = client is None
    if owns_client:
        client = httpx.Client(timeout=config.request_timeout)
    attempts = config.retry.count + 1
    started = time.perf_counter()
    try:
        last_error: Exception | None = None
        rate_limited = False
        for attempt in range(attempts):
            if attempt:
                time.sleep(config.retry.backoff * (2 ** (attempt - 1)))
            try:
                response = client.post(url, json=payload, headers=headers)
            except httpx.HTTPError as exc:
                last_error = exc
                rate_limited = False
                continue
            if response.status_code in (401, 403):
                raise AuthFailureError(
                    f"authentication failed ({response.status_code}); "
                    f"check ${config.api_key_env}"
                )
            if response.status_code == 429 or response.status_code >= 500:
                last_error = httpx.HTTPStatusError(
                    f"status {response.status_code}",
                    request=response.request,
                    response=response,
                )
                rate_limited = response.status_code == 429
                continue
            if response.status_code != 200:
                raise TransportError(
                    f"unexpected status {response.status_code}: {response.text[:200]}",
                    attempts=attempt + 1,
                )
            try:
                data = response.json()
                content = data["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise MalformedReplyError(f"cannot read reply text: {exc}") from exc
            if not isinstance(content, str):
                raise MalformedReplyError(
                    f"reply content is not text: {type(content).__name__}"
                )
            latency = time.perf_counter() - started
            parsed, warnings = parse_reply(content)
            return ExtractionOutput(
                report_id=report_id,
                raw_text=content,
                parsed=parsed,
                backend_name="llm",
                latency=latency,
                warnings=tuple(warnings),
            )
        if rate_limited:
            raise RateLimitedError(
                f"rate limited after {attempts} attempts", attempts=attempts
            )
        raise TransportError(
            f"request failed after {attempts} attempts: {last_error}",
            attempts=attempts,
        )
    finally:
        if owns_client:
            client.close()


class LlmBackend:
    """Chat-completions backend; prompts are built per report."""

    name = "llm"

    def __init__(
        self,
        config: LlmEndpointConfig,
        prompt_fn: Callable[[ReportDocument], str] | None = None,
        transport: httpx.BaseTransport | None = None,
    ):
        from .prompts import build_finetune_instruction

        self.config = config
        self.prompt_fn = prompt_fn or build_finetune_instruction
        self._client = httpx.Client(timeout=config.request_timeout, transport=transport)

    def extract(self, report: ReportDocument) -> ExtractionOutput:
        prompt = self.prompt_fn(report)
        return extract_llm(self.config, prompt, report.id, client=self._client)

    def close(self) -> None:
        self._client.close()


def extract_batch(
    backend,
    reports: Sequence[ReportDocument],
    max_concurrent: int | None = None,
) -> list[ExtractionOutput]:
    """Run a backend over many reports, bounded-concurrently, preserving
    input order. A failing report yields an error record; the batch never
    aborts."""
    if max_concurrent is None:
        config = getattr(backend, "config", None)
        max_concurrent = config.max_concurrent_requests if config else 1

    def one(report: ReportDocument) -> ExtractionOutput:
        try:
            return backend.extract(report)
        except BackendError as exc:
            return ExtractionOutput(
                report_id=report.id,
                raw_text="",
                parsed=None,
                backend_name=backend.name,
                latency=0.0,
                error=f"{type(exc).__name__}: {exc}",
            )

    if not reports:
        return []
    if max_concurrent == 1:
        return [one(r) for r in reports]
    with ThreadPoolExecutor(max_workers=max_concurrent) as pool:
        return list(pool.map(one, reports))
