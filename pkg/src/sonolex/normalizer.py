"""Turns raw backend replies into validated lesion lists.

A reply is "jsonable" when, after stripping markdown code fences and any
prose outside the outermost brackets, it parses as a list of dictionaries.
Parsing is strict (JSON, or a Python literal list, since replies sometimes
come back in repr form); there is no repair of almost-valid structures, so
the validity metric stays honest.
"""

from __future__ import annotations

import ast
import json
import re
from typing import Any

from .schema import LesionRecord, record_from_mapping

_FENCE = re.compile(r"```[a-zA-Z]*\n?(.*?)```", re.DOTALL)


def _strip_fences(raw: str) -> str:
    match = _FENCE.search(raw)
    return match.group(1) if match else raw


def _bracketed_payload(raw: str, strip_fences: bool) -> str | None:
    text = _strip_fences(raw) if strip_fences else raw
    start = text.find("[")
    end = text.rfind("]")
    if start == -1 or end == -1 or end < start:
        return None
    return text[start : end + 1]


def _parse_list(payload: str) -> list[Any] | None:
    for parse in (json.loads, ast.literal_eval):
        try:
            value = parse(payload)
        except Exception:
            continue
        if isinstance(value, list):
            return value
        return None
    return None


def parse_reply(
    raw: str, strip_fences: bool = True
) -> tuple[tuple[LesionRecord, ...] | None, list[str]]:
    """Parse a backend reply into records plus diagnostics. Returns
    (None, diagnostics) when the reply is not a valid list of dictionaries."""
    payload = _bracketed_payload(raw, strip_fences)
    if payload is None:
        return None, ["no bracketed list found in reply"]
    items = _parse_list(payload)
    if items is None:
        return None, ["bracketed payload does not parse as a list"]
    records: list[LesionRecord] = []
    warnings: list[str] = []
    for i, item in enumerate(items):
        if not isinstance(item, dict):
            return None, [f"list element {i} is not a dictionary"]
        record, item_warnings = record_from_mapping(item)
        records.append(record)
        warnings.extend(f"lesion {i}: {w}" for w in item_warnings)
    return tuple(records), warnings


def is_jsonable(raw: str, strip_fences: bool = True) -> bool:
    """True iff the reply parses as a list whose every element is a
    dictionary. Total; never raises."""
    return parse_reply(raw, strip_fences)[0] is not None


def parse_model_output(
    raw: str, strip_fences: bool = True
) -> tuple[LesionRecord, ...] | None:
    """The reply's lesion list, canonicalized, or None when not jsonable."""
    return parse_reply(raw, strip_fences)[0]
