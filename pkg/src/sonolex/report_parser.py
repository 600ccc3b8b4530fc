"""Isolates the observation (findings) and impression sections from raw
report text.

Section headers are matched at line starts, case-insensitively, with an
optional trailing colon; a section body runs until the next known header or
the end of the report. Bodies are kept verbatim apart from edge trimming so
downstream extraction sees the original wording.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .schema import ReportDocument

OBSERVATION_HEADERS = ("observation", "observations", "findings")
IMPRESSION_HEADERS = ("impression",)
TERMINATOR_HEADERS = ("disclosure",)

# Bodies that mean "this section was left empty on purpose".
_EMPTY_IMPRESSION = "no impression"


class NoObservationError(ValueError):
    """Raised when a report has no recognizable observation section."""


@dataclass(frozen=True)
class SectionRules:
    """Header spellings for each section. Extend via configuration when a
    site uses different headings."""

    observation_headers: tuple[str, ...] = OBSERVATION_HEADERS
    impression_headers: tuple[str, ...] = IMPRESSION_HEADERS
    terminator_headers: tuple[str, ...] = TERMINATOR_HEADERS

    def __post_init__(self) -> None:
        if not self.observation_headers or not self.impression_headers:
            raise ValueError("header pattern lists must be non-empty")

    def _header_re(self, headers: tuple[str, ...]) -> re.Pattern[str]:
        alternatives = "|".join(re.escape(h) for h in headers)
        # Anchored to a line start; header word plus optional colon.
        return re.compile(
            rf"^[ \t]*(?:{alternatives})[ \t]*:?[ \t]*", re.IGNORECASE | re.MULTILINE
        )

    @property
    def observation_re(self) -> re.Pattern[str]:
        return self._header_re(self.observation_headers)

    @property
    def any_header_re(self) -> re.Pattern[str]:
        return self._header_re(
            self.observation_headers + self.impression_headers + self.terminator_headers
        )

    @property
    def impression_re(self) -> re.Pattern[str]:
        return self._header_re(self.impression_headers)


DEFAULT_RULES = SectionRules()


def _section_body(raw_text: str, start: int, rules: SectionRules) -> str:
    terminator = rules.any_header_re.search(raw_text, start)
    end = terminator.start() if terminator else len(raw_text)
    return raw_text[start:end].strip()


def extract_sections(
    raw_text: str,
    rules: SectionRules = DEFAULT_RULES,
    report_id: str = "",
) -> ReportDocument:
    """Split a report into observation and impression sections.

    Raises NoObservationError when no observation header is present; an
    impression header is optional, and an empty or "No Impression" body
    counts as absent.
    """
    obs_header = rules.observation_re.search(raw_text)
    if obs_header is None:
        raise NoObservationError(
            f"report {report_id or '<unnamed>'}: no observation header found "
            f"(accepted headers: {', '.join(rules.observation_headers)})"
        )
    observation = _section_body(raw_text, obs_header.end(), rules)
    if not observation:
        raise NoObservationError(
            f"report {report_id or '<unnamed>'}: observation section is empty"
        )

    impression: str | None = None
    imp_header = rules.impression_re.search(raw_text)
    if imp_header is not None:
        body = _section_body(raw_text, imp_header.end(), rules)
        normalized = re.sub(r"\s+", " ", body).strip().rstrip(".").lower()
        if body and normalized != _EMPTY_IMPRESSION:
            impression = body

    return ReportDocument(
        id=report_id,
        raw_text=raw_text,
        observation=observation,
        impression=impression,
    )
