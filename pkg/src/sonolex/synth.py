"""Synthetic report corpora with known ground truth, plus controlled
corruptions for metric testing.

Family A renders each lesion as one strictly phrased observation sentence
(and, when impression attributes are present, one linkable impression
sentence), so the rule backend recovers the generation-time ground truth
exactly. Family B reuses the same ground truth but varies phrasing
(shorthand locations, millimeter sizes, clause reordering) with no
recoverability guarantee.

Generation is deterministic: every report draws from its own sub-seeded
RNG, so output is independent of worker count or report order.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

from .backends import ExtractionOutput
from .report_parser import extract_sections
from .schema import (
    NA,
    ALL_KEYS,
    VOCABULARIES,
    AttributeKey,
    LesionRecord,
    ReportDocument,
)


class InvalidConfigError(ValueError):
    pass


# Per-key probability that a sampled value is omitted (rendered and labeled
# "n/a"). Locations and lesion type are usually stated in real reports; most
# descriptive attributes usually are not. These defaults are synthetic.
DEFAULT_NA_RATES: dict[AttributeKey, float] = {
    key: 0.6
    for key in ALL_KEYS
}
DEFAULT_NA_RATES.update(
    {
        AttributeKey.LESION_TYPE: 0.1,
        AttributeKey.SIDE_OF_BREAST: 0.1,
        AttributeKey.CLOCK_POSITION: 0.1,
        AttributeKey.DISTANCE_FROM_NIPPLE: 0.1,
    }
)

_DISTANCES = ("0.5", "1", "1.5", "2", "2.5", "3", "3.5", "4", "5", "6", "7", "8", "9", "10", "11", "12")

_SUSPICION_PHRASES = {
    "benign": "Benign finding",
    "probably benign": "Probably benign finding",
    "negative": "Negative finding",
    "low": "Low suspicion of malignancy",
    "moderate": "Moderate suspicion of malignancy",
    "high": "High suspicion of malignancy",
}


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    n_reports: int = 100
    lesions_per_report: tuple[tuple[int, float], ...] = ((1, 0.6), (2, 0.3), (3, 0.1))
    na_rate_per_key: Mapping[AttributeKey, float] = field(
        default_factory=lambda: dict(DEFAULT_NA_RATES)
    )
    template_family: str = "A"

    def __post_init__(self) -> None:
        if self.n_reports < 0:
            raise InvalidConfigError("n_reports must be >= 0")
        if self.template_family not in ("A", "B"):
            raise InvalidConfigError(f"unknown template family: {self.template_family!r}")
        total = sum(p for _, p in self.lesions_per_report)
        if abs(total - 1.0) > 1e-9:
            raise InvalidConfigError("lesions_per_report probabilities must sum to 1")
        for count, p in self.lesions_per_report:
            if count < 0 or not 0.0 <= p <= 1.0:
                raise InvalidConfigError("invalid lesions_per_report entry")
        for key, rate in self.na_rate_per_key.items():
            if not 0.0 <= rate <= 1.0:
                raise InvalidConfigError(f"na rate for {key} out of [0, 1]")


def _vocab_values(key: AttributeKey) -> tuple[str, ...]:
    return tuple(v for v in VOCABULARIES[key].allowed_values if v != NA)


def _weighted_choice(rng: random.Random, items: Sequence[tuple[int, float]]) -> int:
    roll = rng.random()
    acc = 0.0
    for value, p in items:
        acc += p
        if roll < acc:
            return value
    return items[-1][0]


def _sample_lesion(rng: random.Random, side: str, clock: str, na_rates: Mapping[AttributeKey, float]) -> dict[AttributeKey, str]:
    values: dict[AttributeKey, str] = {
        AttributeKey.SIDE_OF_BREAST: side,
        AttributeKey.CLOCK_POSITION: clock,
        AttributeKey.DISTANCE_FROM_NIPPLE: rng.choice(_DISTANCES),
    }
    for key in ALL_KEYS:
        if key in values:
            continue
        values[key] = rng.choice(_vocab_values(key))
    # The n/a pass runs over every key in table order so the draw sequence
    # is stable.
    for key in ALL_KEYS:
        if rng.random() < na_rates.get(key, 0.0):
            values[key] = NA
    # Every family-A lesion keeps at least one location anchor, or the
    # clause splitter could never see it.
    if all(
        values[k] == NA
        for k in (
            AttributeKey.SIDE_OF_BREAST,
            AttributeKey.CLOCK_POSITION,
            AttributeKey.DISTANCE_FROM_NIPPLE,
            AttributeKey.ANATOMICAL_REGION,
        )
    ):
        values[AttributeKey.SIDE_OF_BREAST] = side
    return values


def _apply_linkability(lesions: list[dict[AttributeKey, str]]) -> None:
    """Blank the impression attributes of lesions that an impression
    sentence could not be linked back to (by exact side+clock, or by a
    unique side)."""
    pairs = [
        (l[AttributeKey.SIDE_OF_BREAST], l[AttributeKey.CLOCK_POSITION]) for l in lesions
    ]
    sides = [l[AttributeKey.SIDE_OF_BREAST] for l in lesions]
    for lesion, (side, clock) in zip(lesions, pairs):
        exact = side != NA and clock != NA and pairs.count((side, clock)) == 1
        by_side = side != NA and sides.count(side) == 1
        if not (exact or by_side):
            lesion[AttributeKey.SUSPICION] = NA
            lesion[AttributeKey.LESION_SUBTYPE] = NA
            lesion[AttributeKey.NEXT_STEP] = NA


def _article(noun_phrase: str) -> str:
    return "an" if noun_phrase[0] in "aeiou" else "a"


def _size_phrase(rng: random.Random, family: str) -> str:
    def dim() -> str:
        return f"{rng.randrange(1, 30) / 10:.1f}"

    if family == "B" and rng.random() < 0.5:
        return f"{rng.randrange(2, 15)} x {rng.randrange(2, 15)} x {rng.randrange(1, 9)} mm"
    if rng.random() < 0.5:
        return f"{dim()} x {dim()} x {dim()} cm"
    return f"{dim()} cm"


def _observation_sentence(rng: random.Random, lesion: Mapping[AttributeKey, str], family: str) -> str:
    side = lesion[AttributeKey.SIDE_OF_BREAST]
    clock = lesion[AttributeKey.CLOCK_POSITION]
    style_b = family == "B"

    prefix_parts: list[str] = []
    if side != NA and clock != NA:
        if style_b and rng.random() < 0.5:
            prefix_parts.append(f"in the {side} breast at {clock} o'clock")
        else:
            prefix_parts.append(f"At the {side} {clock}:00 position")
    elif side != NA:
        prefix_parts.append(f"In the {side} breast")
    elif clock != NA:
        prefix_parts.append(f"At the {clock}:00 position")

    region = lesion[AttributeKey.ANATOMICAL_REGION]
    if region != NA:
        prefix_parts.append(f"in the {region} region" if not style_b else f"{region}")
    depth = lesion[AttributeKey.DEPTH]
    if depth != NA:
        prefix_parts.append(f"at {depth} depth")
    distance = lesion[AttributeKey.DISTANCE_FROM_NIPPLE]
    if distance != NA:
        if style_b and rng.random() < 0.5:
            prefix_parts.append(f"N{distance}")
        else:
            prefix_parts.append(f"{distance} cm from the nipple")

    noun_words: list[str] = [_size_phrase(rng, family)]
    echo = lesion[AttributeKey.ECHOGENICITY]
    if echo != NA:
        noun_words.append(echo)
    shape = lesion[AttributeKey.LESION_SHAPE]
    if shape != NA:
        noun_words.append(shape)
    lesion_type = lesion[AttributeKey.LESION_TYPE]
    noun_words.append(lesion_type if lesion_type != NA else "lesion")
    noun = " ".join(noun_words)

    verb = "there is" if not style_b else rng.choice(("there is", "again noted is", "the study demonstrates"))
    core = f"{verb} {_article(noun)} {noun}"

    trailing: list[str] = []
    orientation = lesion[AttributeKey.ORIENTATION]
    if orientation != NA:
        trailing.append(f"in {orientation} orientation")
    margins = lesion[AttributeKey.LESION_MARGINS]
    if margins != NA:
        trailing.append(f"with {margins} margins")
    calcifications = lesion[AttributeKey.CALCIFICATIONS]
    if calcifications == "yes":
        trailing.append("with associated calcifications")
    elif calcifications == "no":
        trailing.append("without calcifications")
    vascularity = lesion[AttributeKey.VASCULARITY]
    if vascularity == "present":
        trailing.append("with internal vascularity")
    elif vascularity == "absent":
        trailing.append("with no internal vascularity")
    posterior = lesion[AttributeKey.POSTERIOR_FEATURES]
    if posterior != NA:
        trailing.append(f"with posterior acoustic {posterior}")

    parts = prefix_parts + [core] + trailing
    sentence = ", ".join(parts)
    return sentence[0].upper() + sentence[1:] + "."


def _impression_sentence(lesion: Mapping[AttributeKey, str], lesions: Sequence[Mapping[AttributeKey, str]]) -> str | None:
    suspicion = lesion[AttributeKey.SUSPICION]
    subtype = lesion[AttributeKey.LESION_SUBTYPE]
    next_step = lesion[AttributeKey.NEXT_STEP]
    if suspicion == NA and subtype == NA and next_step == NA:
        return None

    side = lesion[AttributeKey.SIDE_OF_BREAST]
    clock = lesion[AttributeKey.CLOCK_POSITION]
    pairs = [
        (l[AttributeKey.SIDE_OF_BREAST], l[AttributeKey.CLOCK_POSITION]) for l in lesions
    ]
    if side != NA and clock != NA and pairs.count((side, clock)) == 1:
        link = f"at the {side} {clock}:00 position"
    else:
        link = f"in the {side} breast"

    parts: list[str] = []
    if suspicion != NA:
        parts.append(_SUSPICION_PHRASES[suspicion])
    if subtype != NA:
        parts.append(f"consistent with {subtype}")
    base = ", ".join(parts) if parts else "Finding"
    sentence = f"{base} {link}"
    if next_step != NA:
        sentence += f"; recommend {next_step}"
    return sentence[0].upper() + sentence[1:] + "."


def _generate_report(
    config: SynthConfig, index: int
) -> tuple[ReportDocument, tuple[LesionRecord, ...]]:
    rng = random.Random(f"{config.seed}:{index}")
    n_lesions = _weighted_choice(rng, config.lesions_per_report)

    anchor_pool = [(s, str(h)) for s in ("left", "right") for h in range(1, 13)]
    anchors = rng.sample(anchor_pool, n_lesions)
    lesions = [
        _sample_lesion(rng, side, clock, config.na_rate_per_key)
        for side, clock in anchors
    ]
    _apply_linkability(lesions)

    observation_sentences = [
        _observation_sentence(rng, lesion, config.template_family) for lesion in lesions
    ]
    if rng.random() < 0.7:
        observation_sentences.append(
            "No suspicious cystic or solid masses identified in the remaining breast tissue."
        )
    impression_sentences = [
        s for lesion in lesions if (s := _impression_sentence(lesion, lesions))
    ]

    observation = " ".join(observation_sentences)
    impression = " ".join(impression_sentences) if impression_sentences else "No Impression"
    raw_text = f"Observation:\n{observation}\n\nImpression:\n{impression}\n"

    report_id = f"synth-{config.seed}-{index:05d}"
    document = extract_sections(raw_text, report_id=report_id)
    truth = tuple(
        LesionRecord(**{key.value: lesion[key] for key in ALL_KEYS}) for lesion in lesions
    )
    return document, truth


def generate_corpus(
    config: SynthConfig,
) -> list[tuple[ReportDocument, tuple[LesionRecord, ...]]]:
    """Generate reports with their ground-truth lesion lists."""
    return [_generate_report(config, i) for i in range(config.n_reports)]


def standin_fewshot_examples(seed: int = 2024, n: int = 7):
    """Synthetic stand-ins for the curated few-shot examples (the curated
    set comes from private reports and is not distributable)."""
    from .prompts import FewShotExample

    config = SynthConfig(seed=seed, n_reports=n, template_family="A")
    return tuple(
        FewShotExample(
            observation=document.observation,
            impression=document.impression or "",
            expected_output=truth,
        )
        for document, truth in generate_corpus(config)
    )


# --- controlled corruptions --------------------------------------------------


@dataclass(frozen=True)
class MutationSpec:
    drop_lesion_rate: float = 0.0
    swap_attribute_rate: float = 0.0
    na_out_rate: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        for rate in (self.drop_lesion_rate, self.swap_attribute_rate, self.na_out_rate):
            if not 0.0 <= rate <= 1.0:
                raise InvalidConfigError("mutation rates must be in [0, 1]")


@dataclass(frozen=True)
class MutationRecord:
    """One applied mutation, with enough detail to replay it exactly."""

    report_id: str
    op: str  # swap_attribute | na_out | drop_lesion
    index: int
    partner_index: int | None = None
    key: str | None = None
    before: str | None = None
    after: str | None = None

    def to_mapping(self) -> dict:
        return {
            "report_id": self.report_id,
            "op": self.op,
            "index": self.index,
            "partner_index": self.partner_index,
            "key": self.key,
            "before": self.before,
            "after": self.after,
        }

    @classmethod
    def from_mapping(cls, obj: Mapping) -> "MutationRecord":
        return cls(
            report_id=obj["report_id"],
            op=obj["op"],
            index=obj["index"],
            partner_index=obj.get("partner_index"),
            key=obj.get("key"),
            before=obj.get("before"),
            after=obj.get("after"),
        )


def _record_with(record: LesionRecord, key: AttributeKey, value: str) -> LesionRecord:
    return replace(record, **{key.value: value})


def _reserialize(output: ExtractionOutput, records: list[LesionRecord]) -> ExtractionOutput:
    from .prompts import serialize_records

    return replace(
        output, parsed=tuple(records), raw_text=serialize_records(records, indent=None)
    )


def corrupt(
    predictions: Sequence[ExtractionOutput], spec: MutationSpec
) -> tuple[list[ExtractionOutput], list[MutationRecord]]:
    """Apply seeded mutations to parsed predictions. Unparseable outputs
    pass through untouched. The ledger lists every change in replay order."""
    mutated: list[ExtractionOutput] = []
    ledger: list[MutationRecord] = []
    for output in predictions:
        if output.parsed is None:
            mutated.append(output)
            continue
        rng = random.Random(f"{spec.seed}:{output.report_id}")
        records = list(output.parsed)
        entries: list[MutationRecord] = []

        if len(records) >= 2 and rng.random() < spec.swap_attribute_rate:
            i, j = rng.sample(range(len(records)), 2)
            key = rng.choice(ALL_KEYS)
            before = records[i].get(key)
            after = records[j].get(key)
            records[i] = _record_with(records[i], key, after)
            records[j] = _record_with(records[j], key, before)
            entries.append(
                MutationRecord(
                    report_id=output.report_id,
                    op="swap_attribute",
                    index=i,
                    partner_index=j,
                    key=key.value,
                    before=before,
                    after=after,
                )
            )

        for idx, record in enumerate(records):
            for key in ALL_KEYS:
                value = record.get(key)
                if value != NA and rng.random() < spec.na_out_rate:
                    records[idx] = _record_with(records[idx], key, NA)
                    entries.append(
                        MutationRecord(
                            report_id=output.report_id,
                            op="na_out",
                            index=idx,
                            key=key.value,
                            before=value,
                            after=NA,
                        )
                    )

        drop = [idx for idx in range(len(records)) if rng.random() < spec.drop_lesion_rate]
        for idx in sorted(drop, reverse=True):
            from .schema import record_to_mapping

            entries.append(
                MutationRecord(
                    report_id=output.report_id,
                    op="drop_lesion",
                    index=idx,
                    before=json.dumps(record_to_mapping(records[idx])),
                )
            )
            del records[idx]

        mutated.append(_reserialize(output, records))
        ledger.extend(entries)
    return mutated, ledger


def apply_ledger(
    predictions: Sequence[ExtractionOutput], ledger: Sequence[MutationRecord]
) -> list[ExtractionOutput]:
    """Replay a mutation ledger against clean predictions. Entries apply in
    ledger order, so the result matches what corrupt() produced."""
    by_report: dict[str, list[MutationRecord]] = {}
    for entry in ledger:
        by_report.setdefault(entry.report_id, []).append(entry)

    replayed: list[ExtractionOutput] = []
    for output in predictions:
        entries = by_report.get(output.report_id, [])
        if output.parsed is None or not entries:
            replayed.append(output)
            continue
        records = list(output.parsed)
        for entry in entries:
            if entry.op == "swap_attribute":
                key = AttributeKey(entry.key)
                records[entry.index] = _record_with(records[entry.index], key, entry.after)
                records[entry.partner_index] = _record_with(
                    records[entry.partner_index], key, entry.before
                )
            elif entry.op == "na_out":
                key = AttributeKey(entry.key)
                records[entry.index] = _record_with(records[entry.index], key, NA)
            elif entry.op == "drop_lesion":
                del records[entry.index]
            else:
                raise ValueError(f"unknown mutation op: {entry.op!r}")
        replayed.append(_reserialize(output, records))
    return replayed
