"""Corpus evaluation: per-report JSONable/EM/CDM accuracies and per-key
recall / precision / F1.

Matching is positional after a deterministic sort: records order by side
(left, right, then n/a), then clock hour ascending with n/a last, then
nipple distance ascending with n/a last, then the remaining attribute
values in table order. EM compares all 16 keys, CDM the first 10; both
require equal list lengths first. Per-key counting splits both lists by
side and compares index-by-index up to the shorter length, so a missed
lesion on one side cannot shift the pairing on the other.

Everything here is a pure fold over integer counts; results are identical
however the corpus is sharded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .backends import ExtractionOutput
from .schema import ALL_KEYS, CLOSE_KEYS, AttributeKey, LesionRecord

_SIDE_RANK = {"left": 0, "right": 1}
_NON_LOCATION_KEYS = tuple(
    k
    for k in ALL_KEYS
    if k
    not in (
        AttributeKey.SIDE_OF_BREAST,
        AttributeKey.CLOCK_POSITION,
        AttributeKey.DISTANCE_FROM_NIPPLE,
    )
)


def _clock_rank(value: str) -> float:
    try:
        return int(value)
    except ValueError:
        return math.inf


def _distance_rank(value: str) -> float:
    try:
        return float(value)
    except ValueError:
        return math.inf


def _sort_key(record: LesionRecord):
    return (
        _SIDE_RANK.get(record.side_of_breast, 2),
        _clock_rank(record.clock_position),
        _distance_rank(record.distance_from_nipple),
        tuple(record.get(k) for k in _NON_LOCATION_KEYS),
        # Raw location strings as a final tie-break so the order is total.
        record.side_of_breast,
        record.clock_position,
        record.distance_from_nipple,
    )


def sort_lesions(records: Sequence[LesionRecord]) -> list[LesionRecord]:
    """Deterministic total order used before any positional comparison."""
    return sorted(records, key=_sort_key)


def len_match(pred: Sequence[LesionRecord], truth: Sequence[LesionRecord]) -> bool:
    return len(pred) == len(truth)


def _conjunction_match(
    pred: Sequence[LesionRecord],
    truth: Sequence[LesionRecord],
    keys: tuple[AttributeKey, ...],
) -> bool:
    if not len_match(pred, truth):
        return False
    pred_sorted = sort_lesions(pred)
    truth_sorted = sort_lesions(truth)
    return all(
        p.get(k) == t.get(k)
        for p, t in zip(pred_sorted, truth_sorted)
        for k in keys
    )


def cdm_match(pred: Sequence[LesionRecord], truth: Sequence[LesionRecord]) -> bool:
    """Length match plus value equality on the 10 close-domain keys."""
    return _conjunction_match(pred, truth, CLOSE_KEYS)


def em_match(pred: Sequence[LesionRecord], truth: Sequence[LesionRecord]) -> bool:
    """Length match plus value equality on all 16 keys."""
    return _conjunction_match(pred, truth, ALL_KEYS)


def split_by_side(
    records: Sequence[LesionRecord],
) -> dict[str, list[LesionRecord]]:
    """Partition into left / right / na lists, preserving order. Sides other
    than left and right (including "n/a") land in the na bucket."""
    buckets: dict[str, list[LesionRecord]] = {"left": [], "right": [], "na": []}
    for record in records:
        side = record.side_of_breast
        bucket = side if side in ("left", "right") else "na"
        buckets[bucket].append(record)
    return buckets


def count_match(
    pred_side: Sequence[LesionRecord],
    truth_side: Sequence[LesionRecord],
    key: AttributeKey,
) -> int:
    """Positional matches on one key within one side, up to the shorter
    list's length. Matching "n/a" values count."""
    min_len = min(len(pred_side), len(truth_side))
    return sum(
        1
        for i in range(min_len)
        if truth_side[i].get(key) == pred_side[i].get(key)
    )


@dataclass(frozen=True)
class EvalPair:
    """One report's prediction alongside its ground truth."""

    report_id: str
    prediction: ExtractionOutput
    truth: tuple[LesionRecord, ...]

    @classmethod
    def from_records(
        cls,
        report_id: str,
        predicted: Sequence[LesionRecord] | None,
        truth: Sequence[LesionRecord],
        backend_name: str = "records",
    ) -> "EvalPair":
        """Wrap bare record lists (predicted=None marks an unparseable
        output)."""
        from .prompts import serialize_records

        raw = serialize_records(list(predicted), indent=None) if predicted is not None else ""
        output = ExtractionOutput(
            report_id=report_id,
            raw_text=raw,
            parsed=tuple(predicted) if predicted is not None else None,
            backend_name=backend_name,
            latency=0.0,
        )
        return cls(report_id=report_id, prediction=output, truth=tuple(truth))


@dataclass(frozen=True)
class KeyMetrics:
    recall: float
    precision: float
    f1: float


@dataclass(frozen=True)
class EvalSummary:
    """Corpus accuracies plus per-key scores, in the shape of the result
    tables: three per-report accuracies and recall/precision/F1 per key."""

    jsonable_acc: float
    em_acc: float
    cdm_acc: float
    per_key: Mapping[AttributeKey, KeyMetrics]
    counts: Mapping[str, int]
    flags: tuple[str, ...] = field(default=())


def _f1(recall: float, precision: float) -> float:
    if recall + precision == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def evaluate_corpus(pairs: Sequence[EvalPair]) -> EvalSummary:
    """Evaluate a corpus of (prediction, truth) pairs.

    Non-jsonable predictions count as empty lists everywhere. Degenerate
    denominators (no truth lesions or no predicted lesions) report the
    affected metric as 0 with a flag instead of dividing.
    """
    n_reports = len(pairs)
    flags: list[str] = []
    if n_reports == 0:
        zero = KeyMetrics(0.0, 0.0, 0.0)
        return EvalSummary(
            jsonable_acc=0.0,
            em_acc=0.0,
            cdm_acc=0.0,
            per_key={k: zero for k in ALL_KEYS},
            counts={"reports": 0, "truth_lesions": 0, "predicted_lesions": 0},
            flags=("empty_corpus",),
        )

    jsonable_count = 0
    em_count = 0
    cdm_count = 0
    numerators: dict[AttributeKey, int] = {k: 0 for k in ALL_KEYS}
    truth_total = 0
    pred_total = 0

    for pair in pairs:
        parsed = pair.prediction.parsed
        if parsed is not None:
            jsonable_count += 1
        pred = list(parsed) if parsed is not None else []
        truth = list(pair.truth)
        truth_total += len(truth)
        pred_total += len(pred)
        if em_match(pred, truth):
            em_count += 1
        if cdm_match(pred, truth):
            cdm_count += 1

        pred_sides = split_by_side(sort_lesions(pred))
        truth_sides = split_by_side(sort_lesions(truth))
        for side in ("left", "right", "na"):
            pred_side = pred_sides[side]
            truth_side = truth_sides[side]
            for key in ALL_KEYS:
                numerators[key] += count_match(pred_side, truth_side, key)

    if truth_total == 0:
        flags.append("degenerate_truth_denominator")
    if pred_total == 0:
        flags.append("degenerate_prediction_denominator")

    per_key: dict[AttributeKey, KeyMetrics] = {}
    for key in ALL_KEYS:
        recall = numerators[key] / truth_total if truth_total else 0.0
        precision = numerators[key] / pred_total if pred_total else 0.0
        per_key[key] = KeyMetrics(recall, precision, _f1(recall, precision))

    return EvalSummary(
        jsonable_acc=jsonable_count / n_reports,
        em_acc=em_count / n_reports,
        cdm_acc=cdm_count / n_reports,
        per_key=per_key,
        counts={
            "reports": n_reports,
            "truth_lesions": truth_total,
            "predicted_lesions": pred_total,
        },
        flags=tuple(flags),
    )


def per_key_metrics(pairs: Sequence[EvalPair]) -> dict[AttributeKey, KeyMetrics]:
    """Recall / precision / F1 per key over a corpus. The numerators come
    from side-split positional matching; both denominators are lesion
    counts, identical across keys."""
    return dict(evaluate_corpus(pairs).per_key)


def summary_to_mapping(summary: EvalSummary) -> dict:
    """JSON-friendly form of a summary."""
    return {
        "jsonable_acc": summary.jsonable_acc,
        "em_acc": summary.em_acc,
        "cdm_acc": summary.cdm_acc,
        "per_key": {
            key.value: {
                "recall": m.recall,
                "precision": m.precision,
                "f1": m.f1,
            }
            for key, m in summary.per_key.items()
        },
        "counts": dict(summary.counts),
        "flags": list(summary.flags),
    }


def format_metrics_report(summary: EvalSummary) -> str:
    """Plain-text report: one row per key plus an unweighted Average row,
    followed by the per-report accuracy block."""
    width = max(len(k.value) for k in ALL_KEYS)
    lines = [
        f"{'key':<{width}}  {'recall':>7}  {'precision':>9}  {'f1':>7}",
    ]
    for key in ALL_KEYS:
        m = summary.per_key[key]
        lines.append(
            f"{key.value:<{width}}  {m.recall:>7.3f}  {m.precision:>9.3f}  {m.f1:>7.3f}"
        )
    n_keys = len(ALL_KEYS)
    avg_r = sum(m.recall for m in summary.per_key.values()) / n_keys
    avg_p = sum(m.precision for m in summary.per_key.values()) / n_keys
    avg_f = sum(m.f1 for m in summary.per_key.values()) / n_keys
    lines.append(f"{'Average':<{width}}  {avg_r:>7.3f}  {avg_p:>9.3f}  {avg_f:>7.3f}")
    lines.append("")
    lines.append(f"JSONable  {summary.jsonable_acc:.3f}")
    lines.append(f"EM        {summary.em_acc:.3f}")
    lines.append(f"CDM       {summary.cdm_acc:.3f}")
    lines.append("")
    counts = summary.counts
    lines.append(
        f"reports={counts['reports']} truth_lesions={counts['truth_lesions']} "
        f"predicted_lesions={counts['predicted_lesions']}"
    )
    if summary.flags:
        lines.append("flags: " + ", ".join(summary.flags))
    return "\n".join(lines) + "\n"
