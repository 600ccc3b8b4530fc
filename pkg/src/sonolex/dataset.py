"""Instruction-tuning dataset construction and corpus splitting.

A dataset record pairs the fixed extraction instruction with one report's
sections and its serialized lesion-list label. Records with missing or
unparseable labels are skipped and counted, never repaired.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from . import recordio
from .normalizer import parse_model_output
from .prompts import finetune_instruction_text, render_input_block, serialize_records
from .schema import ReportDocument


class MissingLabelError(KeyError):
    pass


class InvalidRatiosError(ValueError):
    pass


@dataclass(frozen=True)
class DatasetRecord:
    id: str
    instruction: str
    input: str
    output: str
    source: str = "unknown"

    def to_mapping(self) -> dict:
        return {
            "id": self.id,
            "instruction": self.instruction,
            "input": self.input,
            "output": self.output,
            "source": self.source,
        }

    @classmethod
    def from_mapping(cls, obj: Mapping) -> "DatasetRecord":
        return cls(
            id=obj["id"],
            instruction=obj["instruction"],
            input=obj["input"],
            output=obj["output"],
            source=obj.get("source", "unknown"),
        )


@dataclass(frozen=True)
class BuildReport:
    records: tuple[DatasetRecord, ...]
    skipped: tuple[str, ...]  # diagnostics, one per skipped report


def build_dataset(
    reports: Sequence[ReportDocument],
    labels: Mapping[str, str],
    source: str,
) -> BuildReport:
    """Pair reports with their label texts. Labels must parse as lesion
    lists; the stored output is the canonical re-serialization."""
    instruction = finetune_instruction_text()
    records: list[DatasetRecord] = []
    skipped: list[str] = []
    for report in reports:
        label = labels.get(report.id)
        if label is None:
            skipped.append(f"{report.id}: missing label")
            continue
        parsed = parse_model_output(label)
        if parsed is None:
            skipped.append(f"{report.id}: label is not a valid lesion list")
            continue
        records.append(
            DatasetRecord(
                id=report.id,
                instruction=instruction,
                input=render_input_block(report),
                output=serialize_records(list(parsed), indent=None),
                source=source,
            )
        )
    return BuildReport(records=tuple(records), skipped=tuple(skipped))


def write_dataset(path: str | Path, records: Sequence[DatasetRecord]) -> int:
    return recordio.write_records(path, (r.to_mapping() for r in records))


def read_dataset(path: str | Path) -> list[DatasetRecord]:
    return [DatasetRecord.from_mapping(obj) for obj in recordio.read_records(path)]


DEFAULT_RATIOS = (0.90, 0.07, 0.03)


@dataclass(frozen=True)
class CorpusSplit:
    train: tuple[str, ...]
    validation: tuple[str, ...]
    test: tuple[str, ...]
    ratios: tuple[float, float, float] = DEFAULT_RATIOS
    seed: int = 0

    def to_mapping(self) -> dict:
        return {
            "seed": self.seed,
            "ratios": list(self.ratios),
            "train": list(self.train),
            "validation": list(self.validation),
            "test": list(self.test),
        }

    @classmethod
    def from_mapping(cls, obj: Mapping) -> "CorpusSplit":
        return cls(
            train=tuple(obj["train"]),
            validation=tuple(obj["validation"]),
            test=tuple(obj["test"]),
            ratios=tuple(obj["ratios"]),
            seed=obj["seed"],
        )


def split(
    ids: Sequence[str],
    ratios: tuple[float, float, float] = DEFAULT_RATIOS,
    seed: int = 0,
) -> CorpusSplit:
    """Deterministic disjoint train/validation/test split. Validation and
    test sizes are floored; the remainder goes to train."""
    if len(ratios) != 3 or any(r <= 0 for r in ratios):
        raise InvalidRatiosError(f"ratios must be three positive numbers: {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise InvalidRatiosError(f"ratios must sum to 1: {ratios}")

    shuffled = list(ids)
    random.Random(seed).shuffle(shuffled)
    n = len(shuffled)
    n_validation = int(n * ratios[1])
    n_test = int(n * ratios[2])
    n_train = n - n_validation - n_test
    return CorpusSplit(
        train=tuple(shuffled[:n_train]),
        validation=tuple(shuffled[n_train : n_train + n_validation]),
        test=tuple(shuffled[n_train + n_validation :]),
        ratios=tuple(ratios),
        seed=seed,
    )
