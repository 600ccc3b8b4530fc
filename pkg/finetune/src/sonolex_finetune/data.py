"""Loading the pipeline's instruction dataset files.

The interchange format is line-delimited JSON with fields
{id, instruction, input, output}; each record becomes a prompt/completion
pair under a fixed chat template. The template name is recorded in trained
adapter metadata so serving can prove it matches training.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

CHAT_TEMPLATE = "plain-instruct-v1"


class DatasetFormatError(ValueError):
    pass


@dataclass(frozen=True)
class TrainingExample:
    id: str
    prompt: str
    completion: str


def render_prompt(instruction: str, input_block: str) -> str:
    return f"{instruction}\n\n{input_block}\n\n"


def load_dataset(path: str | Path) -> list[TrainingExample]:
    """Parse a dataset file into training examples. Malformed lines raise
    with their line number; an empty dataset is an error."""
    examples: list[TrainingExample] = []
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetFormatError(f"{path}:{lineno}: malformed record: {exc}") from exc
            if not isinstance(record, dict):
                raise DatasetFormatError(f"{path}:{lineno}: record is not an object")
            missing = [k for k in ("id", "instruction", "input", "output") if k not in record]
            if missing:
                raise DatasetFormatError(
                    f"{path}:{lineno}: record missing fields: {', '.join(missing)}"
                )
            examples.append(
                TrainingExample(
                    id=str(record["id"]),
                    prompt=render_prompt(record["instruction"], record["input"]),
                    completion=record["output"],
                )
            )
    if not examples:
        raise DatasetFormatError(f"{path}: dataset is empty")
    return examples
