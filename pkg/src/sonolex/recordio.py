"""Line-delimited JSON record files and atomic writes.

Every on-disk artifact is UTF-8 JSONL with one object per line; writers
stage to a temp file in the target directory and rename into place.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path
from typing import Any, Iterable, Iterator


def dumps_record(obj: Any) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(", ", ": "))


def read_records(path: str | Path) -> Iterator[dict]:
    """Yield one object per non-empty line. Raises ValueError with the line
    number on malformed input."""
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: malformed record: {exc}") from exc
            if not isinstance(obj, dict):
                raise ValueError(f"{path}:{lineno}: record is not an object")
            yield obj


def write_text_atomic(path: str | Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_records(path: str | Path, records: Iterable[dict]) -> int:
    """Write records as JSONL atomically; returns the record count."""
    lines = [dumps_record(r) for r in records]
    write_text_atomic(path, "".join(line + "\n" for line in lines))
    return len(lines)
