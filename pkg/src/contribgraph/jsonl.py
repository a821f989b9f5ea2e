"""JSONL read/write helpers.

Lines are UTF-8, one JSON object each, written in the dict's insertion
order (callers build dicts in the canonical key order, so files are
byte-reproducible).
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Iterable, Iterator


def dump_line(obj: dict[str, Any]) -> str:
    return json.dumps(obj, ensure_ascii=False)


def write_jsonl(path: str | Path, records: Iterable[dict[str, Any]]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as f:
        for record in records:
            f.write(dump_line(record) + "\n")


def append_jsonl(path: str | Path, record: dict[str, Any]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("a", encoding="utf-8") as f:
        f.write(dump_line(record) + "\n")


def read_jsonl(path: str | Path) -> Iterator[dict[str, Any]]:
    with Path(path).open("r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                yield json.loads(line)
