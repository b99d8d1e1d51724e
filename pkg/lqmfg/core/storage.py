from __future__ import annotations

import csv
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

import orjson
from pydantic import BaseModel


# ──────────────────────────────────────────────────────────────
# JSON documents
# ──────────────────────────────────────────────────────────────

_JSON_OPTS = orjson.OPT_INDENT_2 | orjson.OPT_SORT_KEYS | orjson.OPT_SERIALIZE_NUMPY


def dumps(doc: Any) -> bytes:
    if isinstance(doc, BaseModel):
        doc = doc.model_dump(mode="json")
    return orjson.dumps(doc, option=_JSON_OPTS) + b"\n"


def read_json(path: str) -> Any:
    return orjson.loads(Path(path).read_bytes())


def write_json(doc: Any, path: Optional[str]) -> bytes:
    """
    Serialize a document; write it to `path` when given (parents created).
    Returns the bytes so callers can echo them to stdout.
    """
    blob = dumps(doc)
    if path:
        p = Path(path)
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_bytes(blob)
    return blob


# ──────────────────────────────────────────────────────────────
# CSV tables
# ──────────────────────────────────────────────────────────────

def write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> int:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    n = 0
    with p.open("w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(list(header))
        for row in rows:
            w.writerow(["" if v is None else v for v in row])
            n += 1
    return n
