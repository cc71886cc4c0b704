"""Reader for the core's line-delimited corpus format.

Deliberately self-contained: the extractor talks to the core toolkit
only through files, so the record format is re-declared here.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path


class CorpusFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Record:
    id: str
    tokens: tuple[str, ...]
    e1: tuple[int, int]  # word-index span, end inclusive
    e2: tuple[int, int]
    label: int | None = None


def _span(obj, record_id, name) -> tuple[int, int]:
    try:
        start, end = int(obj["start"]), int(obj["end"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CorpusFormatError(f"record {record_id!r}: bad {name} span") from exc
    return start, end


def read_corpus(path: str | Path) -> list[Record]:
    records = []
    seen = set()
    with Path(path).open(encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"{path}:{lineno}: malformed line") from exc
            rid = str(obj["id"])
            if rid in seen:
                raise CorpusFormatError(f"{path}:{lineno}: duplicate id {rid!r}")
            seen.add(rid)
            tokens = tuple(str(t) for t in obj["tokens"])
            rec = Record(
                id=rid,
                tokens=tokens,
                e1=_span(obj["e1"], rid, "e1"),
                e2=_span(obj["e2"], rid, "e2"),
                label=int(obj["label"]) if obj.get("label") is not None else None,
            )
            for name, (s, e) in (("e1", rec.e1), ("e2", rec.e2)):
                if not 0 <= s <= e < len(tokens):
                    raise CorpusFormatError(f"{path}:{lineno}: {name} span out of bounds")
            records.append(rec)
    return records
