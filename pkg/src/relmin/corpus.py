"""Sentence corpora: loading, validation, folds, and class priors.

Corpus files are UTF-8 line-delimited JSON records::

    {"id": "s1", "tokens": ["Aspirin", "inhibits", "COX1"],
     "e1": {"start": 0, "end": 0}, "e2": {"start": 2, "end": 2}, "label": 1}

Spans are token-index based and end-inclusive. ``label`` is optional and,
when present, must be +1 or -1. Fold files are ``<id>\\t<fold>`` lines.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CorpusFormatError, UsageError

log = logging.getLogger(__name__)

Span = tuple[int, int]


@dataclass(frozen=True)
class SentenceRecord:
    """One sentence with two entity token-spans and an optional gold label."""

    id: str
    tokens: tuple[str, ...]
    e1: Span
    e2: Span
    gold_label: int | None = None

    def validate(self) -> None:
        n = len(self.tokens)
        if n == 0:
            raise CorpusFormatError(f"record {self.id!r}: empty token list")
        for name, (start, end) in (("e1", self.e1), ("e2", self.e2)):
            if not (0 <= start <= end < n):
                raise CorpusFormatError(
                    f"record {self.id!r}: span out of bounds ({name}=({start},{end}), {n} tokens)"
                )
        if self.spans_overlap():
            raise CorpusFormatError(
                f"record {self.id!r}: overlapping entity spans e1={self.e1} e2={self.e2}"
            )
        if self.gold_label is not None and self.gold_label not in (1, -1):
            raise CorpusFormatError(
                f"record {self.id!r}: label must be +1 or -1, got {self.gold_label}"
            )

    def spans_overlap(self) -> bool:
        (a0, a1), (b0, b1) = self.e1, self.e2
        return a0 <= b1 and b0 <= a1


@dataclass
class Corpus:
    """Ordered collection of validated records, indexable by id."""

    records: list[SentenceRecord]
    by_id: dict[str, int] = field(init=False)

    def __post_init__(self) -> None:
        self.by_id = {}
        for i, rec in enumerate(self.records):
            if rec.id in self.by_id:
                raise CorpusFormatError(f"duplicate id {rec.id!r}")
            self.by_id[rec.id] = i

    def __len__(self) -> int:
        return len(self.records)

    def __getitem__(self, index: int) -> SentenceRecord:
        return self.records[index]

    def get(self, record_id: str) -> SentenceRecord:
        return self.records[self.by_id[record_id]]

    def ids(self) -> list[str]:
        return [rec.id for rec in self.records]

    def labels(self) -> dict[int, int]:
        """index -> gold label; raises if any record is unlabeled."""
        out = {}
        for i, rec in enumerate(self.records):
            if rec.gold_label is None:
                raise UsageError(f"record {rec.id!r} has no gold label")
            out[i] = rec.gold_label
        return out


@dataclass(frozen=True)
class FoldPlan:
    """Assignment of every record index to one of k folds."""

    k: int
    seed: int
    assignment: tuple[int, ...]

    def fold_indices(self, fold: int) -> list[int]:
        return [i for i, f in enumerate(self.assignment) if f == fold]

    def train_test(self, fold: int) -> tuple[list[int], list[int]]:
        test = self.fold_indices(fold)
        train = [i for i, f in enumerate(self.assignment) if f != fold]
        return train, test


def _parse_span(obj, record_id: str, name: str) -> Span:
    try:
        start, end = int(obj["start"]), int(obj["end"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CorpusFormatError(f"record {record_id!r}: bad {name} span: {obj!r}") from exc
    return (start, end)


def _parse_record(obj: dict) -> SentenceRecord:
    try:
        record_id = str(obj["id"])
        tokens = tuple(str(t) for t in obj["tokens"])
    except (KeyError, TypeError) as exc:
        raise CorpusFormatError(f"missing id/tokens in record: {obj!r}") from exc
    label = obj.get("label")
    return SentenceRecord(
        id=record_id,
        tokens=tokens,
        e1=_parse_span(obj["e1"], record_id, "e1") if "e1" in obj else (0, -1),
        e2=_parse_span(obj["e2"], record_id, "e2") if "e2" in obj else (0, -1),
        gold_label=None if label is None else int(label),
    )


def load_corpus(path: str | Path, strict: bool = True) -> Corpus:
    """Load and validate a line-delimited corpus file.

    In strict mode any invalid record raises. In lenient mode records with
    overlapping entity spans are skipped (with a logged count); all other
    violations still raise.
    """
    path = Path(path)
    records: list[SentenceRecord] = []
    skipped = 0
    with path.open(encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"{path}:{lineno}: malformed line: {exc}") from exc
            rec = _parse_record(obj)
            if rec.spans_overlap() and not strict:
                skipped += 1
                continue
            try:
                rec.validate()
            except CorpusFormatError as exc:
                raise CorpusFormatError(f"{path}:{lineno}: {exc}") from exc
            records.append(rec)
    if skipped:
        log.info("skipped %d record(s) with overlapping entity spans", skipped)
    return Corpus(records)


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    """Serialize a corpus back to the line-delimited format (round-trips)."""
    with Path(path).open("w", encoding="utf-8") as handle:
        for rec in corpus.records:
            obj: dict = {
                "id": rec.id,
                "tokens": list(rec.tokens),
                "e1": {"start": rec.e1[0], "end": rec.e1[1]},
                "e2": {"start": rec.e2[0], "end": rec.e2[1]},
            }
            if rec.gold_label is not None:
                obj["label"] = rec.gold_label
            handle.write(json.dumps(obj, ensure_ascii=False) + "\n")


def make_folds(corpus: Corpus, k: int, seed: int) -> FoldPlan:
    """Balanced k-fold assignment, deterministic in (corpus order, k, seed)."""
    n = len(corpus)
    if k < 2:
        raise UsageError(f"fold count must be >= 2, got {k}")
    if n < k:
        raise UsageError(f"cannot split {n} records into {k} folds")
    order = np.random.default_rng(seed).permutation(n)
    assignment = [0] * n
    for pos, idx in enumerate(order):
        assignment[int(idx)] = pos % k
    return FoldPlan(k=k, seed=seed, assignment=tuple(assignment))


def load_folds(path: str | Path, corpus: Corpus) -> FoldPlan:
    """Read an explicit ``<id>\\t<fold>`` assignment file (official splits)."""
    path = Path(path)
    by_id: dict[str, int] = {}
    with path.open(encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise CorpusFormatError(f"{path}:{lineno}: expected '<id>\\t<fold>'")
            record_id, fold = parts[0], int(parts[1])
            if record_id in by_id:
                raise CorpusFormatError(f"{path}:{lineno}: duplicate id {record_id!r}")
            by_id[record_id] = fold
    missing = [rid for rid in corpus.ids() if rid not in by_id]
    if missing:
        raise CorpusFormatError(f"fold file misses {len(missing)} corpus id(s), e.g. {missing[0]!r}")
    assignment = tuple(by_id[rec.id] for rec in corpus.records)
    k = max(assignment) + 1
    if k < 2:
        raise CorpusFormatError("fold file defines fewer than 2 folds")
    return FoldPlan(k=k, seed=-1, assignment=assignment)


def split_train_dev(
    records: list[int], fraction: float, seed: int
) -> tuple[list[int], list[int]]:
    """Split indices into (train, dev) with |dev| = round-half-up(fraction*n)."""
    if not 0.0 < fraction < 1.0:
        raise UsageError(f"dev fraction must be in (0,1), got {fraction}")
    n = len(records)
    n_dev = int(np.floor(fraction * n + 0.5))
    if n_dev == 0:
        raise UsageError(f"dev split of {n} records at fraction {fraction} would be empty")
    if n_dev == n:
        raise UsageError("dev split would consume every record")
    order = np.random.default_rng(seed).permutation(n)
    dev = [records[int(i)] for i in order[:n_dev]]
    train = [records[int(i)] for i in order[n_dev:]]
    return train, dev


def empirical_prior(corpus: Corpus) -> float:
    """Fraction of +1 gold labels; requires a fully labeled corpus."""
    labels = corpus.labels()
    if not labels:
        raise UsageError("empty corpus has no prior")
    return sum(1 for y in labels.values() if y == 1) / len(labels)
