"""Dependency-parse extraction to CoNLL-U.

The parsing backend is pluggable: any callable taking the sentence's
words and returning one (upos, head, deprel) triple per word, with heads
1-based and 0 marking the root. The default backend runs a spaCy
pipeline on pre-tokenized input so token counts always match the corpus.

Parsers occasionally split a fragment into several sentences, yielding
multiple roots; extra roots are re-attached to the first root so every
block stays a single tree.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Callable, Sequence

from .corpusio import Record

log = logging.getLogger(__name__)

ParseBackend = Callable[[Sequence[str]], list[tuple[str, int, str]]]


class ParseMismatch(ValueError):
    """Backend changed the token count of a pre-tokenized sentence."""


class SpacyBackend:
    """Runs a spaCy pipeline (e.g. a biomedical model) on given tokens."""

    def __init__(self, pipeline_name: str):
        import spacy

        self.nlp = spacy.load(pipeline_name)
        self.name = pipeline_name
        self.version = self.nlp.meta.get("version", "")

    def __call__(self, words: Sequence[str]) -> list[tuple[str, int, str]]:
        import spacy.tokens

        doc = spacy.tokens.Doc(self.nlp.vocab, words=list(words))
        doc = self.nlp(doc)
        if len(doc) != len(words):
            raise ParseMismatch(f"pipeline produced {len(doc)} tokens for {len(words)} words")
        rows = []
        for token in doc:
            head = 0 if token.head.i == token.i else token.head.i + 1
            rows.append((token.pos_, head, token.dep_))
        return rows


def _single_root(rows: list[tuple[str, int, str]], sentence_id: str) -> list[tuple[str, int, str]]:
    roots = [i for i, (_, head, _) in enumerate(rows) if head == 0]
    if not roots:
        raise ParseMismatch(f"sentence {sentence_id!r}: parser produced no root")
    if len(roots) == 1:
        return rows
    log.warning("sentence %r: %d roots, re-attaching extras", sentence_id, len(roots))
    first = roots[0]
    fixed = list(rows)
    for i in roots[1:]:
        upos, _, _ = fixed[i]
        fixed[i] = (upos, first + 1, "parataxis")
    return fixed


def extract_parses(
    records: list[Record], backend: ParseBackend, out_path: str | Path
) -> int:
    """Write one CoNLL-U block per record; returns the sentence count."""
    out_path = Path(out_path)
    blocks = []
    for rec in records:
        rows = backend(rec.tokens)
        if len(rows) != len(rec.tokens):
            raise ParseMismatch(
                f"sentence {rec.id!r}: backend returned {len(rows)} rows "
                f"for {len(rec.tokens)} tokens"
            )
        rows = _single_root(rows, rec.id)
        lines = [f"# sent_id = {rec.id}"]
        for i, (token, (upos, head, deprel)) in enumerate(zip(rec.tokens, rows)):
            lines.append(
                "\t".join(
                    [str(i + 1), token, "_", upos, "_", "_", str(head), deprel, "_", "_"]
                )
            )
        blocks.append("\n".join(lines))
    out_path.write_text("\n\n".join(blocks) + "\n", encoding="utf-8")
    return len(blocks)
