"""Tensor extraction: corpus -> attention/embedding pack.

Per sentence and configured layer the encoder's head-averaged attention
matrix is emitted alongside final-layer token embeddings, with entity
word-spans aligned into model-token space. Records whose entities cannot
be aligned (split across non-contiguous runs or lost to the length cap)
are skipped with a reason.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from .align import UnalignableEntity, word_span_to_token_span
from .corpusio import Record
from .encoder import HfEncoder, SentenceTooLong
from .packio import PackWriter

log = logging.getLogger(__name__)


@dataclass
class ExtractionSummary:
    written: list[str] = field(default_factory=list)
    skipped: dict[str, str] = field(default_factory=dict)


def extract_tensors(
    records: list[Record],
    encoder: HfEncoder,
    layers: list[int],
    out_dir,
    manifest: dict | None = None,
) -> ExtractionSummary:
    writer = PackWriter(out_dir, manifest=manifest)
    summary = ExtractionSummary()
    for rec in records:
        try:
            encoded = encoder.encode(list(rec.tokens), attn_layers=list(layers))
        except SentenceTooLong as exc:
            log.warning("skipping %s: %s", rec.id, exc)
            summary.skipped[rec.id] = f"too long: {exc}"
            continue
        try:
            tok_e1 = word_span_to_token_span(list(encoded.word_ids), rec.e1)
            tok_e2 = word_span_to_token_span(list(encoded.word_ids), rec.e2)
        except UnalignableEntity as exc:
            log.warning("skipping %s: %s", rec.id, exc)
            summary.skipped[rec.id] = f"unalignable entity: {exc}"
            continue
        if tok_e1[0] <= tok_e2[1] and tok_e2[0] <= tok_e1[1]:
            summary.skipped[rec.id] = "entity token spans overlap"
            continue
        writer.add_sentence(
            rec.id,
            attentions=encoded.attentions,
            embeddings=encoded.embeddings,
            special_mask=encoded.special_mask,
            tok_e1=tok_e1,
            tok_e2=tok_e2,
        )
        summary.written.append(rec.id)
    writer.finish()
    log.info("wrote %d sentence(s), skipped %d", len(summary.written), len(summary.skipped))
    return summary
