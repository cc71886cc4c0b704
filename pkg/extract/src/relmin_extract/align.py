"""Word-span to model-token-span alignment.

Tokenizers that split words into subwords report, per model token, the
index of the word it came from (None for special tokens). An entity's
word span maps to the contiguous run of model tokens covering exactly
those words.
"""

from __future__ import annotations


class UnalignableEntity(ValueError):
    """Entity cannot be mapped into model-token space (e.g. truncated away)."""


def word_span_to_token_span(
    word_ids: list[int | None], span: tuple[int, int]
) -> tuple[int, int]:
    """Model-token span (inclusive) covering the given word span."""
    start, end = span
    positions = [
        i for i, wid in enumerate(word_ids) if wid is not None and start <= wid <= end
    ]
    if not positions:
        raise UnalignableEntity(f"no model tokens for word span ({start},{end})")
    lo, hi = positions[0], positions[-1]
    if positions != list(range(lo, hi + 1)):
        raise UnalignableEntity(f"word span ({start},{end}) maps to non-contiguous tokens")
    covered = {word_ids[i] for i in positions}
    if covered != set(range(start, end + 1)):
        raise UnalignableEntity(
            f"word span ({start},{end}) only partially present after tokenization"
        )
    return lo, hi
