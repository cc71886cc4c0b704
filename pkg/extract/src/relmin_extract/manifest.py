"""Provenance manifest recorded verbatim in every emitted artifact."""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass, field
from pathlib import Path

DEFAULT_ENCODER = "microsoft/BiomedNLP-PubMedBERT-base-uncased-abstract"
DEFAULT_PARSER = "en_core_sci_scibert"
DEFAULT_LAYERS = (10, 11)
DEFAULT_MAX_LENGTH = 512


@dataclass(frozen=True)
class ExtractionManifest:
    encoder: str = DEFAULT_ENCODER
    encoder_revision: str = "base"
    parser: str = DEFAULT_PARSER
    parser_version: str = ""
    layers: tuple[int, ...] = DEFAULT_LAYERS
    max_length: int = DEFAULT_MAX_LENGTH
    corpus_sha256: str = ""

    def validate(self) -> None:
        if not self.encoder:
            raise ValueError("manifest needs an encoder name")
        if not self.layers:
            raise ValueError("manifest needs at least one layer")
        if self.max_length < 8:
            raise ValueError(f"implausible max length {self.max_length}")

    def as_dict(self) -> dict:
        out = asdict(self)
        out["layers"] = list(self.layers)
        return out


def corpus_checksum(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
