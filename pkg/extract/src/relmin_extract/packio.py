"""Tensor-pack writer.

Pack layout (the core toolkit's consumption format): a directory with
``index.json`` plus raw row-major float32 little-endian blobs named
``<id>.L<layer>.attn`` (n x n) and ``<id>.L<layer>.emb`` (n x d). The
index carries per-sentence metadata and, under ``manifest``, extraction
provenance.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np


class PackWriter:
    def __init__(self, directory: str | Path, manifest: dict | None = None):
        self.root = Path(directory)
        self.root.mkdir(parents=True, exist_ok=True)
        self.manifest = manifest
        self.index: dict[str, dict] = {}

    def add_sentence(
        self,
        sentence_id: str,
        attentions: dict[int, np.ndarray],
        embeddings: dict[int, np.ndarray],
        special_mask,
        tok_e1: tuple[int, int],
        tok_e2: tuple[int, int],
    ) -> None:
        if sentence_id in self.index:
            raise ValueError(f"duplicate sentence {sentence_id!r}")
        n = next(iter(attentions.values())).shape[0]
        d = next(iter(embeddings.values())).shape[1] if embeddings else 0
        files: dict[str, dict[str, str]] = {"attn": {}, "emb": {}}
        for layer, mat in sorted(attentions.items()):
            if mat.shape != (n, n):
                raise ValueError(f"{sentence_id!r}: attention layer {layer} not {n}x{n}")
            name = f"{sentence_id}.L{layer}.attn"
            (self.root / name).write_bytes(np.ascontiguousarray(mat, dtype="<f4").tobytes())
            files["attn"][str(layer)] = name
        for layer, mat in sorted(embeddings.items()):
            if mat.shape[0] != n:
                raise ValueError(f"{sentence_id!r}: embedding layer {layer} row mismatch")
            name = f"{sentence_id}.L{layer}.emb"
            (self.root / name).write_bytes(np.ascontiguousarray(mat, dtype="<f4").tobytes())
            files["emb"][str(layer)] = name
        self.index[sentence_id] = {
            "n": int(n),
            "d": int(d),
            "special_mask": [int(x) for x in special_mask],
            "tok_e1": [int(tok_e1[0]), int(tok_e1[1])],
            "tok_e2": [int(tok_e2[0]), int(tok_e2[1])],
            "files": files,
        }

    def finish(self) -> Path:
        payload: dict = {"sentences": self.index}
        if self.manifest is not None:
            payload["manifest"] = self.manifest
        path = self.root / "index.json"
        path.write_text(json.dumps(payload, indent=2, sort_keys=True), encoding="utf-8")
        return path
