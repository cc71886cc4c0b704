"""Attention-based relation classifiers over pre-extracted tensor packs.

A tensor pack is a directory with an ``index.json`` and per-sentence raw
blobs. The index maps sentence ids to ``{n, d, special_mask, tok_e1,
tok_e2, files}`` where ``files`` lists ``<id>.L<layer>.attn`` (n x n) and
``<id>.L<layer>.emb`` (n x d) blobs, row-major float32 little-endian with
no header. A top-level ``manifest`` key, if present, is carried through
untouched.

Classification scores one entity pair per sentence from the normalized
elementwise product of the two entities' head-averaged attention vectors:
its maximum (most-important-token rule), the entities' attention onto the
argmax token (upraise rule), or its KL divergence from the uniform
distribution (contrast rule).
"""

from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import Corpus, Span
from .errors import PackFormatError, UsageError
from .metrics import Metrics, score as score_metrics

log = logging.getLogger(__name__)

ROW_SUM_TOL = 1e-4

METHODS = ("picmi", "picmi_up", "conex")

# threshold grids: (lo, hi, step)
DEFAULT_SWEEPS = {
    "picmi": (0.3, 0.7, 0.05),
    "picmi_up": (0.2, 0.6, 0.05),
    "conex": (0.05, 0.14, 0.01),
}

DEFAULT_LAYERS = (10, 11)


@dataclass(frozen=True)
class AttentionRecord:
    """Head-averaged attention matrix for one sentence and layer."""

    sentence_id: str
    layer: int
    A: np.ndarray  # (n, n) row-stochastic
    special_mask: np.ndarray  # (n,) bool, True = special/padding token
    tok_e1: Span
    tok_e2: Span

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def validate(self) -> None:
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise PackFormatError(f"{self.sentence_id!r} L{self.layer}: attention not square")
        if not np.all(np.isfinite(self.A)):
            raise PackFormatError(f"{self.sentence_id!r} L{self.layer}: non-finite attention value")
        sums = self.A.sum(axis=1)
        if np.max(np.abs(sums - 1.0)) > ROW_SUM_TOL:
            raise PackFormatError(
                f"{self.sentence_id!r} L{self.layer}: attention rows do not sum to 1"
            )
        for name, (s, e) in (("tok_e1", self.tok_e1), ("tok_e2", self.tok_e2)):
            if not (0 <= s <= e < n):
                raise PackFormatError(f"{self.sentence_id!r}: {name} span out of range")
            if self.special_mask[s : e + 1].any():
                raise PackFormatError(f"{self.sentence_id!r}: {name} overlaps special tokens")
        if self.tok_e1[0] <= self.tok_e2[1] and self.tok_e2[0] <= self.tok_e1[1]:
            raise PackFormatError(f"{self.sentence_id!r}: entity token spans overlap")


@dataclass(frozen=True)
class EmbeddingRecord:
    """Token-embedding matrix for one sentence and layer."""

    sentence_id: str
    layer: int
    H: np.ndarray  # (n, d)

    @property
    def n(self) -> int:
        return self.H.shape[0]

    @property
    def d(self) -> int:
        return self.H.shape[1]


@dataclass(frozen=True)
class ContextDistribution:
    """Per-token relevance weights for an entity pair; sums to one."""

    weights: np.ndarray
    degenerate: bool = False


class AttentionStore:
    """Lazy, validated access to a tensor pack by (sentence id, layer)."""

    def __init__(self, root: Path, index: dict, manifest: dict | None):
        self.root = root
        self.index = index
        self.manifest = manifest

    def ids(self) -> list[str]:
        return list(self.index.keys())

    def __contains__(self, sentence_id: str) -> bool:
        return sentence_id in self.index

    def _entry(self, sentence_id: str) -> dict:
        try:
            return self.index[sentence_id]
        except KeyError:
            raise PackFormatError(f"sentence {sentence_id!r} not in tensor pack") from None

    def _read_blob(self, name: str, rows: int, cols: int, what: str) -> np.ndarray:
        path = self.root / name
        if not path.is_file():
            raise PackFormatError(f"missing blob {name!r}")
        raw = path.read_bytes()
        expected = 4 * rows * cols
        if len(raw) != expected:
            raise PackFormatError(
                f"size mismatch for {name!r}: {len(raw)} bytes, index implies {expected}"
            )
        mat = np.frombuffer(raw, dtype="<f4").reshape(rows, cols).astype(np.float64)
        if not np.all(np.isfinite(mat)):
            raise PackFormatError(f"non-finite value in {what} blob {name!r}")
        return mat

    def attn_layers(self, sentence_id: str) -> list[int]:
        return sorted(int(k) for k in self._entry(sentence_id)["files"]["attn"])

    def emb_layers(self, sentence_id: str) -> list[int]:
        return sorted(int(k) for k in self._entry(sentence_id)["files"]["emb"])

    def attention(self, sentence_id: str, layer: int) -> AttentionRecord:
        entry = self._entry(sentence_id)
        files = entry["files"]["attn"]
        if str(layer) not in files:
            raise PackFormatError(f"no attention for {sentence_id!r} at layer {layer}")
        n = int(entry["n"])
        rec = AttentionRecord(
            sentence_id=sentence_id,
            layer=layer,
            A=self._read_blob(files[str(layer)], n, n, "attention"),
            special_mask=np.asarray(entry["special_mask"], dtype=bool),
            tok_e1=tuple(entry["tok_e1"]),
            tok_e2=tuple(entry["tok_e2"]),
        )
        rec.validate()
        return rec

    def embedding(self, sentence_id: str, layer: int) -> EmbeddingRecord:
        entry = self._entry(sentence_id)
        files = entry["files"]["emb"]
        if str(layer) not in files:
            raise PackFormatError(f"no embeddings for {sentence_id!r} at layer {layer}")
        n, d = int(entry["n"]), int(entry["d"])
        return EmbeddingRecord(
            sentence_id=sentence_id,
            layer=layer,
            H=self._read_blob(files[str(layer)], n, d, "embedding"),
        )

    def last_emb_layer(self) -> int:
        layers = {tuple(self.emb_layers(i)) for i in self.ids()}
        if len(layers) != 1:
            raise PackFormatError("inconsistent embedding layers across sentences")
        (common,) = layers
        if not common:
            raise PackFormatError("tensor pack carries no embeddings")
        return common[-1]


def load_attention_pack(directory: str | Path) -> AttentionStore:
    """Open a tensor-pack directory and validate its index."""
    root = Path(directory)
    index_path = root / "index.json"
    if not index_path.is_file():
        raise PackFormatError(f"no index.json in {root}")
    obj = json.loads(index_path.read_text(encoding="utf-8"))
    manifest = obj.get("manifest")
    sentences = obj["sentences"] if "sentences" in obj else {
        k: v for k, v in obj.items() if k != "manifest"
    }
    for sid, entry in sentences.items():
        for key in ("n", "special_mask", "tok_e1", "tok_e2", "files"):
            if key not in entry:
                raise PackFormatError(f"index entry {sid!r} lacks {key!r}")
        if len(entry["special_mask"]) != int(entry["n"]):
            raise PackFormatError(f"index entry {sid!r}: special_mask length != n")
    return AttentionStore(root, sentences, manifest)


def entity_attention(rec: AttentionRecord, span: Span, mask_special: bool = True) -> np.ndarray:
    """Mean of the attention rows of a token span, optionally renormalized
    over content tokens (special columns zeroed)."""
    start, end = span
    if not (0 <= start <= end < rec.n):
        raise UsageError(f"span ({start},{end}) invalid for {rec.n}-token record")
    vec = rec.A[start : end + 1].mean(axis=0)
    if mask_special:
        vec = np.where(rec.special_mask, 0.0, vec)
        total = vec.sum()
        if total <= 0.0:
            raise PackFormatError(
                f"{rec.sentence_id!r}: all attention mass on special tokens"
            )
        vec = vec / total
    return vec


def localized_context_distribution(a1: np.ndarray, a2: np.ndarray) -> ContextDistribution:
    """Normalized Hadamard product of two attention vectors.

    A zero inner product means the entities share no attention context; the
    uniform distribution over the joint support is returned with the
    degenerate flag set.
    """
    a1 = np.asarray(a1, dtype=np.float64)
    a2 = np.asarray(a2, dtype=np.float64)
    if a1.shape != a2.shape:
        raise UsageError("attention vectors differ in length")
    if (a1 < 0).any() or (a2 < 0).any():
        raise UsageError("attention vectors must be non-negative")
    denom = float(a1 @ a2)
    if denom == 0.0:
        support = (a1 > 0) | (a2 > 0)
        if not support.any():
            support = np.ones_like(a1, dtype=bool)
        weights = support / support.sum()
        return ContextDistribution(weights=weights, degenerate=True)
    return ContextDistribution(weights=(a1 * a2) / denom, degenerate=False)


def kl_divergence(p: np.ndarray, q: np.ndarray) -> float:
    """KL(p || q) in nats with the 0*ln(0/q) := 0 convention."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise UsageError("distributions differ in length")
    if abs(p.sum() - 1.0) > 1e-6 or abs(q.sum() - 1.0) > 1e-6:
        raise UsageError("inputs must sum to 1")
    support = p > 0
    if np.any(q[support] == 0.0):
        raise UsageError("infinite divergence: p has mass where q is zero")
    return float(np.sum(p[support] * np.log(p[support] / q[support])))


def context_distribution(rec: AttentionRecord, mask_special: bool = True) -> ContextDistribution:
    a1 = entity_attention(rec, rec.tok_e1, mask_special)
    a2 = entity_attention(rec, rec.tok_e2, mask_special)
    return localized_context_distribution(a1, a2)


def _uniform_reference(rec: AttentionRecord, mask_special: bool) -> np.ndarray:
    if mask_special:
        content = ~rec.special_mask
        return content / content.sum()
    return np.full(rec.n, 1.0 / rec.n)


def method_score(rec: AttentionRecord, method: str, mask_special: bool = True) -> tuple[float, bool]:
    """Per-sentence decision score for a method, plus a degeneracy flag.

    The prediction at threshold t is +1 iff the score is >= t and the
    localized context distribution is non-degenerate.
    """
    if method not in METHODS:
        raise UsageError(f"unknown method {method!r}")
    distr = context_distribution(rec, mask_special)
    if distr.degenerate:
        warnings.warn(f"degenerate context distribution for {rec.sentence_id!r}")
        if method == "conex":
            return 0.0, True
        return float(distr.weights.max()), True
    if method == "picmi":
        return float(distr.weights.max()), False
    if method == "picmi_up":
        top = int(np.argmax(distr.weights))  # ties -> lowest index
        a1 = entity_attention(rec, rec.tok_e1, mask_special)
        a2 = entity_attention(rec, rec.tok_e2, mask_special)
        return float((a1[top] + a2[top]) / 2.0), False
    return kl_divergence(distr.weights, _uniform_reference(rec, mask_special)), False


def picmi(rec: AttentionRecord, t: float, mask_special: bool = True) -> int:
    """+1 iff the most important context token reaches the threshold."""
    if not 0.0 < t <= 1.0:
        raise UsageError(f"threshold must be in (0,1], got {t}")
    value, degenerate = method_score(rec, "picmi", mask_special)
    return -1 if degenerate else (1 if value >= t else -1)


def picmi_up(rec: AttentionRecord, t: float, mask_special: bool = True) -> int:
    """+1 iff the entities' mean attention onto the argmax token reaches t."""
    if not 0.0 < t <= 1.0:
        raise UsageError(f"threshold must be in (0,1], got {t}")
    value, degenerate = method_score(rec, "picmi_up", mask_special)
    return -1 if degenerate else (1 if value >= t else -1)


def conex(rec: AttentionRecord, t: float, mask_special: bool = True) -> int:
    """+1 iff the context distribution diverges from uniform by at least t nats."""
    if t <= 0.0:
        raise UsageError(f"threshold must be positive, got {t}")
    value, degenerate = method_score(rec, "conex", mask_special)
    return -1 if degenerate else (1 if value >= t else -1)


def classify_pack(
    method: str,
    store: AttentionStore,
    ids: list[str],
    layer: int,
    threshold: float,
    mask_special: bool = True,
) -> dict[str, int]:
    """id -> predicted label over a list of sentence ids."""
    fn = {"picmi": picmi, "picmi_up": picmi_up, "conex": conex}[method]
    return {
        sid: fn(store.attention(sid, layer), threshold, mask_special) for sid in ids
    }


def threshold_grid(lo: float, hi: float, step: float) -> list[float]:
    if step <= 0 or hi < lo:
        raise UsageError(f"bad threshold range ({lo},{hi},{step})")
    count = int(round((hi - lo) / step))
    grid = [round(lo + i * step, 10) for i in range(count + 1)]
    return [t for t in grid if t <= hi + 1e-12]


@dataclass(frozen=True)
class SweepRow:
    threshold: float
    predicted_positive: int
    metrics: Metrics


def sweep_thresholds(
    method: str,
    corpus: Corpus,
    store: AttentionStore,
    layer: int,
    rng: tuple[float, float, float] | None = None,
    mask_special: bool = True,
    indices: list[int] | None = None,
) -> list[SweepRow]:
    """Evaluate a method over a threshold grid; one metrics row per value."""
    if method not in METHODS:
        raise UsageError(f"unknown method {method!r}")
    lo, hi, step = rng if rng is not None else DEFAULT_SWEEPS[method]
    idx = indices if indices is not None else list(range(len(corpus)))
    golds, scores, degenerate = {}, {}, {}
    for i in idx:
        rec = corpus[i]
        if rec.gold_label is None:
            raise UsageError(f"record {rec.id!r} has no gold label; sweep needs labels")
        if rec.id not in store:
            raise PackFormatError(f"missing tensor-pack record for {rec.id!r}")
        golds[rec.id] = rec.gold_label
        scores[rec.id], degenerate[rec.id] = method_score(
            store.attention(rec.id, layer), method, mask_special
        )
    rows = []
    for t in threshold_grid(lo, hi, step):
        preds = {
            sid: (1 if not degenerate[sid] and scores[sid] >= t else -1) for sid in golds
        }
        m = score_metrics(preds, golds)
        rows.append(SweepRow(threshold=t, predicted_positive=m.tp + m.fp, metrics=m))
    return rows


def entity_pair_feature(emb: EmbeddingRecord, e1: Span, e2: Span) -> np.ndarray:
    """Average-pooled entity embeddings, concatenated (length 2d)."""
    for s, e in (e1, e2):
        if not (0 <= s <= e < emb.n):
            raise UsageError(f"span ({s},{e}) invalid for {emb.n}-token record")
    h1 = emb.H[e1[0] : e1[1] + 1].mean(axis=0)
    h2 = emb.H[e2[0] : e2[1] + 1].mean(axis=0)
    return np.concatenate([h1, h2])


def pair_features_from_pack(
    store: AttentionStore, ids: list[str], layer: int | None = None
) -> dict[str, np.ndarray]:
    """Build one pair feature per sentence from pack embeddings.

    Entity spans come from the pack index (model-token space). When layer
    is None the pack's common final embedding layer is used.
    """
    layer = store.last_emb_layer() if layer is None else layer
    feats = {}
    for sid in ids:
        entry = store._entry(sid)
        emb = store.embedding(sid, layer)
        feats[sid] = entity_pair_feature(emb, tuple(entry["tok_e1"]), tuple(entry["tok_e2"]))
    return feats


def write_pack(
    directory: str | Path,
    sentences: dict[str, dict],
    manifest: dict | None = None,
) -> None:
    """Write a tensor pack: entries carry ``attn`` {layer: matrix} and
    ``emb`` {layer: matrix} plus ``special_mask``, ``tok_e1``, ``tok_e2``."""
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    index: dict[str, dict] = {}
    for sid, entry in sentences.items():
        attn = {int(k): np.asarray(v) for k, v in entry["attn"].items()}
        emb = {int(k): np.asarray(v) for k, v in entry.get("emb", {}).items()}
        n = next(iter(attn.values())).shape[0]
        d = next(iter(emb.values())).shape[1] if emb else 0
        files: dict[str, dict[str, str]] = {"attn": {}, "emb": {}}
        for layer, mat in sorted(attn.items()):
            name = f"{sid}.L{layer}.attn"
            (root / name).write_bytes(np.ascontiguousarray(mat, dtype="<f4").tobytes())
            files["attn"][str(layer)] = name
        for layer, mat in sorted(emb.items()):
            name = f"{sid}.L{layer}.emb"
            (root / name).write_bytes(np.ascontiguousarray(mat, dtype="<f4").tobytes())
            files["emb"][str(layer)] = name
        index[sid] = {
            "n": int(n),
            "d": int(d),
            "special_mask": [int(x) for x in entry["special_mask"]],
            "tok_e1": list(entry["tok_e1"]),
            "tok_e2": list(entry["tok_e2"]),
            "files": files,
        }
    payload: dict = {"sentences": index}
    if manifest is not None:
        payload["manifest"] = manifest
    (root / "index.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True), encoding="utf-8"
    )
