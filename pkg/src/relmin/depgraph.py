"""Dependency trees, shortest dependency paths, and the SDP relation rule.

Parses arrive as CoNLL-U (columns used: ID, FORM, UPOS, HEAD, DEPREL;
sentence ids from ``# sent_id = <id>`` comments; HEAD 0 marks the root).
Heads are stored 0-based internally with ``ROOT = -1``.

The relation rule combines one of three path assumptions with one of two
heuristics:

* assumption 1 - the root token is a verb and lies on the path,
* assumption 2 - the root token lies on the path,
* assumption 3 - some path token is a verb,

and predicts "no relation" only when the assumption fails and neither
entity links directly into the other; heuristic 2 additionally rejects
paths whose interior contains a conjunction.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass
from pathlib import Path

from .corpus import Corpus, Span
from .errors import ParseFormatError, UsageError

log = logging.getLogger(__name__)

ROOT = -1

VERB_TAG = "VERB"
CONJUNCTION_TAGS = frozenset({"CCONJ", "SCONJ"})
CONJ_DEPREL = "conj"


@dataclass(frozen=True)
class DepTree:
    """Single-rooted dependency tree aligned to a sentence's tokens."""

    sentence_id: str
    upos: tuple[str, ...]
    heads: tuple[int, ...]  # 0-based head index, ROOT (-1) for the root token
    deprels: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.heads)

    @property
    def root(self) -> int:
        return self.heads.index(ROOT)

    def validate(self) -> None:
        n = len(self.heads)
        if not (len(self.upos) == len(self.deprels) == n) or n == 0:
            raise ParseFormatError(f"sentence {self.sentence_id!r}: inconsistent column lengths")
        roots = [i for i, h in enumerate(self.heads) if h == ROOT]
        if len(roots) != 1:
            raise ParseFormatError(
                f"sentence {self.sentence_id!r}: expected exactly one root, found {len(roots)}"
            )
        for i, h in enumerate(self.heads):
            if h != ROOT and not 0 <= h < n:
                raise ParseFormatError(
                    f"sentence {self.sentence_id!r}: head of token {i} out of range"
                )
        # every node must reach the root without revisiting a node
        for start in range(n):
            seen = set()
            node = start
            while node != ROOT:
                if node in seen:
                    raise ParseFormatError(f"sentence {self.sentence_id!r}: cyclic head links")
                seen.add(node)
                node = self.heads[node]

    def adjacency(self) -> list[list[int]]:
        """Undirected neighbor lists over head arcs."""
        neighbors: list[list[int]] = [[] for _ in range(len(self))]
        for child, head in enumerate(self.heads):
            if head != ROOT:
                neighbors[child].append(head)
                neighbors[head].append(child)
        return neighbors


@dataclass(frozen=True)
class SdpResult:
    """Shortest dependency path between the two entity anchors."""

    path: tuple[int, ...]
    deprels: tuple[str, ...]  # deprel of each path token's arc to its head
    upos_seq: tuple[str, ...]

    def interior(self) -> tuple[int, ...]:
        return self.path[1:-1]


@dataclass(frozen=True)
class SardConfig:
    a_id: int = 3
    h_id: int = 1
    conj_mode: str = "upos"  # "upos" flags CCONJ/SCONJ tags, "deprel" flags the conj relation

    def __post_init__(self) -> None:
        if self.a_id not in (1, 2, 3):
            raise UsageError(f"assumption id must be 1, 2 or 3, got {self.a_id}")
        if self.h_id not in (1, 2):
            raise UsageError(f"heuristic id must be 1 or 2, got {self.h_id}")
        if self.conj_mode not in ("upos", "deprel"):
            raise UsageError(f"conj_mode must be 'upos' or 'deprel', got {self.conj_mode!r}")


def load_conllu(path: str | Path, corpus: Corpus | None = None) -> dict[str, DepTree]:
    """Parse a CoNLL-U file into validated trees keyed by sentence id.

    Multiword-token (``1-2``) and empty-node (``1.1``) lines are skipped.
    When a corpus is given, token counts are cross-checked per sentence.
    """
    path = Path(path)
    trees: dict[str, DepTree] = {}
    sent_id: str | None = None
    upos: list[str] = []
    heads: list[int] = []
    deprels: list[str] = []

    def flush(lineno: int) -> None:
        nonlocal sent_id, upos, heads, deprels
        if not heads:
            sent_id = None
            return
        if sent_id is None:
            raise ParseFormatError(f"{path}:{lineno}: sentence without a '# sent_id' comment")
        if sent_id in trees:
            raise ParseFormatError(f"{path}:{lineno}: duplicate sentence id {sent_id!r}")
        tree = DepTree(sent_id, tuple(upos), tuple(heads), tuple(deprels))
        try:
            tree.validate()
        except ParseFormatError as exc:
            raise ParseFormatError(f"{path}: {exc}") from exc
        if corpus is not None and sent_id in corpus.by_id:
            expected = len(corpus.get(sent_id).tokens)
            if expected != len(tree):
                raise ParseFormatError(
                    f"{path}: sentence {sent_id!r} has {len(tree)} tokens, corpus has {expected}"
                )
        trees[sent_id] = tree
        sent_id, upos, heads, deprels = None, [], [], []

    with path.open(encoding="utf-8") as handle:
        lineno = 0
        for lineno, line in enumerate(handle, start=1):
            line = line.rstrip("\n")
            if not line:
                flush(lineno)
                continue
            if line.startswith("#"):
                if line[1:].lstrip().startswith("sent_id"):
                    _, _, value = line.partition("=")
                    sent_id = value.strip()
                continue
            cols = line.split("\t")
            if len(cols) != 10:
                raise ParseFormatError(f"{path}:{lineno}: expected 10 columns, got {len(cols)}")
            if "-" in cols[0] or "." in cols[0]:
                continue  # multiword token / empty node
            try:
                token_id = int(cols[0])
                head = int(cols[6])
            except ValueError as exc:
                raise ParseFormatError(f"{path}:{lineno}: non-integer ID/HEAD") from exc
            if token_id != len(heads) + 1:
                raise ParseFormatError(f"{path}:{lineno}: token ids not consecutive")
            upos.append(cols[3])
            heads.append(head - 1 if head > 0 else ROOT)
            deprels.append(cols[7])
        flush(lineno + 1)
    return trees


def entity_anchor(tree: DepTree, span: Span) -> int:
    """Syntactic head of a token span: the leftmost token whose head
    falls outside the span (the root's ROOT marker counts as outside)."""
    start, end = span
    if not (0 <= start <= end < len(tree)):
        raise UsageError(f"span ({start},{end}) invalid for {len(tree)}-token sentence")
    for i in range(start, end + 1):
        head = tree.heads[i]
        if head == ROOT or not start <= head <= end:
            return i
    raise ParseFormatError(
        f"sentence {tree.sentence_id!r}: no anchor in span ({start},{end}); malformed span"
    )


def shortest_dependency_path(tree: DepTree, e1: Span, e2: Span) -> SdpResult:
    """Unique path between the entity anchors in the undirected tree."""
    a, b = entity_anchor(tree, e1), entity_anchor(tree, e2)
    if a == b:
        raise UsageError(f"sentence {tree.sentence_id!r}: entities share anchor token {a}")
    neighbors = tree.adjacency()
    parent: dict[int, int] = {a: a}
    queue = deque([a])
    while queue:
        node = queue.popleft()
        if node == b:
            break
        for nxt in neighbors[node]:
            if nxt not in parent:
                parent[nxt] = node
                queue.append(nxt)
    if b not in parent:
        raise ParseFormatError(f"sentence {tree.sentence_id!r}: anchors not connected")
    path = [b]
    while path[-1] != a:
        path.append(parent[path[-1]])
    path.reverse()
    return SdpResult(
        path=tuple(path),
        deprels=tuple(tree.deprels[i] for i in path),
        upos_seq=tuple(tree.upos[i] for i in path),
    )


def check_direct_link(tree: DepTree, e1: Span, e2: Span) -> bool:
    """True iff some token of one span has its head inside the other span."""

    def links_into(src: Span, dst: Span) -> bool:
        return any(
            tree.heads[i] != ROOT and dst[0] <= tree.heads[i] <= dst[1]
            for i in range(src[0], src[1] + 1)
        )

    return links_into(e1, e2) or links_into(e2, e1)


def check_assumption(a_id: int, sdp: SdpResult, tree: DepTree) -> bool:
    root = tree.root
    if a_id == 1:
        return root in sdp.path and tree.upos[root] == VERB_TAG
    if a_id == 2:
        return root in sdp.path
    if a_id == 3:
        return any(tag == VERB_TAG for tag in sdp.upos_seq)
    raise UsageError(f"unknown assumption id {a_id}")


def _conjunction_on_path(sdp: SdpResult, tree: DepTree, conj_mode: str) -> bool:
    # endpoint tokens are the entities themselves; only the interior counts
    for i in sdp.interior():
        if conj_mode == "upos":
            if tree.upos[i] in CONJUNCTION_TAGS:
                return True
        elif tree.deprels[i] == CONJ_DEPREL:
            return True
    return False


def sard_predict(tree: DepTree, e1: Span, e2: Span, cfg: SardConfig) -> int:
    """Label an entity pair from its dependency path: +1 relation, -1 none."""
    sdp = shortest_dependency_path(tree, e1, e2)
    direct = check_direct_link(tree, e1, e2)
    holds = check_assumption(cfg.a_id, sdp, tree)
    if not holds and not direct:
        return -1
    if cfg.h_id == 1:
        return 1
    return -1 if _conjunction_on_path(sdp, tree, cfg.conj_mode) else 1


def sard_predict_corpus(
    corpus: Corpus,
    trees: dict[str, DepTree],
    cfg: SardConfig,
    indices: list[int] | None = None,
) -> dict[str, int]:
    """Run the rule over (a subset of) a corpus; returns id -> label."""
    preds: dict[str, int] = {}
    for i in indices if indices is not None else range(len(corpus)):
        rec = corpus[i]
        if rec.id not in trees:
            raise ParseFormatError(f"no parse for sentence {rec.id!r}")
        preds[rec.id] = sard_predict(trees[rec.id], rec.e1, rec.e2, cfg)
    return preds
