"""Pairwise-comparison data generation and pointwise set construction.

Ordered instance pairs are drawn i.i.d. uniformly with replacement and
kept unless the label pair is (-1, +1), i.e. the first element must not
be less likely positive than the second. Accepted pairs split into two
unlabeled pointwise sets: firsts form the noisy-positive set, seconds the
noisy-negative set. With class prior pi_plus the sets are mixtures whose
true-positive fractions are ``pi/(pi_minus^2 + pi)`` and
``pi^2/(pi^2 + pi_minus)`` respectively.

Labels may be gold (weakly supervised generation) or silver predictions
from an unsupervised method (fully unsupervised generation).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, UsageError

log = logging.getLogger(__name__)

PRIOR_GRID = (0.3, 0.4, 0.5, 0.6)


@dataclass(frozen=True)
class ComparisonPair:
    first: int  # instance with the higher positive likelihood
    second: int


@dataclass(frozen=True)
class PairStats:
    accepted: int
    drawn: int

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.drawn


@dataclass(frozen=True)
class PointwiseSets:
    """The two unlabeled sets obtained by splitting accepted pairs."""

    pos_set: tuple[int, ...]
    neg_set: tuple[int, ...]
    label_source: str  # "gold" or "silver:<method>"
    pi_plus: float

    def __post_init__(self) -> None:
        if len(self.pos_set) != len(self.neg_set):
            raise UsageError("pointwise sets must have equal sizes")

    @property
    def n_pairs(self) -> int:
        return len(self.pos_set)


def generate_pairs(
    labels: dict[int, int], n_pairs: int, seed: int
) -> tuple[list[ComparisonPair], PairStats]:
    """Rejection-sample ordered pairs until n_pairs are accepted."""
    if not labels:
        raise UsageError("empty label map")
    if n_pairs < 1:
        raise UsageError(f"n_pairs must be >= 1, got {n_pairs}")
    indices = np.fromiter(labels.keys(), dtype=np.int64, count=len(labels))
    values = np.fromiter((labels[int(i)] for i in indices), dtype=np.int64, count=len(indices))
    if not set(np.unique(values)).issubset({1, -1}):
        raise UsageError("labels must be +1/-1")
    rng = np.random.default_rng(seed)
    pairs: list[ComparisonPair] = []
    drawn = 0
    chunk = max(1024, 2 * n_pairs)
    while len(pairs) < n_pairs:
        first = rng.integers(0, len(indices), size=chunk)
        second = rng.integers(0, len(indices), size=chunk)
        rejected = (values[first] == -1) & (values[second] == 1)
        for f, s, bad in zip(first, second, rejected):
            drawn += 1
            if not bad:
                pairs.append(ComparisonPair(int(indices[f]), int(indices[s])))
                if len(pairs) == n_pairs:
                    break
    return pairs, PairStats(accepted=n_pairs, drawn=drawn)


def split_pointwise(
    pairs: list[ComparisonPair], label_source: str = "gold", pi_plus: float = 0.5
) -> PointwiseSets:
    """First elements form the noisy-positive set, seconds the noisy-negative."""
    if not pairs:
        raise UsageError("no pairs to split")
    return PointwiseSets(
        pos_set=tuple(p.first for p in pairs),
        neg_set=tuple(p.second for p in pairs),
        label_source=label_source,
        pi_plus=pi_plus,
    )


def mixture_weights(pi_plus: float) -> tuple[float, float]:
    """True-positive fractions of the noisy-positive and noisy-negative sets."""
    if not 0.0 < pi_plus < 1.0:
        raise UsageError(f"prior must be in (0,1), got {pi_plus}")
    pi_minus = 1.0 - pi_plus
    w_pos = pi_plus / (pi_minus**2 + pi_plus)
    w_neg = pi_plus**2 / (pi_plus**2 + pi_minus)
    return w_pos, w_neg


def estimate_prior_from_acceptance(accepted: int, drawn: int) -> tuple[float, float]:
    """Both prior roots consistent with an observed acceptance fraction.

    The acceptance fraction equals ``pi^2 + (1 - pi)``, so the prior solves
    ``pi^2 - pi + (1 - fraction) = 0``; which root applies requires outside
    knowledge of the dominant class.
    """
    if not 0 < accepted <= drawn:
        raise UsageError(f"need 0 < accepted <= drawn, got {accepted}/{drawn}")
    fraction = accepted / drawn
    discriminant = 4.0 * fraction - 3.0
    if discriminant < 0.0:
        raise DataError(
            f"acceptance fraction {fraction:.4f} < 0.75 is inconsistent with any prior"
        )
    half_width = math.sqrt(discriminant) / 2.0
    return 0.5 - half_width, 0.5 + half_width


def save_pairs(pairs: list[ComparisonPair], ids: list[str], path: str | Path) -> None:
    """Write ``<first_id>\\t<second_id>`` lines (indices mapped through ids)."""
    with Path(path).open("w", encoding="utf-8") as handle:
        for pair in pairs:
            handle.write(f"{ids[pair.first]}\t{ids[pair.second]}\n")


def load_pairs(path: str | Path, by_id: dict[str, int]) -> list[ComparisonPair]:
    pairs = []
    with Path(path).open(encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            try:
                first, second = line.split("\t")
                pairs.append(ComparisonPair(by_id[first], by_id[second]))
            except (ValueError, KeyError) as exc:
                raise DataError(f"{path}:{lineno}: bad pair line") from exc
    return pairs


def save_sets(sets: PointwiseSets, ids: list[str], path: str | Path) -> None:
    """Write ``<id>\\t{P|N}`` lines; ids may repeat across draws."""
    with Path(path).open("w", encoding="utf-8") as handle:
        for idx in sets.pos_set:
            handle.write(f"{ids[idx]}\tP\n")
        for idx in sets.neg_set:
            handle.write(f"{ids[idx]}\tN\n")


def stats_report(stats: PairStats) -> dict:
    """Acceptance statistics plus the implied prior roots (None if infeasible)."""
    try:
        roots: tuple[float, float] | None = estimate_prior_from_acceptance(
            stats.accepted, stats.drawn
        )
    except DataError:
        roots = None
    return {
        "accepted": stats.accepted,
        "drawn": stats.drawn,
        "acceptance_rate": stats.acceptance_rate,
        "prior_roots": list(roots) if roots is not None else None,
    }
