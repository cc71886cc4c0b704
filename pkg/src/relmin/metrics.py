"""Precision/recall/F1 scoring, cross-validation aggregation, reports."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable

from .errors import UsageError


@dataclass(frozen=True)
class Metrics:
    tp: int
    fp: int
    fn: int
    tn: int
    precision: float
    recall: float
    f1: float

    def as_dict(self) -> dict:
        return {
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "tn": self.tn,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
        }


def from_counts(tp: int, fp: int, fn: int, tn: int) -> Metrics:
    """Derive precision/recall/F1 with the zero-denominator-is-zero rule."""
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return Metrics(tp=tp, fp=fp, fn=fn, tn=tn, precision=precision, recall=recall, f1=f1)


def score(preds: dict[str, int], golds: dict[str, int]) -> Metrics:
    """Score +1/-1 predictions against gold labels over identical id sets."""
    if set(preds) != set(golds):
        missing = set(golds) ^ set(preds)
        raise UsageError(f"prediction/gold id mismatch ({len(missing)} ids differ)")
    tp = fp = fn = tn = 0
    for key, pred in preds.items():
        gold = golds[key]
        if pred == 1 and gold == 1:
            tp += 1
        elif pred == 1:
            fp += 1
        elif gold == 1:
            fn += 1
        else:
            tn += 1
    return from_counts(tp, fp, fn, tn)


@dataclass(frozen=True)
class CrossValidation:
    """Per-fold metrics plus the unweighted fold mean (the headline number).

    ``pooled`` scores the union of fold predictions via summed counts; it
    generally differs from the fold mean and is reported alongside it.
    """

    per_fold: tuple[Metrics, ...]
    mean: Metrics
    pooled: Metrics


def _mean_of_folds(folds: Iterable[Metrics]) -> Metrics:
    folds = list(folds)
    k = len(folds)
    return Metrics(
        tp=sum(m.tp for m in folds),
        fp=sum(m.fp for m in folds),
        fn=sum(m.fn for m in folds),
        tn=sum(m.tn for m in folds),
        precision=sum(m.precision for m in folds) / k,
        recall=sum(m.recall for m in folds) / k,
        f1=sum(m.f1 for m in folds) / k,
    )


def cross_validate(plan, runner: Callable[[int, list[int], list[int]], Metrics]) -> CrossValidation:
    """Run a per-fold procedure over a fold plan and aggregate.

    The runner receives (fold id, train indices, test indices) and returns
    the fold's Metrics on its test split.
    """
    per_fold = []
    for fold in range(plan.k):
        train, test = plan.train_test(fold)
        if not test:
            raise UsageError(f"fold {fold} has no test instances")
        per_fold.append(runner(fold, train, test))
    pooled = from_counts(
        tp=sum(m.tp for m in per_fold),
        fp=sum(m.fp for m in per_fold),
        fn=sum(m.fn for m in per_fold),
        tn=sum(m.tn for m in per_fold),
    )
    return CrossValidation(
        per_fold=tuple(per_fold), mean=_mean_of_folds(per_fold), pooled=pooled
    )


_CONFIG_FIELDS = ("method", "layer", "threshold", "pi_plus", "seed")


def metrics_object(metrics: Metrics, config: dict | None = None) -> dict:
    """Metrics plus a config echo, in stable field order."""
    config = config or {}
    out = {key: config.get(key) for key in _CONFIG_FIELDS}
    out.update(metrics.as_dict())
    for key, value in config.items():
        if key not in out:
            out[key] = value
    return out


def emit_report(results: list[dict], out_dir: str | Path, sweep: list | None = None) -> list[Path]:
    """Write machine-readable reports; byte-identical across reruns.

    ``results`` is a list of metrics objects (see ``metrics_object``);
    ``sweep``, when given, is a list of SweepRow-like objects written as a
    flat CSV table sorted by threshold.
    """
    if not results and not sweep:
        raise UsageError("nothing to report")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    if results:
        path = out_dir / "metrics.json"
        path.write_text(json.dumps(results, indent=2) + "\n", encoding="utf-8")
        written.append(path)
    if sweep:
        path = out_dir / "sweep.csv"
        with path.open("w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(
                ["threshold", "predicted_positive", "tp", "fp", "fn", "tn",
                 "precision", "recall", "f1"]
            )
            for row in sorted(sweep, key=lambda r: r.threshold):
                m = row.metrics
                writer.writerow(
                    [row.threshold, row.predicted_positive, m.tp, m.fp, m.fn, m.tn,
                     f"{m.precision:.6f}", f"{m.recall:.6f}", f"{m.f1:.6f}"]
                )
        written.append(path)
    return written


def load_predictions(path: str | Path) -> dict[str, int]:
    """Read a ``<id>\\t<label>`` predictions file."""
    preds = {}
    with Path(path).open(encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            try:
                record_id, label = line.split("\t")
                preds[record_id] = int(label)
            except ValueError as exc:
                raise UsageError(f"{path}:{lineno}: expected '<id>\\t<label>'") from exc
            if preds[record_id] not in (1, -1):
                raise UsageError(f"{path}:{lineno}: label must be +1 or -1")
    return preds


def save_predictions(preds: dict[str, int], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as handle:
        for record_id in preds:
            handle.write(f"{record_id}\t{preds[record_id]:+d}\n")
