"""Training loop for the linear head over frozen pair features.

Minimizes the configured risk estimator with Adam (constant learning
rate), selecting the epoch snapshot that optimizes the dev criterion:
minimum dev risk for the unbiased/corrected estimators, maximum dev F1
against the noisy set-membership labels for the pruning-based methods.
Everything is deterministic given the estimator seed.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..corpus import split_train_dev
from ..errors import TrainingError, UsageError
from ..metrics import from_counts
from ..pairgen import PointwiseSets
from .head import Adam, LinearHead, batch_backward, batch_forward_infer, batch_forward_train, dropout_mask
from .losses import (
    EstimatorConfig,
    NoiseRates,
    batch_objective,
    noise_rates_from_prior,
    sigmoid,
)

log = logging.getLogger(__name__)

RISK_SELECTED = ("uu", "pcomp_unbiased", "pcomp_relu", "pcomp_abs", "noisy_unbiased")
PRUNING_METHODS = ("rank_pruning", "pcomp_teacher")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 256
    epochs: int = 50
    dropout_rate: float = 0.3
    dev_fraction: float = 0.15
    bn_momentum: float = 0.9
    dev_criterion: str = "auto"  # auto | risk | f1
    crossfit_folds: int = 5

    def __post_init__(self) -> None:
        if self.dev_criterion not in ("auto", "risk", "f1"):
            raise UsageError(f"dev_criterion must be auto/risk/f1")
        if self.epochs < 1 or self.batch_size < 1:
            raise UsageError("epochs and batch_size must be positive")


@dataclass
class TrainedHead:
    head: LinearHead
    estimator: EstimatorConfig
    selected_epoch: int
    log: list[dict] = field(default_factory=list)
    rates: NoiseRates | None = None
    weights: tuple[float, float] | None = None

    @property
    def dim(self) -> int:
        return self.head.dim


@dataclass(frozen=True)
class RankPruneResult:
    pos_set: tuple[int, ...]  # surviving record indices, original order
    neg_set: tuple[int, ...]
    pos_positions: tuple[int, ...]  # surviving positions within the input sets
    neg_positions: tuple[int, ...]
    weights: tuple[float, float]
    rates: NoiseRates


class _Stream:
    """Deterministic infinite batch stream over an index pool (reshuffles
    on exhaustion)."""

    def __init__(self, size: int, rng: np.random.Generator):
        self.size = size
        self.rng = rng
        self.order = rng.permutation(size)
        self.cursor = 0

    def take(self, count: int) -> np.ndarray:
        out = []
        while count > 0:
            available = self.size - self.cursor
            grab = min(count, available)
            out.append(self.order[self.cursor : self.cursor + grab])
            self.cursor += grab
            count -= grab
            if self.cursor == self.size:
                self.order = self.rng.permutation(self.size)
                self.cursor = 0
        return np.concatenate(out)


def _features_matrix(features: dict[int, np.ndarray], indices: tuple[int, ...]) -> np.ndarray:
    missing = [i for i in indices if i not in features]
    if missing:
        raise UsageError(f"features missing for {len(missing)} set member(s), e.g. index {missing[0]}")
    X = np.stack([np.asarray(features[i], dtype=np.float64) for i in indices])
    if not np.all(np.isfinite(X)):
        raise UsageError("non-finite feature values")
    return X


def _train_binary_head(
    Xp: np.ndarray, Xn: np.ndarray, hyper: TrainConfig, seed: int
) -> LinearHead:
    """Plain biased training used by the cross-fitting stage (no dev selection)."""
    rng = np.random.default_rng(seed)
    head = LinearHead.create(Xp.shape[1], hyper.dropout_rate, hyper.bn_momentum)
    optimizer = Adam(lr=hyper.learning_rate)
    cfg = EstimatorConfig(method="binary_biased", seed=seed)
    n = min(len(Xp), len(Xn))
    steps = max(1, math.ceil(n / hyper.batch_size))
    pos_stream = _Stream(len(Xp), np.random.default_rng(rng.integers(2**31 - 1)))
    neg_stream = _Stream(len(Xn), np.random.default_rng(rng.integers(2**31 - 1)))
    mask_rng = np.random.default_rng(rng.integers(2**31 - 1))
    batch = min(hyper.batch_size, n)
    for _ in range(hyper.epochs):
        for _ in range(steps):
            bp = pos_stream.take(batch)
            bn = neg_stream.take(batch)
            X = np.vstack([Xp[bp], Xn[bn]])
            mask = dropout_mask(X.shape, head.dropout_rate, mask_rng)
            scores, cache = batch_forward_train(head, X, mask=mask)
            risk, dpos, dneg = batch_objective(cfg, scores[:batch], scores[batch:])
            if not np.isfinite(risk):
                raise TrainingError("non-finite loss in cross-fitting stage")
            grads = batch_backward(cache, np.concatenate([dpos, dneg]))
            optimizer.step(head, grads)
    return head


def _crossfit_probabilities(
    Xp: np.ndarray, Xn: np.ndarray, hyper: TrainConfig, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Out-of-fold positive-class probabilities for every set member."""
    n_pos, n_neg = len(Xp), len(Xn)
    k = min(hyper.crossfit_folds, n_pos, n_neg)
    if k < 2:
        raise UsageError("cross-fitting needs at least 2 members per set")
    rng = np.random.default_rng(seed)
    fold_pos = rng.permutation(n_pos) % k
    fold_neg = rng.permutation(n_neg) % k
    prob_pos = np.zeros(n_pos)
    prob_neg = np.zeros(n_neg)
    for fold in range(k):
        head = _train_binary_head(
            Xp[fold_pos != fold],
            Xn[fold_neg != fold],
            hyper,
            seed=int(rng.integers(2**31 - 1)),
        )
        hold_p = fold_pos == fold
        hold_n = fold_neg == fold
        if hold_p.any():
            prob_pos[hold_p] = sigmoid(batch_forward_infer(head, Xp[hold_p]))
        if hold_n.any():
            prob_neg[hold_n] = sigmoid(batch_forward_infer(head, Xn[hold_n]))
    return prob_pos, prob_neg


def _prune_arrays(
    prob_pos: np.ndarray,
    prob_neg: np.ndarray,
    rates_mode: str,
    pi_plus: float,
) -> tuple[np.ndarray, np.ndarray, NoiseRates]:
    if rates_mode == "theory":
        rates = noise_rates_from_prior(pi_plus)
    elif rates_mode == "estimate":
        lower = float(prob_neg.mean())  # confident-negative threshold
        upper = float(prob_pos.mean())  # confident-positive threshold
        eta_pos = float(np.mean(prob_pos <= lower))
        eta_neg = float(np.mean(prob_neg >= upper))
        if eta_pos + eta_neg >= 1.0:
            raise TrainingError(
                f"estimated noise rates ({eta_pos:.3f}, {eta_neg:.3f}) sum to >= 1"
            )
        rates = NoiseRates(eta_pos=eta_pos, eta_neg=eta_neg)
    else:
        raise UsageError(f"rates_mode must be 'theory' or 'estimate', got {rates_mode!r}")
    k_pos = int(math.floor(rates.eta_pos * len(prob_pos)))
    k_neg = int(math.floor(rates.eta_neg * len(prob_neg)))
    if k_pos >= len(prob_pos) or k_neg >= len(prob_neg):
        raise TrainingError("pruning would empty a pointwise set")
    drop_pos = np.argsort(prob_pos, kind="stable")[:k_pos]  # least positive-looking
    drop_neg = np.argsort(-prob_neg, kind="stable")[:k_neg]  # most positive-looking
    keep_pos = np.setdiff1d(np.arange(len(prob_pos)), drop_pos)
    keep_neg = np.setdiff1d(np.arange(len(prob_neg)), drop_neg)
    return keep_pos, keep_neg, rates


def rank_prune(
    sets: PointwiseSets,
    features: dict[int, np.ndarray],
    rates_mode: str,
    estimator: EstimatorConfig,
    hyper: TrainConfig = TrainConfig(),
) -> RankPruneResult:
    """Noise-aware pruning of the pointwise sets.

    A preliminary head is cross-fitted with the biased binary risk to get
    out-of-fold probabilities; contamination rates come from the prior
    (theory mode) or from confident-threshold counting against the class
    mean probabilities (estimate mode). The lowest-probability fraction of
    the noisy-positive set and the highest-probability fraction of the
    noisy-negative set are removed, and the survivors are reweighted by
    1/(1 - eta).
    """
    Xp = _features_matrix(features, sets.pos_set)
    Xn = _features_matrix(features, sets.neg_set)
    prob_pos, prob_neg = _crossfit_probabilities(Xp, Xn, hyper, estimator.seed)
    keep_pos, keep_neg, rates = _prune_arrays(
        prob_pos, prob_neg, rates_mode, estimator.pi_plus
    )
    weights = (1.0 / (1.0 - rates.eta_pos), 1.0 / (1.0 - rates.eta_neg))
    return RankPruneResult(
        pos_set=tuple(sets.pos_set[i] for i in keep_pos),
        neg_set=tuple(sets.neg_set[i] for i in keep_neg),
        pos_positions=tuple(int(i) for i in keep_pos),
        neg_positions=tuple(int(i) for i in keep_neg),
        weights=weights,
        rates=rates,
    )


def _dev_value(
    head: LinearHead,
    Xp_dev: np.ndarray,
    Xn_dev: np.ndarray,
    estimator: EstimatorConfig,
    criterion: str,
    weights: tuple[float, float],
) -> tuple[float, float]:
    """(criterion value, dev F1); running statistics, no dropout."""
    scores_pos = batch_forward_infer(head, Xp_dev)
    scores_neg = batch_forward_infer(head, Xn_dev)
    tp = int(np.sum(scores_pos >= 0))
    fn = len(scores_pos) - tp
    fp = int(np.sum(scores_neg >= 0))
    tn = len(scores_neg) - fp
    f1 = from_counts(tp, fp, fn, tn).f1
    if criterion == "f1":
        return f1, f1
    risk, _, _ = batch_objective(estimator, scores_pos, scores_neg, weights=weights)
    return risk, f1


def _resolve_criterion(estimator: EstimatorConfig, hyper: TrainConfig) -> str:
    if hyper.dev_criterion != "auto":
        return hyper.dev_criterion
    return "risk" if estimator.method in RISK_SELECTED else "f1"


def train(
    sets: PointwiseSets,
    features: dict[int, np.ndarray],
    estimator: EstimatorConfig,
    hyper: TrainConfig = TrainConfig(),
) -> TrainedHead:
    """Fit the head on pointwise sets; returns the dev-selected snapshot."""
    Xp = _features_matrix(features, sets.pos_set)
    Xn = _features_matrix(features, sets.neg_set)
    n_pairs = sets.n_pairs
    master = np.random.default_rng(estimator.seed)
    split_seed = int(master.integers(2**31 - 1))
    stream_seed = int(master.integers(2**31 - 1))
    mask_seed = int(master.integers(2**31 - 1))
    prune_seed = int(master.integers(2**31 - 1))

    train_positions, dev_positions = split_train_dev(
        list(range(n_pairs)), hyper.dev_fraction, split_seed
    )
    train_positions = np.asarray(train_positions)
    dev_positions = np.asarray(dev_positions)
    Xp_dev, Xn_dev = Xp[dev_positions], Xn[dev_positions]

    rates: NoiseRates | None = None
    weights = (1.0, 1.0)
    if estimator.method in PRUNING_METHODS:
        train_sets = PointwiseSets(
            pos_set=tuple(sets.pos_set[i] for i in train_positions),
            neg_set=tuple(sets.neg_set[i] for i in train_positions),
            label_source=sets.label_source,
            pi_plus=sets.pi_plus,
        )
        pruned = rank_prune(
            train_sets, features, estimator.rates_mode,
            EstimatorConfig(
                method=estimator.method, pi_plus=estimator.pi_plus,
                rates_mode=estimator.rates_mode, seed=prune_seed,
            ),
            hyper,
        )
        rates = pruned.rates
        weights = pruned.weights
        Pp = Xp[train_positions][list(pruned.pos_positions)]
        Pn = Xn[train_positions][list(pruned.neg_positions)]
    else:
        if estimator.method == "noisy_unbiased":
            rates = noise_rates_from_prior(estimator.pi_plus)
        Pp = Xp[train_positions]
        Pn = Xn[train_positions]

    head = LinearHead.create(Xp.shape[1], hyper.dropout_rate, hyper.bn_momentum)
    optimizer = Adam(lr=hyper.learning_rate)
    criterion = _resolve_criterion(estimator, hyper)
    paired = estimator.method not in PRUNING_METHODS

    stream_rng = np.random.default_rng(stream_seed)
    mask_rng = np.random.default_rng(mask_seed)
    teacher = head.snapshot() if estimator.method == "pcomp_teacher" else None
    teacher_mask_rng = (
        np.random.default_rng(int(stream_rng.integers(2**31 - 1))) if teacher else None
    )

    if paired:
        steps = max(1, math.ceil(len(Pp) / hyper.batch_size))
        pair_stream = _Stream(len(Pp), stream_rng)
    else:
        steps = max(1, math.ceil(max(len(Pp), len(Pn)) / hyper.batch_size))
        pos_stream = _Stream(len(Pp), np.random.default_rng(int(stream_rng.integers(2**31 - 1))))
        neg_stream = _Stream(len(Pn), np.random.default_rng(int(stream_rng.integers(2**31 - 1))))
    batch = min(hyper.batch_size, len(Pp), len(Pn))

    best_value = None
    best_epoch = 0
    best_snapshot = None
    history: list[dict] = []

    for epoch in range(1, hyper.epochs + 1):
        if teacher is not None:
            ramp = max(1, estimator.teacher.ramp_epochs)
            lam = estimator.teacher.lambda_max * min(1.0, epoch / ramp)
        else:
            lam = 0.0
        epoch_risks = []
        for _ in range(steps):
            if paired:
                positions = pair_stream.take(batch)
                Bp, Bn = Pp[positions], Pn[positions]
            else:
                Bp, Bn = Pp[pos_stream.take(batch)], Pn[neg_stream.take(batch)]
            X = np.vstack([Bp, Bn])
            mask = dropout_mask(X.shape, head.dropout_rate, mask_rng)
            scores, cache = batch_forward_train(head, X, mask=mask)
            teacher_scores = None
            if teacher is not None:
                t_mask = dropout_mask(X.shape, head.dropout_rate, teacher_mask_rng)
                t_act = (teacher["gamma"] * cache.xhat + teacher["beta"]) * t_mask
                t_scores = t_act @ teacher["w"] + teacher["b"]
                teacher_scores = (t_scores[: len(Bp)], t_scores[len(Bp) :])
            risk, dpos, dneg = batch_objective(
                estimator,
                scores[: len(Bp)],
                scores[len(Bp) :],
                weights=weights,
                rates=rates,
                teacher_scores=teacher_scores,
                lam=lam,
            )
            if not np.isfinite(risk):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch} ({estimator.method}); aborting"
                )
            grads = batch_backward(cache, np.concatenate([dpos, dneg]))
            optimizer.step(head, grads)
            if teacher is not None:
                decay = estimator.teacher.ema_decay
                teacher["w"] = decay * teacher["w"] + (1.0 - decay) * head.w
                teacher["b"] = decay * teacher["b"] + (1.0 - decay) * head.b
                teacher["gamma"] = decay * teacher["gamma"] + (1.0 - decay) * head.bn_gamma
                teacher["beta"] = decay * teacher["beta"] + (1.0 - decay) * head.bn_beta
            epoch_risks.append(risk)
        value, dev_f1 = _dev_value(head, Xp_dev, Xn_dev, estimator, criterion, weights)
        history.append(
            {
                "epoch": epoch,
                "train_risk": float(np.mean(epoch_risks)),
                "dev_criterion": float(value),
            }
        )
        better = (
            best_value is None
            or (criterion == "risk" and value < best_value)
            or (criterion == "f1" and value > best_value)
        )
        if better:
            best_value = value
            best_epoch = epoch
            best_snapshot = head.snapshot()

    head.restore(best_snapshot)
    return TrainedHead(
        head=head,
        estimator=estimator,
        selected_epoch=best_epoch,
        log=history,
        rates=rates,
        weights=weights if estimator.method in PRUNING_METHODS else None,
    )


def predict(trained: TrainedHead, features: list[np.ndarray]) -> list[int]:
    """Sign predictions (ties to +1) in infer mode."""
    X = np.stack([np.asarray(f, dtype=np.float64) for f in features])
    scores = batch_forward_infer(trained.head, X)
    return [1 if s >= 0 else -1 for s in scores]


def predict_map(trained: TrainedHead, features: dict[str, np.ndarray]) -> dict[str, int]:
    keys = list(features)
    labels = predict(trained, [features[k] for k in keys])
    return dict(zip(keys, labels))


def save_head(trained: TrainedHead, stem: str | Path) -> tuple[Path, Path]:
    """Write ``<stem>.json`` metadata + ``<stem>.params`` float32 blob
    (order: w, b, gamma, beta, running mean, running var); the training
    log goes to ``<stem>.log`` as JSON lines."""
    stem = Path(stem)
    head = trained.head
    meta = {
        "dim": head.dim,
        "estimator": _estimator_dict(trained.estimator),
        "seed": trained.estimator.seed,
        "selected_epoch": trained.selected_epoch,
        "dropout_rate": head.dropout_rate,
        "bn_momentum": head.bn_momentum,
        "bn_eps": head.bn_eps,
        "steps": head.steps,
    }
    meta_path = stem.with_suffix(".json")
    meta_path.write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    blob = np.concatenate(
        [head.w, [head.b], head.bn_gamma, head.bn_beta, head.bn_mean, head.bn_var]
    ).astype("<f4")
    params_path = stem.with_suffix(".params")
    params_path.write_bytes(blob.tobytes())
    if trained.log:
        log_path = stem.with_suffix(".log")
        with log_path.open("w", encoding="utf-8") as handle:
            for entry in trained.log:
                handle.write(json.dumps(entry) + "\n")
    return meta_path, params_path


def _estimator_dict(cfg: EstimatorConfig) -> dict:
    out = asdict(cfg)
    out["uu_thetas"] = list(cfg.uu_thetas) if cfg.uu_thetas else None
    return out


def load_head(stem: str | Path) -> TrainedHead:
    stem = Path(stem)
    meta = json.loads(stem.with_suffix(".json").read_text(encoding="utf-8"))
    dim = int(meta["dim"])
    blob = np.frombuffer(stem.with_suffix(".params").read_bytes(), dtype="<f4").astype(np.float64)
    if blob.size != 5 * dim + 1:
        raise UsageError(f"parameter blob of {blob.size} values does not match dim {dim}")
    est = meta["estimator"]
    estimator = EstimatorConfig(
        method=est["method"],
        pi_plus=est["pi_plus"],
        uu_thetas=tuple(est["uu_thetas"]) if est.get("uu_thetas") else None,
        rates_mode=est.get("rates_mode", "theory"),
        seed=est.get("seed", 0),
    )
    head = LinearHead(
        w=blob[:dim].copy(),
        b=float(blob[dim]),
        bn_gamma=blob[dim + 1 : 2 * dim + 1].copy(),
        bn_beta=blob[2 * dim + 1 : 3 * dim + 1].copy(),
        bn_mean=blob[3 * dim + 1 : 4 * dim + 1].copy(),
        bn_var=blob[4 * dim + 1 : 5 * dim + 1].copy(),
        dropout_rate=meta["dropout_rate"],
        bn_momentum=meta["bn_momentum"],
        bn_eps=meta["bn_eps"],
        steps=int(meta["steps"]),
    )
    return TrainedHead(
        head=head,
        estimator=estimator,
        selected_epoch=int(meta["selected_epoch"]),
    )
