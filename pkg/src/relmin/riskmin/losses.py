"""Logistic loss and the pointwise classification risk estimators.

All estimators act on raw classifier scores for the noisy-positive set
(first pair elements) and noisy-negative set (second pair elements).
Every risk comes with an analytic gradient w.r.t. the scores so training
can backpropagate through the head without autodiff.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import UsageError
from ..pairgen import mixture_weights

ESTIMATOR_METHODS = (
    "binary_biased",
    "uu",
    "pcomp_unbiased",
    "pcomp_relu",
    "pcomp_abs",
    "noisy_unbiased",
    "rank_pruning",
    "pcomp_teacher",
)


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=np.float64)))


def logistic_loss(margin):
    """ln(1 + exp(-margin)), overflow-free for any finite margin."""
    return np.logaddexp(0.0, -np.asarray(margin, dtype=np.float64))


def _loss_pos(scores):
    return np.logaddexp(0.0, -scores)


def _loss_neg(scores):
    return np.logaddexp(0.0, scores)


def _dloss_pos(scores):
    return -sigmoid(-scores)


def _dloss_neg(scores):
    return sigmoid(scores)


@dataclass(frozen=True)
class NoiseRates:
    """Contamination rates of the two pointwise sets.

    eta_pos: truly-negative fraction of the noisy-positive set;
    eta_neg: truly-positive fraction of the noisy-negative set.
    """

    eta_pos: float
    eta_neg: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.eta_pos < 1.0 and 0.0 <= self.eta_neg < 1.0):
            raise UsageError(f"noise rates must lie in [0,1): {self}")
        if self.eta_pos + self.eta_neg >= 1.0:
            raise UsageError(f"noise rates must sum below 1: {self}")


@dataclass(frozen=True)
class TeacherConfig:
    ema_decay: float = 0.99
    lambda_max: float = 1.0
    ramp_epochs: int = 5


@dataclass(frozen=True)
class EstimatorConfig:
    method: str
    pi_plus: float = 0.5
    uu_thetas: tuple[float, float] | None = None
    teacher: TeacherConfig = field(default_factory=TeacherConfig)
    rates_mode: str = "theory"  # "theory" derives rates from the prior, "estimate" counts
    seed: int = 0

    def __post_init__(self) -> None:
        if self.method not in ESTIMATOR_METHODS:
            raise UsageError(f"unknown estimator {self.method!r}")
        if not 0.0 < self.pi_plus < 1.0:
            raise UsageError(f"prior must be in (0,1), got {self.pi_plus}")
        if self.rates_mode not in ("theory", "estimate"):
            raise UsageError(f"rates_mode must be 'theory' or 'estimate'")
        if self.method == "uu":
            theta, theta_p = self.thetas()
            if theta == theta_p:
                raise UsageError("uu estimator needs two distinct class priors")

    def thetas(self) -> tuple[float, float]:
        if self.uu_thetas is not None:
            return self.uu_thetas
        # default: the actual priors of the two pointwise mixtures
        return mixture_weights(self.pi_plus)


def noise_rates_from_prior(pi_plus: float) -> NoiseRates:
    """Mixture-implied contamination of the two pointwise sets."""
    w_pos, w_neg = mixture_weights(pi_plus)
    return NoiseRates(eta_pos=1.0 - w_pos, eta_neg=w_neg)


def risk_binary_biased(scores_pos, scores_neg) -> float:
    """Plain binary risk treating the noisy sets as clean classes."""
    risk, _, _ = binary_biased_with_grad(np.asarray(scores_pos), np.asarray(scores_neg))
    return risk


def binary_biased_with_grad(scores_pos, scores_neg, w_pos=1.0, w_neg=1.0):
    if len(scores_pos) == 0 or len(scores_neg) == 0:
        raise UsageError("risk needs both sets nonempty")
    risk = float(np.mean(w_pos * _loss_pos(scores_pos)) + np.mean(w_neg * _loss_neg(scores_neg)))
    dpos = w_pos * _dloss_pos(scores_pos) / len(scores_pos)
    dneg = w_neg * _dloss_neg(scores_neg) / len(scores_neg)
    return risk, dpos, dneg


def risk_uu(scores_a, scores_b, theta: float, theta_p: float, pi_plus: float) -> float:
    """Unbiased risk from two unlabeled sets with class priors theta/theta_p."""
    risk, _, _ = uu_with_grad(
        np.asarray(scores_a), np.asarray(scores_b), theta, theta_p, pi_plus
    )
    return risk


def uu_with_grad(scores_a, scores_b, theta, theta_p, pi_plus):
    if theta == theta_p:
        raise UsageError("uu risk undefined for equal priors")
    gap = theta - theta_p
    pi_minus = 1.0 - pi_plus
    ca_pos = (1.0 - theta_p) * pi_plus / gap
    ca_neg = theta_p * pi_minus / gap
    cb_neg = theta * pi_minus / gap
    cb_pos = (1.0 - theta) * pi_plus / gap
    risk = float(
        np.mean(ca_pos * _loss_pos(scores_a) - ca_neg * _loss_neg(scores_a))
        + np.mean(cb_neg * _loss_neg(scores_b) - cb_pos * _loss_pos(scores_b))
    )
    da = (ca_pos * _dloss_pos(scores_a) - ca_neg * _dloss_neg(scores_a)) / len(scores_a)
    db = (cb_neg * _dloss_neg(scores_b) - cb_pos * _dloss_pos(scores_b)) / len(scores_b)
    return risk, da, db


def risk_pcomp_unbiased(scores_pos, scores_neg, pi_plus: float) -> float:
    """Unbiased pairwise-comparison risk; may be negative."""
    risk, _, _ = pcomp_unbiased_with_grad(
        np.asarray(scores_pos), np.asarray(scores_neg), pi_plus
    )
    return risk


def pcomp_unbiased_with_grad(scores_pos, scores_neg, pi_plus):
    if len(scores_pos) != len(scores_neg):
        raise UsageError("pcomp risk needs equally sized sets (paired origin)")
    n = len(scores_pos)
    pi_minus = 1.0 - pi_plus
    risk = float(
        np.sum(
            _loss_pos(scores_pos)
            + _loss_neg(scores_neg)
            - pi_plus * _loss_neg(scores_pos)
            - pi_minus * _loss_pos(scores_neg)
        )
        / n
    )
    dpos = (_dloss_pos(scores_pos) - pi_plus * _dloss_neg(scores_pos)) / n
    dneg = (_dloss_neg(scores_neg) - pi_minus * _dloss_pos(scores_neg)) / n
    return risk, dpos, dneg


def risk_pcomp_corrected(scores_pos, scores_neg, pi_plus: float, g: str) -> float:
    """Pcomp risk with a non-negative correction applied to each bracket."""
    risk, _, _ = pcomp_corrected_with_grad(
        np.asarray(scores_pos), np.asarray(scores_neg), pi_plus, g
    )
    return risk


def _correction(g: str, value: float) -> tuple[float, float]:
    if g == "relu":
        return (value, 1.0) if value > 0.0 else (0.0, 0.0)
    if g == "abs":
        return abs(value), float(np.sign(value))
    raise UsageError(f"unknown correction function {g!r}")


def pcomp_corrected_with_grad(scores_pos, scores_neg, pi_plus, g):
    if len(scores_pos) != len(scores_neg):
        raise UsageError("pcomp risk needs equally sized sets (paired origin)")
    n = len(scores_pos)
    pi_minus = 1.0 - pi_plus
    bracket1 = float(np.sum(_loss_pos(scores_pos) - pi_minus * _loss_pos(scores_neg)) / n)
    bracket2 = float(np.sum(_loss_neg(scores_neg) - pi_plus * _loss_neg(scores_pos)) / n)
    value1, slope1 = _correction(g, bracket1)
    value2, slope2 = _correction(g, bracket2)
    risk = value1 + value2
    dpos = (slope1 * _dloss_pos(scores_pos) - slope2 * pi_plus * _dloss_neg(scores_pos)) / n
    dneg = (slope2 * _dloss_neg(scores_neg) - slope1 * pi_minus * _dloss_pos(scores_neg)) / n
    return risk, dpos, dneg


def loss_noisy_unbiased(score: float, noisy_label: int, rates: NoiseRates) -> float:
    """Label-noise-corrected logistic loss for one example."""
    denom = 1.0 - rates.eta_pos - rates.eta_neg
    if denom <= 0.0:
        raise UsageError("noise rates sum to >= 1; corrected loss undefined")
    score = np.asarray(score, dtype=np.float64)
    if noisy_label == 1:
        value = ((1.0 - rates.eta_neg) * _loss_pos(score) - rates.eta_pos * _loss_neg(score)) / denom
    elif noisy_label == -1:
        value = ((1.0 - rates.eta_pos) * _loss_neg(score) - rates.eta_neg * _loss_pos(score)) / denom
    else:
        raise UsageError(f"noisy label must be +1 or -1, got {noisy_label}")
    return float(value)


def noisy_unbiased_with_grad(scores_pos, scores_neg, rates: NoiseRates):
    denom = 1.0 - rates.eta_pos - rates.eta_neg
    if denom <= 0.0:
        raise UsageError("noise rates sum to >= 1; corrected loss undefined")
    risk = float(
        np.mean(
            (1.0 - rates.eta_neg) * _loss_pos(scores_pos)
            - rates.eta_pos * _loss_neg(scores_pos)
        )
        / denom
        + np.mean(
            (1.0 - rates.eta_pos) * _loss_neg(scores_neg)
            - rates.eta_neg * _loss_pos(scores_neg)
        )
        / denom
    )
    dpos = (
        (1.0 - rates.eta_neg) * _dloss_pos(scores_pos)
        - rates.eta_pos * _dloss_neg(scores_pos)
    ) / (denom * len(scores_pos))
    dneg = (
        (1.0 - rates.eta_pos) * _dloss_neg(scores_neg)
        - rates.eta_neg * _dloss_pos(scores_neg)
    ) / (denom * len(scores_neg))
    return risk, dpos, dneg


def consistency_with_grad(scores, teacher_scores, lam: float):
    """lam * mean squared difference of student/teacher sigmoid outputs.

    Teacher scores are constants; only the student gradient is returned.
    """
    student = sigmoid(scores)
    teacher = sigmoid(teacher_scores)
    diff = student - teacher
    value = lam * float(np.mean(diff**2))
    grad = lam * 2.0 * diff * student * (1.0 - student) / len(scores)
    return value, grad


def batch_objective(
    cfg: EstimatorConfig,
    scores_pos,
    scores_neg,
    weights: tuple[float, float] = (1.0, 1.0),
    rates: NoiseRates | None = None,
    teacher_scores: tuple[np.ndarray, np.ndarray] | None = None,
    lam: float = 0.0,
):
    """Risk and score-gradients of the configured estimator on one batch.

    For the pruning-based methods the base objective is the weighted
    binary risk; the teacher variant adds the consistency penalty against
    fixed teacher scores.
    """
    scores_pos = np.asarray(scores_pos, dtype=np.float64)
    scores_neg = np.asarray(scores_neg, dtype=np.float64)
    method = cfg.method
    if method == "binary_biased":
        return binary_biased_with_grad(scores_pos, scores_neg)
    if method == "uu":
        theta, theta_p = cfg.thetas()
        return uu_with_grad(scores_pos, scores_neg, theta, theta_p, cfg.pi_plus)
    if method == "pcomp_unbiased":
        return pcomp_unbiased_with_grad(scores_pos, scores_neg, cfg.pi_plus)
    if method == "pcomp_relu":
        return pcomp_corrected_with_grad(scores_pos, scores_neg, cfg.pi_plus, "relu")
    if method == "pcomp_abs":
        return pcomp_corrected_with_grad(scores_pos, scores_neg, cfg.pi_plus, "abs")
    if method == "noisy_unbiased":
        rates = rates if rates is not None else noise_rates_from_prior(cfg.pi_plus)
        return noisy_unbiased_with_grad(scores_pos, scores_neg, rates)
    if method in ("rank_pruning", "pcomp_teacher"):
        risk, dpos, dneg = binary_biased_with_grad(
            scores_pos, scores_neg, w_pos=weights[0], w_neg=weights[1]
        )
        if method == "pcomp_teacher" and teacher_scores is not None and lam > 0.0:
            value, grad = consistency_with_grad(
                np.concatenate([scores_pos, scores_neg]),
                np.concatenate([teacher_scores[0], teacher_scores[1]]),
                lam,
            )
            risk += value
            dpos = dpos + grad[: len(scores_pos)]
            dneg = dneg + grad[len(scores_pos) :]
        return risk, dpos, dneg
    raise UsageError(f"unknown estimator {method!r}")
