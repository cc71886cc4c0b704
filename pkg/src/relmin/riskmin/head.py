"""Batch-normalized linear classifier head over pair features.

Forward order: batch normalization (batch statistics in train mode,
running statistics in infer mode), inverted dropout (train mode only),
then the affine score ``w . x + b``. Gradients w.r.t. the trainable
parameters (w, b, gamma, beta) are computed in closed form; statistics
gradients are not needed because inputs are frozen features.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import TrainingError, UsageError


@dataclass
class LinearHead:
    w: np.ndarray
    b: float
    bn_gamma: np.ndarray
    bn_beta: np.ndarray
    bn_mean: np.ndarray
    bn_var: np.ndarray
    dropout_rate: float = 0.3
    bn_momentum: float = 0.9
    bn_eps: float = 1e-5
    steps: int = 0  # training batches folded into the running statistics

    @classmethod
    def create(cls, dim: int, dropout_rate: float = 0.3, bn_momentum: float = 0.9) -> "LinearHead":
        if not 0.0 <= dropout_rate < 1.0:
            raise UsageError(f"dropout rate must be in [0,1), got {dropout_rate}")
        return cls(
            w=np.zeros(dim),
            b=0.0,
            bn_gamma=np.ones(dim),
            bn_beta=np.zeros(dim),
            bn_mean=np.zeros(dim),
            bn_var=np.ones(dim),
            dropout_rate=dropout_rate,
            bn_momentum=bn_momentum,
        )

    @property
    def dim(self) -> int:
        return self.w.shape[0]

    def params(self) -> dict[str, np.ndarray | float]:
        return {"w": self.w, "b": self.b, "gamma": self.bn_gamma, "beta": self.bn_beta}

    def snapshot(self) -> dict:
        return {
            "w": self.w.copy(),
            "b": self.b,
            "gamma": self.bn_gamma.copy(),
            "beta": self.bn_beta.copy(),
            "mean": self.bn_mean.copy(),
            "var": self.bn_var.copy(),
            "steps": self.steps,
        }

    def restore(self, snap: dict) -> None:
        self.w = snap["w"].copy()
        self.b = snap["b"]
        self.bn_gamma = snap["gamma"].copy()
        self.bn_beta = snap["beta"].copy()
        self.bn_mean = snap["mean"].copy()
        self.bn_var = snap["var"].copy()
        self.steps = snap["steps"]


@dataclass
class ForwardCache:
    xhat: np.ndarray
    mask: np.ndarray
    activations: np.ndarray
    w: np.ndarray


@dataclass
class Grads:
    w: np.ndarray
    b: float
    gamma: np.ndarray
    beta: np.ndarray


def dropout_mask(shape, rate: float, rng: np.random.Generator | None) -> np.ndarray:
    """Inverted dropout mask; all-ones when rate is 0 or rng is absent."""
    if rate <= 0.0 or rng is None:
        return np.ones(shape)
    keep = 1.0 - rate
    return (rng.random(shape) < keep) / keep


def batch_forward_train(
    head: LinearHead,
    X: np.ndarray,
    mask: np.ndarray | None = None,
    update_stats: bool = True,
) -> tuple[np.ndarray, ForwardCache]:
    """Train-mode scores via batch statistics; optionally fold them into
    the running statistics (momentum EMA)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != head.dim:
        raise UsageError(f"batch shape {X.shape} incompatible with head dim {head.dim}")
    mu = X.mean(axis=0)
    var = X.var(axis=0)
    xhat = (X - mu) / np.sqrt(var + head.bn_eps)
    if mask is None:
        mask = np.ones_like(X)
    activations = (head.bn_gamma * xhat + head.bn_beta) * mask
    scores = activations @ head.w + head.b
    if update_stats:
        m = head.bn_momentum
        if head.steps == 0:
            head.bn_mean, head.bn_var = mu.copy(), var.copy()
        else:
            head.bn_mean = m * head.bn_mean + (1.0 - m) * mu
            head.bn_var = m * head.bn_var + (1.0 - m) * var
        head.steps += 1
    return scores, ForwardCache(xhat=xhat, mask=mask, activations=activations, w=head.w)


def batch_forward_infer(head: LinearHead, X: np.ndarray) -> np.ndarray:
    """Infer-mode scores via running statistics; dropout inactive."""
    if head.steps == 0:
        raise TrainingError("running statistics uninitialized: train before inference")
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != head.dim:
        raise UsageError(f"batch shape {X.shape} incompatible with head dim {head.dim}")
    xhat = (X - head.bn_mean) / np.sqrt(head.bn_var + head.bn_eps)
    return (head.bn_gamma * xhat + head.bn_beta) @ head.w + head.b


def batch_backward(cache: ForwardCache, dscores: np.ndarray) -> Grads:
    """Gradients of a scalar objective w.r.t. (w, b, gamma, beta)."""
    dscores = np.asarray(dscores, dtype=np.float64)
    dact = dscores[:, None] * cache.w[None, :]
    dpre = dact * cache.mask
    return Grads(
        w=cache.activations.T @ dscores,
        b=float(dscores.sum()),
        gamma=(dpre * cache.xhat).sum(axis=0),
        beta=dpre.sum(axis=0),
    )


def forward(
    head: LinearHead,
    r: np.ndarray,
    mode: str = "infer",
    rng: np.random.Generator | None = None,
) -> float:
    """Score a single pair feature. Train mode uses the sample itself as
    the batch (so a lone sample normalizes to zero) and applies dropout."""
    r = np.asarray(r, dtype=np.float64).reshape(1, -1)
    if mode == "infer":
        return float(batch_forward_infer(head, r)[0])
    if mode == "train":
        mask = dropout_mask(r.shape, head.dropout_rate, rng)
        scores, _ = batch_forward_train(head, r, mask=mask, update_stats=False)
        return float(scores[0])
    raise UsageError(f"mode must be 'train' or 'infer', got {mode!r}")


class Adam:
    """Per-parameter adaptive gradient updates with bias correction."""

    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m: dict[str, np.ndarray | float] = {}
        self._v: dict[str, np.ndarray | float] = {}

    def step(self, head: LinearHead, grads: Grads) -> None:
        self.t += 1
        updates = {"w": grads.w, "b": grads.b, "gamma": grads.gamma, "beta": grads.beta}
        values = {"w": head.w, "b": head.b, "gamma": head.bn_gamma, "beta": head.bn_beta}
        for name, grad in updates.items():
            m = self._m.get(name, np.zeros_like(grad) if isinstance(grad, np.ndarray) else 0.0)
            v = self._v.get(name, np.zeros_like(grad) if isinstance(grad, np.ndarray) else 0.0)
            m = self.beta1 * m + (1.0 - self.beta1) * grad
            v = self.beta2 * v + (1.0 - self.beta2) * np.square(grad)
            self._m[name], self._v[name] = m, v
            m_hat = m / (1.0 - self.beta1**self.t)
            v_hat = v / (1.0 - self.beta2**self.t)
            values[name] = values[name] - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
        head.w = values["w"]
        head.b = float(values["b"])
        head.bn_gamma = values["gamma"]
        head.bn_beta = values["beta"]
