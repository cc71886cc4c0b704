"""Risk estimators, linear classifier head, and the training loop."""

from .losses import (
    EstimatorConfig,
    NoiseRates,
    ESTIMATOR_METHODS,
    logistic_loss,
    loss_noisy_unbiased,
    noise_rates_from_prior,
    risk_binary_biased,
    risk_pcomp_corrected,
    risk_pcomp_unbiased,
    risk_uu,
    sigmoid,
)
from .head import LinearHead, forward, batch_forward_infer, batch_forward_train
from .train import (
    RankPruneResult,
    TrainConfig,
    TrainedHead,
    load_head,
    predict,
    predict_map,
    rank_prune,
    save_head,
    train,
)

__all__ = [
    "ESTIMATOR_METHODS",
    "EstimatorConfig",
    "LinearHead",
    "NoiseRates",
    "RankPruneResult",
    "TrainConfig",
    "TrainedHead",
    "batch_forward_infer",
    "batch_forward_train",
    "forward",
    "load_head",
    "logistic_loss",
    "loss_noisy_unbiased",
    "noise_rates_from_prior",
    "predict",
    "predict_map",
    "rank_prune",
    "risk_binary_biased",
    "risk_pcomp_corrected",
    "risk_pcomp_unbiased",
    "risk_uu",
    "save_head",
    "sigmoid",
    "train",
]
