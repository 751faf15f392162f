"""Trainable 1-D convolutional laughter classifier."""

from .model import (
    ConvSpec,
    ModelConfig,
    ModelError,
    ModelParams,
    ShapeMismatchError,
    count_params,
    forward,
    init_params,
    load_model,
    loss_and_grads,
    predict_score,
    predict_scores,
    save_model,
)
from .train import AugmentConfig, EpochLog, TrainConfig, adam_init, adam_step, augment_sequence, holdout_split, train

__all__ = [
    "AugmentConfig",
    "ConvSpec",
    "EpochLog",
    "ModelConfig",
    "ModelError",
    "ModelParams",
    "ShapeMismatchError",
    "TrainConfig",
    "adam_init",
    "adam_step",
    "augment_sequence",
    "count_params",
    "forward",
    "holdout_split",
    "init_params",
    "load_model",
    "loss_and_grads",
    "predict_score",
    "predict_scores",
    "save_model",
    "train",
]
