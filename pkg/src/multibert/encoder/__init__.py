"""Numpy transformer encoder: model, training, checkpoints."""

from .checkpoint import (
    load_checkpoint,
    read_loss_history,
    save_checkpoint,
    write_loss_history,
)
from .model import (
    EncoderConfig,
    EncoderModel,
    backward,
    cross_entropy,
    forward,
    gelu,
    init_model,
    parameter_names,
    parameter_shapes,
    reconstruction_loss,
)
from .training import (
    AdamOptimizer,
    GradCheckReport,
    TrainConfig,
    gradient_check,
    train,
)

__all__ = [
    "AdamOptimizer",
    "EncoderConfig",
    "EncoderModel",
    "GradCheckReport",
    "TrainConfig",
    "backward",
    "cross_entropy",
    "forward",
    "gelu",
    "gradient_check",
    "init_model",
    "load_checkpoint",
    "parameter_names",
    "parameter_shapes",
    "read_loss_history",
    "reconstruction_loss",
    "save_checkpoint",
    "train",
    "write_loss_history",
]
