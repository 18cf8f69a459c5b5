"""Minimal reverse-mode autodiff engine, layer kernels, loss, and optimizer."""

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .gradcheck import gradient_check
from .loss import TrainConfig, downsample_gt, robust_loss
from .ops import avgpool2x, bilinear_upsample2x, concat_channels, conv2d, leaky_relu
from .optim import Adam, AdamState, adam_step
from .tensor import Tensor, debug_checks_enabled, no_grad, set_debug_checks

__all__ = [
    "Tensor",
    "set_debug_checks",
    "debug_checks_enabled",
    "no_grad",
    "conv2d",
    "leaky_relu",
    "bilinear_upsample2x",
    "concat_channels",
    "avgpool2x",
    "TrainConfig",
    "robust_loss",
    "downsample_gt",
    "Adam",
    "AdamState",
    "adam_step",
    "gradient_check",
    "save_checkpoint",
    "load_checkpoint",
    "CheckpointError",
]
