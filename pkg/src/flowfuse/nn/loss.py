"""Robust multi-level training loss and training configuration."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor

__all__ = ["TrainConfig", "robust_loss", "downsample_gt"]


@dataclass(frozen=True)
class TrainConfig:
    """Training hyperparameters.

    The defaults reproduce the published recipe: per-level weights
    alpha = (0.005, 0.01, 0.02, 0.08, 0.32), epsilon = 0.01, q = 0.4,
    weight decay gamma = 0.0004, and learning rate 0.0001 for fine-tuning
    a single-output fusion head (which uses alpha_levels[0] = 0.005).
    """

    alpha_levels: tuple[float, ...] = (0.005, 0.01, 0.02, 0.08, 0.32)
    epsilon: float = 0.01
    q: float = 0.4
    gamma: float = 0.0004
    learning_rate: float = 0.0001
    batch_size: int = 4
    steps: int = 20_000
    seed: int = 0
    norm: str = "l1"
    crop_size: int = 64

    def __post_init__(self) -> None:
        if self.epsilon <= 0:
            raise ValueError("epsilon must be > 0")
        if not 0 < self.q <= 1:
            raise ValueError("q must be in (0, 1]")
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.norm not in ("l1", "l2"):
            raise ValueError("norm must be 'l1' or 'l2'")

    def to_dict(self) -> dict:
        return {
            "alpha_levels": list(self.alpha_levels),
            "epsilon": self.epsilon,
            "q": self.q,
            "gamma": self.gamma,
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "steps": self.steps,
            "seed": self.seed,
            "norm": self.norm,
            "crop_size": self.crop_size,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if "alpha_levels" in d:
            d["alpha_levels"] = tuple(d["alpha_levels"])
        return cls(**d)


def downsample_gt(gt: np.ndarray, valid: np.ndarray, levels: int):
    """Per-level ground truth by 2x average pooling with displacement rescale.

    Level 0 is full resolution. Each coarser level halves both spatial
    dimensions (which must be even) and halves the displacements, since
    they are measured in the coarser pixel grid. A pooled pixel stays
    valid only if all four children were valid.

    Args:
        gt: (N, 2, H, W) ground-truth displacements.
        valid: (N, H, W) boolean validity.
        levels: Number of levels to produce.

    Returns:
        (gts, valids): lists of arrays, finest first.
    """
    gts = [gt]
    valids = [valid]
    for _ in range(levels - 1):
        prev = gts[-1]
        n, c, h, w = prev.shape
        if h % 2 or w % 2:
            raise ValueError(f"downsample_gt: odd spatial size {h}x{w}")
        pooled = prev.reshape(n, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5)) * 0.5
        vprev = valids[-1]
        vpooled = vprev.reshape(n, h // 2, 2, w // 2, 2).all(axis=(2, 4))
        gts.append(pooled)
        valids.append(vpooled)
    return gts, valids


def robust_loss(
    pred_levels: list[Tensor],
    gt: np.ndarray,
    cfg: TrainConfig,
    params: list[Tensor] | None = None,
    valid: np.ndarray | None = None,
) -> Tensor:
    """Multi-level robust flow loss with weight decay.

    Computes sum over levels of alpha_l * sum over valid pixels of
    (|pred - gt| + epsilon) ** q, plus gamma * sum of squared weights.
    The per-pixel distance is the L1 norm over the (u, v) pair by default
    (cfg.norm selects l1 or l2). gt is pooled down to each level's
    resolution with matching displacement rescaling. For batches the data
    term is averaged over samples; the decay term is added once.

    Args:
        pred_levels: Predictions, finest first, each (N, 2, H, W); level l
            must be exactly half the resolution of level l-1.
        gt: Full-resolution ground truth (N, 2, H, W).
        cfg: Hyperparameters; uses alpha_levels[:len(pred_levels)].
        params: Weight tensors for the decay term (biases excluded by the
            caller). None means no decay term.
        valid: Optional (N, H, W) mask; invalid pixels drop out of the sum.

    Raises:
        ValueError: on shape problems or when no valid pixel remains.
    """
    if not pred_levels:
        raise ValueError("robust_loss: no prediction levels")
    if len(pred_levels) > len(cfg.alpha_levels):
        raise ValueError(
            f"robust_loss: {len(pred_levels)} levels but only "
            f"{len(cfg.alpha_levels)} alpha weights"
        )
    gt = np.asarray(gt, dtype=np.float64)
    if gt.ndim != 4 or gt.shape[1] != 2:
        raise ValueError(f"robust_loss: gt must be (N, 2, H, W), got {gt.shape}")
    n = gt.shape[0]
    if valid is None:
        valid = np.ones((n,) + gt.shape[2:], dtype=bool)
    gts, valids = downsample_gt(gt, valid, len(pred_levels))

    data_term: Tensor | None = None
    for pred, alpha, gt_l, valid_l in zip(pred_levels, cfg.alpha_levels, gts, valids):
        if pred.data.shape != gt_l.shape:
            raise ValueError(
                f"robust_loss: prediction {pred.data.shape} vs level gt {gt_l.shape}"
            )
        if not valid_l.any():
            raise ValueError("robust_loss: no valid ground-truth pixels at some level")
        diff = pred - Tensor(gt_l)
        if cfg.norm == "l1":
            dist = diff.abs().sum(axis=1)
        else:
            dist = ((diff * diff).sum(axis=1) + 1e-24) ** 0.5
        per_pixel = (dist + cfg.epsilon) ** cfg.q
        level_sum = (per_pixel * Tensor(valid_l.astype(np.float64))).sum()
        term = alpha * level_sum
        data_term = term if data_term is None else data_term + term

    loss = data_term / n
    if params and cfg.gamma > 0:
        decay: Tensor | None = None
        for p in params:
            sq = (p * p).sum()
            decay = sq if decay is None else decay + sq
        loss = loss + cfg.gamma * decay
    return loss
