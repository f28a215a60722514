"""Training loss: L1 on point sets plus cross-entropy on two-hot speed."""

from __future__ import annotations

import numpy as np
import torch

from ..twohot import two_hot_encode
from .config import ModelConfig
from .network import NumericalFault


def label_deltas(points: torch.Tensor) -> torch.Tensor:
    """Per-step deltas whose prefix sum reconstructs the absolute points."""
    return torch.cat([points[..., :1, :],
                      points[..., 1:, :] - points[..., :-1, :]], dim=-2)


def two_hot_targets(speeds: np.ndarray, bins) -> np.ndarray:
    out = np.zeros((len(speeds), len(bins)))
    for i, v in enumerate(speeds):
        out[i], _ = two_hot_encode(float(v), bins)
    return out


def planner_loss(outputs: dict, targets: dict, config: ModelConfig):
    """Total loss and per-term breakdown.

    Point terms are mean absolute error on the absolute point sets for
    every generator (the cumulative sum amplifies per-step errors, so
    supervising the linear head's deltas directly mis-weights early steps).
    The PATH head adds cross-entropy between predicted speed logits and the
    two-hot target distribution.  Unit weights throughout.
    """
    parts = {}
    if config.predicts_path:
        parts["path"] = (outputs["path_points"] - targets["path_points"]).abs().mean()
    if config.predicts_waypoints:
        parts["wp"] = (outputs["wp_points"] - targets["waypoints"]).abs().mean()
    if config.predicts_speed:
        logp = torch.log_softmax(outputs["speed_logits"], dim=-1)
        parts["speed"] = -(targets["speed_twohot"] * logp).sum(dim=-1).mean()

    total = sum(parts.values())
    if not torch.isfinite(total):
        raise NumericalFault("non-finite loss")
    return total, {k: float(v.detach()) for k, v in parts.items()}
