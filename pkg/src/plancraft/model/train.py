"""Training loop: Adam with the paper-style schedule (final epoch at lr/10)."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from ..plan import PATH_POINT_COUNT, WAYPOINT_COUNT
from .config import ModelConfig
from .features import build_features
from .losses import planner_loss, two_hot_targets
from .network import DTYPE, PlannerNetwork


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 128
    lr: float = 1e-4
    final_lr_factor: float = 0.1
    final_lr_epochs: int = 1     # trailing epochs run at the reduced rate
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    seed: int = 0
    val_frac: float = 0.1
    divergence_limit: float = 1e3
    stop_at_train_loss: float | None = None   # early stop once reached


@dataclass
class TrainResult:
    model: PlannerNetwork
    history: list = field(default_factory=list)   # (epoch, lr, train, val)
    final_val_loss: float = float("nan")
    final_train_loss: float = float("nan")
    epochs_run: int = 0


def prepare_arrays(samples) -> dict:
    """Pack TrainingSamples into padded numpy arrays (raster kept uint8)."""
    n = len(samples)
    n_obj = max((len(s.scene.objects) for s in samples), default=0)
    n_obj = max(n_obj, 1)
    arrays = {
        "obj_feats": np.zeros((n, n_obj, 7)),
        "obj_class": np.zeros((n, n_obj), dtype=np.int64),
        "obj_mask": np.zeros((n, n_obj), dtype=bool),
        "route": np.zeros((n, 40)),
        "speed_idx": np.zeros(n, dtype=np.int64),
        "raster": np.zeros((n, 128, 128), dtype=np.uint8),
        "target": np.zeros((n, 2)),
        "ego_speed": np.zeros(n),
        "path_points": np.zeros((n, PATH_POINT_COUNT, 2)),
        "waypoints": np.zeros((n, WAYPOINT_COUNT, 2)),
        "speed": np.zeros(n),
    }
    for i, s in enumerate(samples):
        f = build_features(s.scene)
        k = len(s.scene.objects)
        arrays["obj_feats"][i, :k] = f["obj_feats"]
        arrays["obj_class"][i, :k] = f["obj_class"]
        arrays["obj_mask"][i, :k] = True
        arrays["route"][i] = f["route"]
        arrays["speed_idx"][i] = f["speed_idx"]
        arrays["raster"][i] = s.scene.raster.grid
        arrays["target"][i] = f["target"]
        arrays["path_points"][i] = s.label.path_points
        arrays["waypoints"][i] = s.label.waypoints
        arrays["speed"][i] = s.label.target_speed
    return arrays


def _raster_onehot_batch(grids: np.ndarray) -> torch.Tensor:
    out = np.zeros((grids.shape[0], 4, 128, 128))
    for c in range(4):
        out[:, c] = grids == c
    return torch.from_numpy(out)


def make_batch(arrays: dict, idx: np.ndarray, bins) -> tuple[dict, dict]:
    batch = {
        "obj_feats": torch.from_numpy(arrays["obj_feats"][idx]),
        "obj_class": torch.from_numpy(arrays["obj_class"][idx]),
        "obj_mask": torch.from_numpy(arrays["obj_mask"][idx]),
        "route": torch.from_numpy(arrays["route"][idx]),
        "speed_idx": torch.from_numpy(arrays["speed_idx"][idx]),
        "raster": _raster_onehot_batch(arrays["raster"][idx]),
        "target": torch.from_numpy(arrays["target"][idx]),
        "ego_speed": torch.from_numpy(arrays["ego_speed"][idx]),
    }
    targets = {
        "path_points": torch.from_numpy(arrays["path_points"][idx]),
        "waypoints": torch.from_numpy(arrays["waypoints"][idx]),
        "speed_twohot": torch.from_numpy(two_hot_targets(arrays["speed"][idx], bins)),
    }
    return batch, targets


def evaluate_loss(model: PlannerNetwork, arrays: dict, idx: np.ndarray,
                  batch_size: int = 256) -> float:
    """Deterministic full-pass loss (fixed order, mean over samples)."""
    model.eval()
    total, count = 0.0, 0
    bins = model.config.speed_bins
    with torch.no_grad():
        for lo in range(0, len(idx), batch_size):
            sub = idx[lo:lo + batch_size]
            batch, targets = make_batch(arrays, sub, bins)
            out = model(batch)
            loss, _ = planner_loss(out, targets, model.config)
            total += float(loss) * len(sub)
            count += len(sub)
    return total / max(count, 1)


def evaluate_point_error(model: PlannerNetwork, arrays: dict, idx: np.ndarray,
                         batch_size: int = 256) -> dict:
    """Point-space errors in meters: per-coordinate L1 and euclidean ADE."""
    model.eval()
    bins = model.config.speed_bins
    sums = {"path_l1": 0.0, "wp_l1": 0.0, "path_ade": 0.0, "wp_ade": 0.0}
    counts = {"path": 0, "wp": 0}
    with torch.no_grad():
        for lo in range(0, len(idx), batch_size):
            sub = idx[lo:lo + batch_size]
            batch, targets = make_batch(arrays, sub, bins)
            out = model(batch)
            if "path_points" in out:
                diff = out["path_points"] - targets["path_points"]
                sums["path_l1"] += float(diff.abs().sum())
                sums["path_ade"] += float(diff.norm(dim=-1).sum())
                counts["path"] += diff.shape[0] * diff.shape[1]
            if "wp_points" in out:
                diff = out["wp_points"] - targets["waypoints"]
                sums["wp_l1"] += float(diff.abs().sum())
                sums["wp_ade"] += float(diff.norm(dim=-1).sum())
                counts["wp"] += diff.shape[0] * diff.shape[1]
    result = {}
    if counts["path"]:
        result["path_l1"] = sums["path_l1"] / (2 * counts["path"])
        result["path_ade"] = sums["path_ade"] / counts["path"]
    if counts["wp"]:
        result["wp_l1"] = sums["wp_l1"] / (2 * counts["wp"])
        result["wp_ade"] = sums["wp_ade"] / counts["wp"]
    l1_terms = [v for k, v in result.items() if k.endswith("_l1")]
    result["point_l1"] = float(np.mean(l1_terms)) if l1_terms else float("nan")
    return result


def train(samples_or_arrays, config: ModelConfig,
          tconfig: TrainConfig | None = None, log=None,
          epoch_hook=None, lr_override=None) -> TrainResult:
    """Train a planner; deterministic for a fixed (data, configs, seed).

    `epoch_hook(epoch, model)` runs after each epoch; returning True stops
    training early.  `lr_override(epoch) -> float | None` replaces the
    default schedule (flat rate with a reduced tail) when it returns a
    value; both are used by metric-gated sanity runs.
    """
    tconfig = tconfig or TrainConfig()
    arrays = (samples_or_arrays if isinstance(samples_or_arrays, dict)
              else prepare_arrays(samples_or_arrays))
    n = arrays["route"].shape[0]
    if n == 0:
        raise ValueError("empty dataset")

    rng = np.random.default_rng(tconfig.seed)
    perm = rng.permutation(n)
    n_val = int(round(tconfig.val_frac * n))
    val_idx = perm[:n_val]
    train_idx = perm[n_val:]
    if len(train_idx) == 0:
        raise ValueError("no training samples after validation split")

    torch.manual_seed(tconfig.seed)
    model = PlannerNetwork(config)
    optimizer = torch.optim.Adam(model.parameters(), lr=tconfig.lr,
                                 betas=tconfig.betas, eps=tconfig.eps)
    result = TrainResult(model=model)
    bins = config.speed_bins

    for epoch in range(1, tconfig.epochs + 1):
        reduced = epoch > tconfig.epochs - tconfig.final_lr_epochs
        lr = tconfig.lr * (tconfig.final_lr_factor if reduced else 1.0)
        if lr_override is not None:
            override = lr_override(epoch)
            if override is not None:
                lr = float(override)
        for group in optimizer.param_groups:
            group["lr"] = lr
        model.train()
        order = rng.permutation(train_idx)
        t0 = time.time()
        running, seen = 0.0, 0
        for lo in range(0, len(order), tconfig.batch_size):
            sub = order[lo:lo + tconfig.batch_size]
            batch, targets = make_batch(arrays, sub, bins)
            out = model(batch)
            loss, _ = planner_loss(out, targets, config)
            loss_value = float(loss.detach())
            if not math.isfinite(loss_value) or loss_value > tconfig.divergence_limit:
                raise TrainingDiverged(
                    f"epoch {epoch}, samples {lo}-{lo + len(sub)}: loss {loss_value:.3e}")
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            running += loss_value * len(sub)
            seen += len(sub)
        train_loss = running / seen
        val_loss = evaluate_loss(model, arrays, val_idx) if n_val else float("nan")
        result.history.append((epoch, lr, train_loss, val_loss))
        result.epochs_run = epoch
        if log is not None:
            log(f"epoch {epoch:3d}/{tconfig.epochs}  lr {lr:.1e}  "
                f"train {train_loss:.4f}  val {val_loss:.4f}  "
                f"({time.time() - t0:.1f}s)")
        if (tconfig.stop_at_train_loss is not None
                and train_loss < tconfig.stop_at_train_loss):
            break
        if epoch_hook is not None and epoch_hook(epoch, model):
            break

    result.final_train_loss = result.history[-1][2]
    result.final_val_loss = result.history[-1][3]
    return result


def validation_loss_of(model: PlannerNetwork, samples_or_arrays, seed: int,
                       val_frac: float) -> float:
    """Recompute the validation loss a training run reported (same split)."""
    arrays = (samples_or_arrays if isinstance(samples_or_arrays, dict)
              else prepare_arrays(samples_or_arrays))
    n = arrays["route"].shape[0]
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    n_val = int(round(val_frac * n))
    return evaluate_loss(model, arrays, perm[:n_val])
