"""Closed-loop adapter: Scene -> PlanOutput via a frozen network."""

from __future__ import annotations

import numpy as np
import torch

from ..plan import PlanOutput
from .features import build_features
from .network import PlannerNetwork


class ModelPlanner:
    """Wraps a frozen PlannerNetwork behind the planner interface."""

    needs_scene = True

    def __init__(self, model: PlannerNetwork):
        self.model = model
        self.model.eval()

    def reset(self, seed=None):
        pass

    def plan(self, scene, world=None) -> PlanOutput:
        ego_speed = 0.0
        if self.model.config.include_ego_speed and world is not None:
            ego_speed = world.ego.speed
        out = infer(self.model, scene, ego_speed=ego_speed)
        return out


def scene_batch(scene, ego_speed: float = 0.0) -> dict:
    f = build_features(scene, ego_speed=ego_speed)
    n = max(len(scene.objects), 1)
    obj_feats = np.zeros((1, n, 7))
    obj_class = np.zeros((1, n), dtype=np.int64)
    obj_mask = np.zeros((1, n), dtype=bool)
    k = len(scene.objects)
    if k:
        obj_feats[0, :k] = f["obj_feats"]
        obj_class[0, :k] = f["obj_class"]
        obj_mask[0, :k] = True
    return {
        "obj_feats": torch.from_numpy(obj_feats),
        "obj_class": torch.from_numpy(obj_class),
        "obj_mask": torch.from_numpy(obj_mask),
        "route": torch.from_numpy(f["route"][None]),
        "speed_idx": torch.tensor([f["speed_idx"]]),
        "raster": torch.from_numpy(f["raster"][None].astype(np.float64)),
        "target": torch.from_numpy(f["target"][None]),
        "ego_speed": torch.tensor([f["ego_speed"]], dtype=torch.float64),
    }


def infer(model: PlannerNetwork, scene, ego_speed: float = 0.0) -> PlanOutput:
    batch = scene_batch(scene, ego_speed)
    with torch.no_grad():
        out = model(batch)
    path = out["path_points"][0].numpy() if "path_points" in out else None
    wps = out["wp_points"][0].numpy() if "wp_points" in out else None
    probs = None
    if "speed_logits" in out:
        probs = torch.softmax(out["speed_logits"][0], dim=-1).numpy()
    return PlanOutput(path_points=path, waypoints=wps, speed_probs=probs)
