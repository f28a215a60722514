"""Scene -> numeric feature arrays consumed by the tokenizer.

Scales keep typical values O(1) without data-dependent statistics.
"""

from __future__ import annotations

import math

import numpy as np

from ..scene import ObjectClass, Scene

POS_SCALE = 20.0
EXTENT_SCALE = 2.5
SPEED_SCALE = 10.0

N_CLASSES = 6
N_OBJECT_FEATURES = 7  # x, y, sin yaw, cos yaw, half_length, half_width, speed

CLASS_INDEX = {
    ObjectClass.VEHICLE: 0,
    ObjectClass.EMERGENCY_VEHICLE: 1,
    ObjectClass.PEDESTRIAN: 2,
    ObjectClass.STATIC_OBSTACLE: 3,
    ObjectClass.TRAFFIC_LIGHT_STOP_LINE: 4,
    ObjectClass.STOP_SIGN_STOP_LINE: 5,
}


def object_features(scene: Scene) -> tuple[np.ndarray, np.ndarray]:
    """(N, 7) float features and (N,) class indices for the scene objects."""
    n = len(scene.objects)
    feats = np.zeros((n, N_OBJECT_FEATURES))
    classes = np.zeros(n, dtype=np.int64)
    for i, obj in enumerate(scene.objects):
        feats[i] = (
            obj.center_x / POS_SCALE,
            obj.center_y / POS_SCALE,
            math.sin(obj.yaw),
            math.cos(obj.yaw),
            obj.half_length / EXTENT_SCALE,
            obj.half_width / EXTENT_SCALE,
            obj.speed / SPEED_SCALE,
        )
        classes[i] = CLASS_INDEX[obj.object_class]
    return feats, classes


def route_features(scene: Scene) -> np.ndarray:
    """Flattened 40-vector of scaled route points."""
    return (scene.route.points / POS_SCALE).reshape(-1)


def raster_onehot(scene: Scene) -> np.ndarray:
    """(4, 128, 128) one-hot encoding of the raster cell classes."""
    grid = scene.raster.grid
    out = np.zeros((4,) + grid.shape, dtype=np.float32)
    for c in range(4):
        out[c] = grid == c
    return out


def target_point(scene: Scene) -> np.ndarray:
    """Far route point conditioning the decoders (scaled)."""
    return scene.route.points[-1] / POS_SCALE


def build_features(scene: Scene, ego_speed: float = 0.0) -> dict:
    feats, classes = object_features(scene)
    return {
        "obj_feats": feats,
        "obj_class": classes,
        "route": route_features(scene),
        "speed_idx": int(scene.speed_limit_index),
        "raster": raster_onehot(scene),
        "target": target_point(scene),
        "ego_speed": float(ego_speed) / SPEED_SCALE,
    }
