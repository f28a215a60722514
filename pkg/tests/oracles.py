"""Independent brute-force oracles shared by unit and acceptance tests.

These deliberately avoid the library's fast paths: region membership is the
literal textbook predicate, and box intersection is dense point sampling.
"""

import math

import numpy as np


def range_membership_oracle(x: float, y: float) -> bool:
    """Literal front-ellipse / rear-circle membership test."""
    if x >= 0.0:
        return (x / 100.0) ** 2 + (y / 50.0) ** 2 <= 1.0
    return math.hypot(x, y) <= 50.0


def _points_in_rect(points: np.ndarray, pose, half) -> np.ndarray:
    cx, cy, yaw = pose
    c, s = math.cos(yaw), math.sin(yaw)
    dx = points[:, 0] - cx
    dy = points[:, 1] - cy
    local_x = c * dx + s * dy
    local_y = -s * dx + c * dy
    return (np.abs(local_x) <= half[0]) & (np.abs(local_y) <= half[1])


def sample_box_points(pose, half, n_per_axis: int) -> np.ndarray:
    """Dense grid of points covering an oriented rectangle (inclusive edges)."""
    cx, cy, yaw = pose
    u = np.linspace(-half[0], half[0], n_per_axis)
    v = np.linspace(-half[1], half[1], n_per_axis)
    uu, vv = np.meshgrid(u, v)
    c, s = math.cos(yaw), math.sin(yaw)
    x = cx + c * uu - s * vv
    y = cy + s * uu + c * vv
    return np.stack([x.ravel(), y.ravel()], axis=1)


def box_overlap_oracle(a_pose, a_half, b_pose, b_half, n_per_axis: int = 100) -> bool:
    """Dense-sampling intersection test: any sample of A inside B or vice versa."""
    pa = sample_box_points(a_pose, a_half, n_per_axis)
    if bool(np.any(_points_in_rect(pa, b_pose, b_half))):
        return True
    pb = sample_box_points(b_pose, b_half, n_per_axis)
    return bool(np.any(_points_in_rect(pb, a_pose, a_half)))


def box_sample_margin(a_pose, a_half, n_per_axis: int) -> float:
    """Spacing of the sampling grid, the oracle's resolution limit."""
    return max(2 * a_half[0], 2 * a_half[1]) / (n_per_axis - 1)
