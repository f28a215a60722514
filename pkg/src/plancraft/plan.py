"""Planner output containers.

Three head variants share one container: spatial path points (lateral),
temporal waypoints (longitudinal), and a target-speed distribution.  Which
fields are present depends on the producing head.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PATH_POINT_COUNT = 20
PATH_SPACING = 1.0
WAYPOINT_COUNT = 8
WAYPOINT_DT = 0.25  # 4 Hz, a 2 s horizon


def _frozen(a) -> np.ndarray:
    arr = np.asarray(a, dtype=float).copy()
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class PlanOutput:
    """Union of the three head representations; absent fields are None."""

    path_points: np.ndarray | None = None   # (20, 2) ego frame
    waypoints: np.ndarray | None = None     # (8, 2) ego frame, 0.25 s apart
    speed_probs: np.ndarray | None = None   # (K,), sums to 1

    def __post_init__(self):
        if self.path_points is not None:
            pts = _frozen(self.path_points)
            if pts.shape != (PATH_POINT_COUNT, 2):
                raise ValueError(f"path_points: expected ({PATH_POINT_COUNT}, 2)")
            object.__setattr__(self, "path_points", pts)
        if self.waypoints is not None:
            wps = _frozen(self.waypoints)
            if wps.shape != (WAYPOINT_COUNT, 2):
                raise ValueError(f"waypoints: expected ({WAYPOINT_COUNT}, 2)")
            object.__setattr__(self, "waypoints", wps)
        if self.speed_probs is not None:
            probs = _frozen(self.speed_probs)
            if probs.ndim != 1 or probs.shape[0] < 2:
                raise ValueError("speed_probs: expected a K>=2 vector")
            if np.any(probs < 0) or abs(float(probs.sum()) - 1.0) > 1e-6:
                raise ValueError("speed_probs: must be nonnegative and sum to 1")
            object.__setattr__(self, "speed_probs", probs)

    def to_json(self) -> dict:
        return {
            "path_points": None if self.path_points is None else self.path_points.tolist(),
            "waypoints": None if self.waypoints is None else self.waypoints.tolist(),
            "speed_probs": None if self.speed_probs is None else self.speed_probs.tolist(),
        }

    @classmethod
    def from_json(cls, payload: dict) -> "PlanOutput":
        return cls(
            path_points=None if payload.get("path_points") is None
            else np.asarray(payload["path_points"], dtype=float),
            waypoints=None if payload.get("waypoints") is None
            else np.asarray(payload["waypoints"], dtype=float),
            speed_probs=None if payload.get("speed_probs") is None
            else np.asarray(payload["speed_probs"], dtype=float),
        )


_LABEL_SPACING_TOL = 1e-6


@dataclass(frozen=True)
class PlanLabel:
    """Expert supervision: full path + waypoints + scalar target speed.

    `feasible` is a diagnostic flag (False when the expert fell back to the
    full-stop plan); it is not part of the learned targets.
    """

    path_points: np.ndarray   # (20, 2), 1 m chord spacing
    waypoints: np.ndarray     # (8, 2), 0.25 s spacing
    target_speed: float
    feasible: bool = True

    def __post_init__(self):
        pts = _frozen(self.path_points)
        if pts.shape != (PATH_POINT_COUNT, 2):
            raise ValueError(f"path_points: expected ({PATH_POINT_COUNT}, 2)")
        gaps = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        if np.max(np.abs(gaps - PATH_SPACING)) > _LABEL_SPACING_TOL:
            raise ValueError("path_points: spacing must be 1.0 m")
        object.__setattr__(self, "path_points", pts)
        wps = _frozen(self.waypoints)
        if wps.shape != (WAYPOINT_COUNT, 2):
            raise ValueError(f"waypoints: expected ({WAYPOINT_COUNT}, 2)")
        object.__setattr__(self, "waypoints", wps)
        if not (0.0 <= self.target_speed < 100.0):
            raise ValueError("target_speed: out of range")

    def to_plan_output(self) -> PlanOutput:
        return PlanOutput(path_points=self.path_points, waypoints=self.waypoints)

    def to_json(self) -> dict:
        return {
            "path_points": self.path_points.tolist(),
            "waypoints": self.waypoints.tolist(),
            "target_speed": float(self.target_speed),
            "feasible": bool(self.feasible),
        }

    @classmethod
    def from_json(cls, payload: dict) -> "PlanLabel":
        return cls(
            path_points=np.asarray(payload["path_points"], dtype=float),
            waypoints=np.asarray(payload["waypoints"], dtype=float),
            target_speed=float(payload["target_speed"]),
            feasible=bool(payload.get("feasible", True)),
        )
