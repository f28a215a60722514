"""Lane-graph road map: centerline polylines with widths and markings.

A desk-scale stand-in for a full HD map: enough structure to render the
BEV road raster and to reason about lanes and lane changes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

MIN_LANE_WIDTH = 2.0


class MarkingType(Enum):
    NONE = "none"
    SOLID = "solid"
    BROKEN = "broken"


@dataclass(frozen=True)
class Lane:
    """One lane: centerline polyline, width, travel direction, boundary markings.

    `forward` is True when traffic travels in polyline order.  Boundary
    markings are relative to polyline order (left = +normal).
    """

    centerline: np.ndarray
    width: float
    forward: bool = True
    marking_left: MarkingType = MarkingType.NONE
    marking_right: MarkingType = MarkingType.NONE

    def __post_init__(self):
        pts = np.asarray(self.centerline, dtype=float)
        if pts.ndim != 2 or pts.shape[0] < 2 or pts.shape[1] != 2:
            raise ValueError("lane centerline needs >= 2 (x, y) points")
        if not self.width > MIN_LANE_WIDTH:
            raise ValueError(f"lane width must be > {MIN_LANE_WIDTH} m")
        pts = pts.copy()
        pts.setflags(write=False)
        object.__setattr__(self, "centerline", pts)


@dataclass(frozen=True)
class RoadMap:
    """Lanes plus lane-change adjacency (pairs of lane indices)."""

    lanes: tuple
    adjacency: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "lanes", tuple(self.lanes))
        object.__setattr__(self, "adjacency", tuple(tuple(p) for p in self.adjacency))
        for a, b in self.adjacency:
            if not (0 <= a < len(self.lanes) and 0 <= b < len(self.lanes)):
                raise ValueError(f"adjacency ({a}, {b}) out of lane range")


def empty_map() -> RoadMap:
    return RoadMap(lanes=())


def straight_two_lane_map(length: float = 400.0, lane_width: float = 3.5,
                          x0: float = -50.0) -> RoadMap:
    """Two opposing lanes along +x; ego lane centered at y = -lane_width/2.

    Lane 0 carries ego traffic (+x), lane 1 is the oncoming lane.  The shared
    centerline marking is broken (overtaking allowed), outer edges solid.
    """
    xs = np.array([x0, x0 + length])
    half = lane_width / 2.0
    ego = Lane(
        centerline=np.stack([xs, np.full(2, -half)], axis=1),
        width=lane_width,
        forward=True,
        marking_left=MarkingType.BROKEN,
        marking_right=MarkingType.SOLID,
    )
    oncoming = Lane(
        centerline=np.stack([xs[::-1], np.full(2, half)], axis=1),
        width=lane_width,
        forward=True,
        marking_left=MarkingType.BROKEN,
        marking_right=MarkingType.SOLID,
    )
    return RoadMap(lanes=(ego, oncoming), adjacency=((0, 1), (1, 0)))
