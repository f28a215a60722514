"""Ego-frame scene representation: typed oriented boxes, route, raster.

The scene is the planner's sole input.  Coordinates are ego-frame meters
(x forward, y left), yaw CCW radians in (-pi, pi].
"""

from __future__ import annotations

import base64
import math
from dataclasses import dataclass, field
from enum import Enum, IntEnum

import numpy as np

from . import geometry


class SchemaError(ValueError):
    """Malformed wire payload (missing/ill-typed field). Maps to HTTP 400."""


class SceneInvariantError(ValueError):
    """Structurally valid payload violating a domain invariant. Maps to 422."""


class ObjectClass(Enum):
    VEHICLE = "vehicle"
    EMERGENCY_VEHICLE = "emergency_vehicle"
    PEDESTRIAN = "pedestrian"
    STATIC_OBSTACLE = "static_obstacle"
    TRAFFIC_LIGHT_STOP_LINE = "traffic_light_stop_line"
    STOP_SIGN_STOP_LINE = "stop_sign_stop_line"


STOP_LINE_CLASSES = (ObjectClass.TRAFFIC_LIGHT_STOP_LINE, ObjectClass.STOP_SIGN_STOP_LINE)

#: Stop-line boxes are thin bars across the lane ("positions not to cross").
STOP_LINE_HALF_LENGTH = 0.25

#: Minimum speed for a pedestrian to be considered "moving" and for stop-sign
#: satisfaction ("full stop").
MOVING_SPEED_THRESHOLD = 0.1

#: Default 4-entry speed-limit table, km/h.  A configuration guess; the index
#: in the scene is what the planner consumes.
DEFAULT_SPEED_LIMITS_KMH = (30.0, 50.0, 90.0, 120.0)


def kmh_to_ms(v_kmh: float) -> float:
    return v_kmh / 3.6


def speed_limit_ms(index: int, table_kmh=DEFAULT_SPEED_LIMITS_KMH) -> float:
    return kmh_to_ms(table_kmh[index])


@dataclass(frozen=True)
class OrientedBox:
    """Oriented bounding box with a velocity scalar and an object class."""

    center_x: float
    center_y: float
    yaw: float
    half_length: float
    half_width: float
    speed: float
    object_class: ObjectClass

    def __post_init__(self):
        object.__setattr__(self, "yaw", geometry.normalize_angle(float(self.yaw)))
        if not (self.half_length > 0.0 and self.half_width > 0.0):
            raise SceneInvariantError("objects: half_length and half_width must be > 0")
        if self.speed < 0.0:
            raise SceneInvariantError("objects: speed must be >= 0")
        if self.object_class in STOP_LINE_CLASSES and self.speed != 0.0:
            raise SceneInvariantError("objects: stop-line boxes must have speed == 0")
        for name in ("center_x", "center_y", "yaw", "half_length", "half_width", "speed"):
            if not math.isfinite(getattr(self, name)):
                raise SceneInvariantError(f"objects: non-finite {name}")

    @property
    def pose(self):
        return (self.center_x, self.center_y, self.yaw)

    @property
    def half_extent(self):
        return (self.half_length, self.half_width)

    def corners(self) -> np.ndarray:
        return geometry.box_corners(self.center_x, self.center_y, self.yaw,
                                    self.half_length, self.half_width)

    def moved(self, dx: float, dy: float) -> "OrientedBox":
        return OrientedBox(self.center_x + dx, self.center_y + dy, self.yaw,
                           self.half_length, self.half_width, self.speed,
                           self.object_class)


ROUTE_POINT_COUNT = 20
ROUTE_SPACING = 1.0
_ROUTE_SPACING_TOL = 1e-6


class RoutePoints:
    """Exactly 20 ego-frame route points with 1.0 m consecutive spacing."""

    def __init__(self, points):
        pts = np.asarray(points, dtype=float)
        if pts.shape != (ROUTE_POINT_COUNT, 2):
            raise SceneInvariantError(
                f"route: expected {ROUTE_POINT_COUNT} (x, y) points, got shape {pts.shape}")
        gaps = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        if np.any(np.abs(gaps - ROUTE_SPACING) > _ROUTE_SPACING_TOL):
            worst = float(np.max(np.abs(gaps - ROUTE_SPACING)))
            raise SceneInvariantError(
                f"route: consecutive spacing must be {ROUTE_SPACING} m +- {_ROUTE_SPACING_TOL} "
                f"(max deviation {worst:.2e})")
        pts = pts.copy()
        pts.setflags(write=False)
        self._points = pts

    @property
    def points(self) -> np.ndarray:
        return self._points

    def __eq__(self, other):
        return isinstance(other, RoutePoints) and np.array_equal(self._points, other._points)

    def __repr__(self):
        return f"RoutePoints(start={tuple(self._points[0])}, end={tuple(self._points[-1])})"


class CellClass(IntEnum):
    BACKGROUND = 0
    DRIVABLE_ROAD = 1
    SOLID_MARKING = 2
    BROKEN_MARKING = 3


RASTER_SIZE = 128
RASTER_RESOLUTION = 0.5  # m per cell; grid covers 64 x 64 m centered on ego


class RoadRaster:
    """128x128 class-index grid, 0.5 m/cell, ego-centered and ego-aligned.

    Row index runs along ego x (forward), column index along ego y (left).
    """

    def __init__(self, grid):
        g = np.asarray(grid, dtype=np.uint8)
        if g.shape != (RASTER_SIZE, RASTER_SIZE):
            raise SceneInvariantError(f"raster: expected {RASTER_SIZE}x{RASTER_SIZE} grid")
        if g.max(initial=0) > int(CellClass.BROKEN_MARKING):
            raise SceneInvariantError("raster: cell values must be in 0..3")
        g = g.copy()
        g.setflags(write=False)
        self._grid = g

    @classmethod
    def empty(cls) -> "RoadRaster":
        return cls(np.zeros((RASTER_SIZE, RASTER_SIZE), dtype=np.uint8))

    @property
    def grid(self) -> np.ndarray:
        return self._grid

    def __eq__(self, other):
        return isinstance(other, RoadRaster) and np.array_equal(self._grid, other._grid)


def in_range(x: float, y: float) -> bool:
    """Spatial input-range predicate.

    In front (x >= 0): inside the 100 m x 50 m ellipse; behind (x < 0):
    inside the 50 m circle.  The x = 0 boundary uses the ellipse branch.
    """
    if x >= 0.0:
        return (x / 100.0) ** 2 + (y / 50.0) ** 2 <= 1.0
    return x * x + y * y <= 50.0 * 50.0


def filter_by_range(objects) -> list:
    """Keep objects whose centers satisfy `in_range`; order preserved."""
    return [o for o in objects if in_range(o.center_x, o.center_y)]


def box_overlap(a: OrientedBox, b: OrientedBox) -> bool:
    """True iff the two oriented rectangles intersect (separating axes)."""
    return geometry.rect_rect_overlap(a.pose, a.half_extent, b.pose, b.half_extent)


@dataclass(frozen=True)
class Scene:
    """Ego-frame snapshot handed to the planner."""

    objects: tuple
    route: RoutePoints
    speed_limit_index: int
    raster: RoadRaster = field(default_factory=RoadRaster.empty)

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))
        for i, obj in enumerate(self.objects):
            if not isinstance(obj, OrientedBox):
                raise SceneInvariantError(f"objects[{i}]: not an OrientedBox")
            if not in_range(obj.center_x, obj.center_y):
                raise SceneInvariantError(
                    f"objects[{i}]: outside the input range "
                    f"({obj.center_x:.1f}, {obj.center_y:.1f})")
        if not isinstance(self.route, RoutePoints):
            raise SceneInvariantError("route: not a RoutePoints")
        if not (0 <= int(self.speed_limit_index) <= 3):
            raise SceneInvariantError("speed_limit_index: must be in [0, 3]")
        if not isinstance(self.raster, RoadRaster):
            raise SceneInvariantError("raster: not a RoadRaster")


def build_scene(objects, route, speed_limit_index, raster=None) -> Scene:
    """Construct a Scene, applying the range filter to `objects` first."""
    return Scene(
        objects=tuple(filter_by_range(objects)),
        route=route if isinstance(route, RoutePoints) else RoutePoints(route),
        speed_limit_index=int(speed_limit_index),
        raster=raster if raster is not None else RoadRaster.empty(),
    )


# ---------------------------------------------------------------------------
# Wire format
# ---------------------------------------------------------------------------


def scene_to_json(scene: Scene) -> dict:
    """Serialize to the shared JSON schema (dataset, HTTP service, UI)."""
    return {
        "objects": [
            {
                "class": o.object_class.value,
                "x": o.center_x,
                "y": o.center_y,
                "yaw": o.yaw,
                "half_length": o.half_length,
                "half_width": o.half_width,
                "speed": o.speed,
            }
            for o in scene.objects
        ],
        "route": [[float(x), float(y)] for x, y in scene.route.points],
        "speed_limit_index": int(scene.speed_limit_index),
        "raster": base64.b64encode(scene.raster.grid.tobytes()).decode("ascii"),
    }


def _require(payload: dict, key: str, path: str):
    if not isinstance(payload, dict):
        raise SchemaError(f"{path}: expected an object")
    if key not in payload:
        raise SchemaError(f"{path}.{key}: missing field")
    return payload[key]


def _as_float(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(f"{path}: expected a number")
    return float(value)


def scene_from_json(payload: dict) -> Scene:
    """Parse and validate the wire schema.

    Raises SchemaError on malformed structure and SceneInvariantError on
    domain-invariant violations.
    """
    raw_objects = _require(payload, "objects", "scene")
    if not isinstance(raw_objects, list):
        raise SchemaError("scene.objects: expected a list")
    objects = []
    for i, entry in enumerate(raw_objects):
        path = f"scene.objects[{i}]"
        cls_name = _require(entry, "class", path)
        try:
            cls = ObjectClass(cls_name)
        except ValueError:
            raise SchemaError(f"{path}.class: unknown class {cls_name!r}") from None
        objects.append(OrientedBox(
            center_x=_as_float(_require(entry, "x", path), f"{path}.x"),
            center_y=_as_float(_require(entry, "y", path), f"{path}.y"),
            yaw=_as_float(_require(entry, "yaw", path), f"{path}.yaw"),
            half_length=_as_float(_require(entry, "half_length", path), f"{path}.half_length"),
            half_width=_as_float(_require(entry, "half_width", path), f"{path}.half_width"),
            speed=_as_float(_require(entry, "speed", path), f"{path}.speed"),
            object_class=cls,
        ))

    raw_route = _require(payload, "route", "scene")
    if not isinstance(raw_route, list) or any(
            not isinstance(p, (list, tuple)) or len(p) != 2 for p in raw_route):
        raise SchemaError("scene.route: expected a list of [x, y] pairs")
    route_pts = np.array([[_as_float(p[0], "scene.route"), _as_float(p[1], "scene.route")]
                          for p in raw_route], dtype=float).reshape(-1, 2)
    route = RoutePoints(route_pts)

    raw_index = _require(payload, "speed_limit_index", "scene")
    if isinstance(raw_index, bool) or not isinstance(raw_index, int):
        raise SchemaError("scene.speed_limit_index: expected an integer")

    raw_raster = _require(payload, "raster", "scene")
    if not isinstance(raw_raster, str):
        raise SchemaError("scene.raster: expected a base64 string")
    try:
        blob = base64.b64decode(raw_raster, validate=True)
    except Exception:
        raise SchemaError("scene.raster: invalid base64") from None
    if len(blob) != RASTER_SIZE * RASTER_SIZE:
        raise SceneInvariantError(
            f"raster: expected {RASTER_SIZE * RASTER_SIZE} cells, got {len(blob)}")
    grid = np.frombuffer(blob, dtype=np.uint8).reshape(RASTER_SIZE, RASTER_SIZE)

    return Scene(objects=tuple(objects), route=route,
                 speed_limit_index=raw_index, raster=RoadRaster(grid))
