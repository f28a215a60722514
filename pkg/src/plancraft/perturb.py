"""Scene perturbations, parameter sweeps, and probe measurements.

Perturbations are ordered op lists applied to a Scene; sweeps run a frozen
model across one perturbation axis and record decoded target speeds, full
plans, and path clearances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import geometry
from .control import target_speed_from_waypoints
from .plan import PlanOutput
from .raster import render_road_raster, resample_raster
from .scene import (STOP_LINE_CLASSES, OrientedBox, RoutePoints, Scene,
                    build_scene, scene_from_json)
from .twohot import two_hot_decode
from .world import EGO_HALF_LENGTH, EGO_HALF_WIDTH


class PerturbationError(ValueError):
    """Unresolvable op (bad object id, malformed spec)."""


@dataclass(frozen=True)
class TranslateObject:
    index: int
    dx: float
    dy: float


@dataclass(frozen=True)
class RotateEgo:
    yaw: float


@dataclass(frozen=True)
class TranslateEgo:
    dx: float
    dy: float


@dataclass(frozen=True)
class RemoveObject:
    index: int


@dataclass(frozen=True)
class AddObject:
    box: OrientedBox


@dataclass(frozen=True)
class SetSpeedLimit:
    index: int


def spec_to_json(ops) -> list:
    out = []
    for op in ops:
        if isinstance(op, TranslateObject):
            out.append({"op": "translate_object", "id": op.index,
                        "dx": op.dx, "dy": op.dy})
        elif isinstance(op, RotateEgo):
            out.append({"op": "rotate_ego", "yaw": op.yaw})
        elif isinstance(op, TranslateEgo):
            out.append({"op": "translate_ego", "dx": op.dx, "dy": op.dy})
        elif isinstance(op, RemoveObject):
            out.append({"op": "remove_object", "id": op.index})
        elif isinstance(op, AddObject):
            b = op.box
            out.append({"op": "add_object", "box": {
                "class": b.object_class.value, "x": b.center_x, "y": b.center_y,
                "yaw": b.yaw, "half_length": b.half_length,
                "half_width": b.half_width, "speed": b.speed}})
        elif isinstance(op, SetSpeedLimit):
            out.append({"op": "set_speed_limit", "index": op.index})
        else:
            raise PerturbationError(f"unknown op {op!r}")
    return out


def spec_from_json(payload) -> list:
    from .scene import ObjectClass, SchemaError
    if not isinstance(payload, list):
        raise SchemaError("spec.ops: expected a list")
    ops = []
    for i, entry in enumerate(payload):
        if not isinstance(entry, dict) or "op" not in entry:
            raise SchemaError(f"spec.ops[{i}]: expected an object with 'op'")
        kind = entry["op"]
        try:
            if kind == "translate_object":
                ops.append(TranslateObject(int(entry["id"]),
                                           float(entry["dx"]), float(entry["dy"])))
            elif kind == "rotate_ego":
                ops.append(RotateEgo(float(entry["yaw"])))
            elif kind == "translate_ego":
                ops.append(TranslateEgo(float(entry["dx"]), float(entry["dy"])))
            elif kind == "remove_object":
                ops.append(RemoveObject(int(entry["id"])))
            elif kind == "add_object":
                b = entry["box"]
                ops.append(AddObject(OrientedBox(
                    float(b["x"]), float(b["y"]), float(b["yaw"]),
                    float(b["half_length"]), float(b["half_width"]),
                    float(b["speed"]), ObjectClass(b["class"]))))
            elif kind == "set_speed_limit":
                ops.append(SetSpeedLimit(int(entry["index"])))
            else:
                raise SchemaError(f"spec.ops[{i}].op: unknown op {kind!r}")
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"spec.ops[{i}]: {exc}") from None
    return ops


def apply(scene: Scene, ops, road_map=None, ego_pose=None):
    """Apply ops in order; returns (scene, flags).

    Object ids are indices into the scene's object list at the time each op
    runs.  Ego-frame ops re-express all content in the new frame; the
    raster is re-rendered when the source map (and the scene's global ego
    pose) is available, else resampled by nearest neighbor.  The range
    filter is re-applied after all ops.  An op that pushes the ego off the
    drivable area is flagged, not fatal.
    """
    objects = list(scene.objects)
    route = scene.route.points.copy()
    raster = scene.raster
    speed_limit = scene.speed_limit_index
    flags: list[str] = []
    ego_global = None if ego_pose is None else tuple(ego_pose)

    def resolve(index: int) -> int:
        if not (0 <= index < len(objects)):
            raise PerturbationError(
                f"object id {index} does not resolve (scene has {len(objects)})")
        return index

    for op in ops:
        if isinstance(op, TranslateObject):
            i = resolve(op.index)
            objects[i] = objects[i].moved(op.dx, op.dy)
        elif isinstance(op, RemoveObject):
            del objects[resolve(op.index)]
        elif isinstance(op, AddObject):
            objects.append(op.box)
        elif isinstance(op, SetSpeedLimit):
            if not (0 <= op.index <= 3):
                raise PerturbationError(f"speed limit index {op.index} out of range")
            speed_limit = op.index
        elif isinstance(op, (RotateEgo, TranslateEgo)):
            if isinstance(op, RotateEgo):
                delta = (0.0, 0.0, op.yaw)
            else:
                delta = (op.dx, op.dy, 0.0)
            moved = []
            for obj in objects:
                pose = geometry.to_ego_frame(obj.pose, delta)
                moved.append(OrientedBox(pose[0], pose[1], pose[2], obj.half_length,
                                         obj.half_width, obj.speed, obj.object_class))
            objects = moved
            route = geometry.points_to_ego_frame(route, delta)
            if road_map is not None and ego_global is not None:
                ego_global = geometry.from_ego_frame(delta, ego_global)
                raster = render_road_raster(road_map, ego_global)
                if not _on_any_lane(ego_global[:2], road_map):
                    flags.append("ego off drivable area")
            else:
                raster = resample_raster(raster, delta[0], delta[1], delta[2])
        else:
            raise PerturbationError(f"unknown op {op!r}")

    scene_out = build_scene(objects, RoutePoints(route), speed_limit, raster)
    return scene_out, flags


def _on_any_lane(point, road_map) -> bool:
    p = np.asarray(point, dtype=float).reshape(1, 2)
    return any(
        geometry.polyline_distance_to_points(p, lane.centerline)[0] <= lane.width / 2.0
        for lane in road_map.lanes)


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------

AXIS_KINDS = ("ego_rotation", "ego_distance", "speed_limit_index", "object_lateral")


@dataclass(frozen=True)
class SweepAxis:
    kind: str
    units: str = ""
    object_index: int | None = None

    def __post_init__(self):
        if self.kind not in AXIS_KINDS:
            raise PerturbationError(f"unknown sweep axis {self.kind!r}")
        if self.kind == "object_lateral" and self.object_index is None:
            raise PerturbationError("object_lateral axis needs object_index")

    def ops_for(self, value: float, scene: Scene):
        if self.kind == "ego_rotation":
            return [RotateEgo(value)]
        if self.kind == "ego_distance":
            tangent = scene.route.points[1] - scene.route.points[0]
            tangent = tangent / np.linalg.norm(tangent)
            return [TranslateEgo(float(value * tangent[0]), float(value * tangent[1]))]
        if self.kind == "speed_limit_index":
            return [SetSpeedLimit(int(round(value)))]
        return [TranslateObject(self.object_index, 0.0, float(value))]


@dataclass
class SweepPoint:
    value: float
    target_speed: float | None
    min_clearance: float | None
    plan: PlanOutput | None
    error: str | None = None


@dataclass
class SweepResult:
    axis: SweepAxis
    values: list
    points: list
    model_id: str = ""
    scene_id: str = ""

    def speeds(self) -> list:
        return [p.target_speed for p in self.points]

    def to_json(self) -> dict:
        return {
            "axis": {"kind": self.axis.kind, "units": self.axis.units,
                     "object_index": self.axis.object_index},
            "model_id": self.model_id,
            "scene_id": self.scene_id,
            "points": [{
                "value": p.value,
                "target_speed": p.target_speed,
                "min_clearance": p.min_clearance,
                "plan": None if p.plan is None else p.plan.to_json(),
                "error": p.error,
            } for p in self.points],
            "jumps": [[v, d] for v, d in jump_detector(self)],
        }


def decoded_target_speed(plan: PlanOutput, speed_bins) -> float:
    """Decode via the head the model actually has."""
    if plan.waypoints is not None:
        return target_speed_from_waypoints(plan.waypoints)
    if plan.speed_probs is not None:
        return two_hot_decode(plan.speed_probs, speed_bins)
    raise PerturbationError("plan has neither waypoints nor speed distribution")


def sweep(scene: Scene, axis: SweepAxis, values, infer_fn, speed_bins, *,
          road_map=None, ego_pose=None, obstacles=None,
          model_id: str = "", scene_id: str = "") -> SweepResult:
    """Run inference across one perturbation axis.

    `infer_fn(scene) -> PlanOutput` wraps the frozen model.  Per-point
    inference faults are recorded, not raised.  Values must be strictly
    ascending (>= 2 of them).
    """
    values = [float(v) for v in values]
    if len(values) < 2:
        raise PerturbationError("sweep needs at least 2 points")
    if any(b <= a for a, b in zip(values, values[1:])):
        raise PerturbationError("sweep values must be strictly ascending")

    points = []
    for value in values:
        try:
            perturbed, _ = apply(scene, axis.ops_for(value, scene),
                                 road_map=road_map, ego_pose=ego_pose)
            plan = infer_fn(perturbed)
            speed = decoded_target_speed(plan, speed_bins)
            clearance = None
            if plan.path_points is not None:
                obs = obstacles if obstacles is not None else [
                    o for o in perturbed.objects
                    if o.object_class not in STOP_LINE_CLASSES]
                if obs:
                    clearance = min_clearance(plan, (EGO_HALF_LENGTH, EGO_HALF_WIDTH),
                                              obs)
            points.append(SweepPoint(value, speed, clearance, plan))
        except Exception as exc:  # noqa: BLE001 - per-point fault isolation
            points.append(SweepPoint(value, None, None, None,
                                     error=f"{type(exc).__name__}: {exc}"))
    return SweepResult(axis=axis, values=values, points=points,
                       model_id=model_id, scene_id=scene_id)


def jump_detector(result: SweepResult, threshold: float = 3.0):
    """Consecutive-point target-speed increases exceeding `threshold`.

    Returns (axis value at the jump landing, speed delta) pairs in axis
    order; pairs involving failed points are skipped.
    """
    jumps = []
    pts = result.points
    for a, b in zip(pts, pts[1:]):
        if a.target_speed is None or b.target_speed is None:
            continue
        delta = b.target_speed - a.target_speed
        if delta > threshold:
            jumps.append((b.value, delta))
    return jumps


def min_clearance(plan: PlanOutput, ego_half, obstacles, step: float = 0.25) -> float:
    """Minimum signed distance of the ego box swept along the plan's path.

    Poses are interpolated at most `step` apart along the path with heading
    from the local tangent; negative values mean overlap.  Lower-bounds the
    continuous clearance within one interpolation step.
    """
    if plan.path_points is None:
        raise PerturbationError("plan has no path points")
    path = np.asarray(plan.path_points, dtype=float)
    arcs = geometry.polyline_lengths(path)
    if arcs[-1] < 1e-6:
        raise PerturbationError("degenerate path (all points coincident)")

    boxes = [(o.pose, o.half_extent) for o in obstacles]
    best = math.inf
    for s in np.arange(0.0, arcs[-1] + step / 2, step):
        s = min(s, float(arcs[-1]))
        pos = geometry.point_at_arc(path, s)
        tan = geometry.tangent_at_arc(path, s)
        pose = (float(pos[0]), float(pos[1]), math.atan2(tan[1], tan[0]))
        for obs_pose, obs_half in boxes:
            d = geometry.rect_rect_signed_distance(pose, ego_half, obs_pose, obs_half)
            if d < best:
                best = d
    return float(best)
