"""Global-frame closed-loop world: kinematic ego, scripted actors, infractions.

A `World` is single-threaded mutable state; parallelism happens across
independent worlds.  All randomness is drawn at construction time from the
world seed, so stepping is fully deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import geometry
from .raster import render_road_raster
from .roadmap import RoadMap
from .scene import (MOVING_SPEED_THRESHOLD, STOP_LINE_HALF_LENGTH, ObjectClass,
                    OrientedBox, RoadRaster, RoutePoints, Scene, build_scene)

EGO_HALF_LENGTH = 2.45
EGO_HALF_WIDTH = 0.925
EGO_WHEELBASE = 2.9
MAX_STEER = 1.22
MAX_DT = 0.1


@dataclass(frozen=True)
class EgoState:
    x: float
    y: float
    yaw: float
    speed: float
    wheelbase: float = EGO_WHEELBASE

    def __post_init__(self):
        if self.speed < 0.0:
            raise ValueError("ego speed must be >= 0 (no reverse)")

    @property
    def pose(self):
        return (self.x, self.y, self.yaw)


def step_ego(state: EgoState, control, dt: float) -> EgoState:
    """Kinematic bicycle update; speed clamps at zero (no reverse gear)."""
    steer, accel = float(control[0]), float(control[1])
    if not (math.isfinite(steer) and math.isfinite(accel)):
        raise ValueError("non-finite control")
    if abs(steer) > MAX_STEER + 1e-9:
        raise ValueError(f"|steer| must be <= {MAX_STEER}")
    if not (0.0 < dt <= MAX_DT):
        raise ValueError(f"dt must be in (0, {MAX_DT}]")
    v = state.speed
    x = state.x + v * math.cos(state.yaw) * dt
    y = state.y + v * math.sin(state.yaw) * dt
    yaw = state.yaw + (v / state.wheelbase) * math.tan(steer) * dt
    speed = max(0.0, v + accel * dt)
    return EgoState(x, y, geometry.normalize_angle(yaw), speed, state.wheelbase)


class ScenarioKind(Enum):
    CONSTRUCTION_OBSTACLE = "construction_obstacle"
    CONSTRUCTION_OBSTACLE_TWO_WAYS = "construction_obstacle_two_ways"
    PARKED_OBSTACLE = "parked_obstacle"
    ACCIDENT = "accident"
    PARKING_CUT_IN = "parking_cut_in"
    PEDESTRIAN_CROSSING = "pedestrian_crossing"
    RED_LIGHT = "red_light"
    STOP_SIGN = "stop_sign"
    INVADING_TURN = "invading_turn"


@dataclass(frozen=True)
class ScenarioTemplate:
    """Parameterized scenario; every field the probes perturb is exposed."""

    kind: ScenarioKind
    trigger_distance: float = 25.0       # m along route before the anchor
    obstacle_arc: float = 80.0           # route arc of the scenario anchor
    obstacle_lateral: float = 0.0        # offset from ego-lane center, +left
    oncoming_rate: float = 0.0           # oncoming vehicles per second
    oncoming_speed: float = 8.0
    cutin_speed_threshold: float = 5.0   # ego speed needed to arm the cut-in
    encroach_depth: float = 0.0          # lateral intrusion of oncoming traffic
    timeout: float = 60.0                # s after trigger -> ScenarioTimeout
    speed_limit_index: int = 0
    route_length: float = 160.0

    def __post_init__(self):
        checks = [
            (0.0 < self.trigger_distance <= 200.0, "trigger_distance in (0, 200]"),
            (10.0 <= self.obstacle_arc <= self.route_length, "obstacle_arc within route"),
            (abs(self.obstacle_lateral) <= 5.0, "obstacle_lateral in [-5, 5]"),
            (0.0 <= self.oncoming_rate <= 1.0, "oncoming_rate in [0, 1]"),
            (0.0 < self.oncoming_speed <= 30.0, "oncoming_speed in (0, 30]"),
            (0.0 <= self.cutin_speed_threshold <= 30.0, "cutin_speed_threshold in [0, 30]"),
            (0.0 <= self.encroach_depth <= 3.0, "encroach_depth in [0, 3]"),
            (5.0 <= self.timeout <= 600.0, "timeout in [5, 600]"),
            (0 <= self.speed_limit_index <= 3, "speed_limit_index in [0, 3]"),
            (20.0 <= self.route_length <= 2000.0, "route_length in [20, 2000]"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ValueError(f"scenario template: {msg}")
        for name in ("trigger_distance", "obstacle_arc", "obstacle_lateral",
                     "oncoming_rate", "oncoming_speed", "cutin_speed_threshold",
                     "encroach_depth", "timeout", "route_length"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"scenario template: non-finite {name}")


class InfractionKind(Enum):
    COLLISION_PEDESTRIAN = "collision_pedestrian"
    COLLISION_VEHICLE = "collision_vehicle"
    COLLISION_STATIC = "collision_static"
    RED_LIGHT = "red_light"
    STOP_SIGN = "stop_sign"
    SCENARIO_TIMEOUT = "scenario_timeout"
    ROUTE_DEVIATION = "route_deviation"
    BLOCKED = "blocked"


@dataclass(frozen=True)
class InfractionEvent:
    kind: InfractionKind
    time: float
    x: float
    y: float

    def to_json(self) -> dict:
        return {"kind": self.kind.value, "time": self.time, "x": self.x, "y": self.y}

    @classmethod
    def from_json(cls, payload: dict) -> "InfractionEvent":
        return cls(InfractionKind(payload["kind"]), float(payload["time"]),
                   float(payload["x"]), float(payload["y"]))


@dataclass
class Actor:
    """A scripted traffic participant (mutable simulation state)."""

    actor_id: int
    object_class: ObjectClass
    x: float
    y: float
    yaw: float
    half_length: float
    half_width: float
    speed: float = 0.0
    behavior: str = "static"       # static | oncoming | pedestrian | cutin
    path: np.ndarray | None = None
    path_s: float = 0.0
    cruise_speed: float = 0.0
    accel: float = 2.5
    active: bool = False           # script armed and running
    done: bool = False             # despawned
    spawn_time: float = 0.0        # for pre-scheduled oncoming traffic

    @property
    def pose(self):
        return (self.x, self.y, self.yaw)

    @property
    def half_extent(self):
        return (self.half_length, self.half_width)

    def _follow_path(self, dt: float):
        self.path_s += self.speed * dt
        pos = geometry.point_at_arc(self.path, self.path_s)
        tangent = geometry.tangent_at_arc(self.path, self.path_s)
        self.x, self.y = float(pos[0]), float(pos[1])
        self.yaw = math.atan2(tangent[1], tangent[0])


@dataclass
class _StopLine:
    kind: ScenarioKind            # RED_LIGHT or STOP_SIGN
    arc: float
    lane_half_width: float
    satisfied: bool = False       # stop-sign: full stop achieved
    light_red: bool = True        # red-light: current phase
    green_at: float | None = None


class World:
    """Mutable global simulation state for one episode."""

    def __init__(self, road_map: RoadMap, route: np.ndarray,
                 template: ScenarioTemplate, seed: int, *,
                 actors=(), stop_line: _StopLine | None = None,
                 scenario_arc: float | None = None,
                 oncoming_schedule=(), oncoming_path=None,
                 red_duration: float = 8.0,
                 intersection_zones=(),
                 offset_bounds=(-0.75, 4.25), lane_half_width=1.75,
                 stationary_speed: float = MOVING_SPEED_THRESHOLD,
                 blocked_timeout: float = 90.0,
                 route_deviation_limit: float = 8.0):
        self.road_map = road_map
        self.route = np.asarray(route, dtype=float)
        self.route_length = float(geometry.polyline_lengths(self.route)[-1])
        self.template = template
        self.seed = int(seed)
        tangent = geometry.tangent_at_arc(self.route, 0.0)
        # Episodes start at cruise: standstill launches on an empty road are
        # contextually indistinguishable states (the planner never sees ego
        # speed), so they only appear after in-scene stops.
        from .scene import speed_limit_ms
        self.ego = EgoState(float(self.route[0, 0]), float(self.route[0, 1]),
                            math.atan2(tangent[1], tangent[0]),
                            speed_limit_ms(template.speed_limit_index))
        self.time = 0.0
        self.actors = list(actors)
        self.stop_line = stop_line
        self.scenario_arc = float(scenario_arc if scenario_arc is not None
                                  else template.obstacle_arc)
        self.oncoming_schedule = list(oncoming_schedule)  # ascending spawn times
        self.oncoming_path = oncoming_path
        self.red_duration = float(red_duration)
        self.intersection_zones = tuple(intersection_zones)
        self.offset_bounds = tuple(offset_bounds)
        self.lane_half_width = float(lane_half_width)
        self.speed_limit_index = int(template.speed_limit_index)
        self.stationary_speed = float(stationary_speed)
        self.blocked_timeout = float(blocked_timeout)
        self.route_deviation_limit = float(route_deviation_limit)

        self.triggered = False
        self.trigger_time: float | None = None
        self.resolved = False
        self.timeout_fired = False
        self.pending_events: list[InfractionEvent] = []
        self.active_contacts: set[int] = set()
        self.blocked_time = 0.0
        self.terminated: str | None = None
        self._next_actor_id = (max((a.actor_id for a in self.actors), default=-1) + 1)

    # -- queries ------------------------------------------------------------

    def ego_arc_lateral(self):
        arc, lat, _ = geometry.project_to_polyline((self.ego.x, self.ego.y), self.route)
        return arc, lat

    def ego_front_arc(self) -> float:
        return self.ego_arc_lateral()[0] + EGO_HALF_LENGTH

    def ego_box(self):
        return (self.ego.pose, (EGO_HALF_LENGTH, EGO_HALF_WIDTH))

    def live_actors(self):
        return [a for a in self.actors if not a.done]

    def route_pose_at(self, arc: float):
        p = geometry.point_at_arc(self.route, arc)
        t = geometry.tangent_at_arc(self.route, arc)
        return float(p[0]), float(p[1]), math.atan2(t[1], t[0])

    def add_actor(self, **kwargs) -> Actor:
        actor = Actor(actor_id=self._next_actor_id, **kwargs)
        self._next_actor_id += 1
        self.actors.append(actor)
        return actor

    def red_light_active(self) -> bool:
        sl = self.stop_line
        return (sl is not None and sl.kind is ScenarioKind.RED_LIGHT and sl.light_red)

    def stop_sign_pending(self) -> bool:
        sl = self.stop_line
        return (sl is not None and sl.kind is ScenarioKind.STOP_SIGN and not sl.satisfied)


def tick_scenario(world: World, dt: float) -> World:
    """Advance scripted actors and scenario logic by `dt`.

    Triggers fire on ego distance to the scenario anchor; the parking cut-in
    additionally requires ego speed above the template threshold, so a
    slow approach delays the cut-in (the out-of-distribution setup).
    """
    ego_arc, _ = world.ego_arc_lateral()
    template = world.template

    # Pre-scheduled oncoming traffic.
    while world.oncoming_schedule and world.time >= world.oncoming_schedule[0]:
        world.oncoming_schedule.pop(0)
        world.add_actor(
            object_class=ObjectClass.VEHICLE,
            x=float(world.oncoming_path[0, 0]), y=float(world.oncoming_path[0, 1]),
            yaw=_path_start_yaw(world.oncoming_path),
            half_length=2.3, half_width=0.95,
            speed=template.oncoming_speed, behavior="oncoming",
            path=world.oncoming_path, cruise_speed=template.oncoming_speed,
            active=True)

    # Scenario trigger.
    if not world.triggered:
        within = (world.scenario_arc - ego_arc) <= template.trigger_distance
        if within:
            if template.kind is ScenarioKind.PARKING_CUT_IN:
                if world.ego.speed > template.cutin_speed_threshold:
                    _fire_trigger(world)
            else:
                _fire_trigger(world)

    # Red-light phase change.
    sl = world.stop_line
    if (sl is not None and sl.kind is ScenarioKind.RED_LIGHT and sl.light_red
            and sl.green_at is not None and world.time >= sl.green_at):
        sl.light_red = False

    # Stop-sign satisfaction: a full stop within 3 m before the line.
    if world.stop_sign_pending():
        gap = sl.arc - world.ego_front_arc()
        if world.ego.speed < world.stationary_speed and 0.0 <= gap <= 3.0:
            sl.satisfied = True

    # Advance scripted actors.
    for actor in world.live_actors():
        if actor.behavior == "oncoming" and actor.active:
            actor._follow_path(dt)
            path_len = geometry.polyline_lengths(actor.path)[-1]
            if actor.path_s > path_len + 20.0:
                actor.done = True
        elif actor.behavior == "pedestrian" and actor.active:
            actor.speed = actor.cruise_speed
            actor._follow_path(dt)
            if actor.path_s >= geometry.polyline_lengths(actor.path)[-1]:
                actor.speed = 0.0
                actor.done = True
        elif actor.behavior == "cutin" and actor.active:
            actor.speed = min(actor.cruise_speed, actor.speed + actor.accel * dt)
            actor._follow_path(dt)
            path_len = geometry.polyline_lengths(actor.path)[-1]
            if actor.path_s > path_len + 30.0:
                actor.done = True

    # Resolution: ego has passed the scenario zone.
    if world.triggered and not world.resolved:
        if ego_arc > world.scenario_arc + 15.0:
            world.resolved = True
        if (template.kind is ScenarioKind.PEDESTRIAN_CROSSING
                and all(a.done for a in world.actors if a.behavior == "pedestrian")):
            world.resolved = True

    # Scenario timeout: emit once, then despawn scenario actors (CARLA-style).
    if (world.triggered and not world.resolved and not world.timeout_fired
            and world.trigger_time is not None
            and world.time >= world.trigger_time + template.timeout):
        world.timeout_fired = True
        world.pending_events.append(InfractionEvent(
            InfractionKind.SCENARIO_TIMEOUT, world.time, world.ego.x, world.ego.y))
        _force_resolve(world)

    return world


def _path_start_yaw(path: np.ndarray) -> float:
    t = geometry.tangent_at_arc(path, 0.0)
    return math.atan2(t[1], t[0])


def _fire_trigger(world: World):
    world.triggered = True
    world.trigger_time = world.time
    sl = world.stop_line
    if sl is not None and sl.kind is ScenarioKind.RED_LIGHT and sl.green_at is None:
        sl.green_at = world.time + world.red_duration
    for actor in world.live_actors():
        if actor.behavior in ("pedestrian", "cutin"):
            actor.active = True


def _force_resolve(world: World):
    world.resolved = True
    for actor in world.live_actors():
        actor.done = True
    world.oncoming_schedule.clear()
    sl = world.stop_line
    if sl is not None:
        sl.light_red = False
        sl.satisfied = True


@dataclass(frozen=True)
class WorldSnapshot:
    """The pieces of pre-step state infraction detection needs."""

    time: float
    ego: EgoState
    front_arc: float


def snapshot(world: World) -> WorldSnapshot:
    return WorldSnapshot(world.time, world.ego, world.ego_front_arc())


_COLLISION_KIND = {
    ObjectClass.PEDESTRIAN: InfractionKind.COLLISION_PEDESTRIAN,
    ObjectClass.VEHICLE: InfractionKind.COLLISION_VEHICLE,
    ObjectClass.EMERGENCY_VEHICLE: InfractionKind.COLLISION_VEHICLE,
    ObjectClass.STATIC_OBSTACLE: InfractionKind.COLLISION_STATIC,
}


def detect_infractions(prev: WorldSnapshot, world: World) -> list[InfractionEvent]:
    """Infractions between two consecutive states.

    Collision events are edge-triggered per actor contact (the contact must
    clear before the same actor can trigger again) and vehicle collisions
    are suppressed while the ego is stationary.
    """
    events = list(world.pending_events)
    world.pending_events.clear()
    ego_box = world.ego_box()
    stationary = world.ego.speed < world.stationary_speed

    for actor in world.live_actors():
        kind = _COLLISION_KIND.get(actor.object_class)
        if kind is None:
            continue
        touching = geometry.rect_rect_overlap(ego_box[0], ego_box[1],
                                              actor.pose, actor.half_extent)
        if touching and actor.actor_id not in world.active_contacts:
            world.active_contacts.add(actor.actor_id)
            suppressed = (kind is InfractionKind.COLLISION_VEHICLE and stationary)
            if not suppressed:
                events.append(InfractionEvent(kind, world.time, world.ego.x, world.ego.y))
        elif not touching:
            world.active_contacts.discard(actor.actor_id)

    # Stop-line crossings (front bumper passes the line arc).
    sl = world.stop_line
    if sl is not None:
        front = world.ego_front_arc()
        crossed = prev.front_arc < sl.arc <= front
        if crossed and sl.kind is ScenarioKind.RED_LIGHT and sl.light_red:
            events.append(InfractionEvent(InfractionKind.RED_LIGHT, world.time,
                                          world.ego.x, world.ego.y))
        if crossed and sl.kind is ScenarioKind.STOP_SIGN and not sl.satisfied:
            events.append(InfractionEvent(InfractionKind.STOP_SIGN, world.time,
                                          world.ego.x, world.ego.y))

    # Blocked: continuously stationary for too long.
    dt = world.time - prev.time
    if world.ego.speed < world.stationary_speed:
        world.blocked_time += dt
    else:
        world.blocked_time = 0.0
    if world.blocked_time >= world.blocked_timeout and world.terminated is None:
        events.append(InfractionEvent(InfractionKind.BLOCKED, world.time,
                                      world.ego.x, world.ego.y))
        world.terminated = "blocked"

    # Route deviation caps the episode.
    _, lateral = world.ego_arc_lateral()
    if abs(lateral) > world.route_deviation_limit and world.terminated is None:
        events.append(InfractionEvent(InfractionKind.ROUTE_DEVIATION, world.time,
                                      world.ego.x, world.ego.y))
        world.terminated = "route_deviation"

    return events


# ---------------------------------------------------------------------------
# Scene extraction
# ---------------------------------------------------------------------------


def _stop_line_box(world: World, local_pose) -> OrientedBox:
    sl = world.stop_line
    cls = (ObjectClass.TRAFFIC_LIGHT_STOP_LINE if sl.kind is ScenarioKind.RED_LIGHT
           else ObjectClass.STOP_SIGN_STOP_LINE)
    return OrientedBox(local_pose[0], local_pose[1], local_pose[2],
                       STOP_LINE_HALF_LENGTH, sl.lane_half_width, 0.0, cls)


def world_scene(world: World, record_raster: bool = True) -> Scene:
    """Build the planner's ego-frame Scene from privileged world state.

    Pedestrians appear only while moving; stop-line boxes appear while the
    light is red (or yellow) or the stop sign is not yet satisfied.
    """
    ego_pose = world.ego.pose
    objects = []
    for actor in world.live_actors():
        if (actor.object_class is ObjectClass.PEDESTRIAN
                and actor.speed <= MOVING_SPEED_THRESHOLD):
            continue
        local = geometry.to_ego_frame(actor.pose, ego_pose)
        objects.append(OrientedBox(local[0], local[1], local[2],
                                   actor.half_length, actor.half_width,
                                   actor.speed, actor.object_class))

    if world.red_light_active() or world.stop_sign_pending():
        line_pose = world.route_pose_at(world.stop_line.arc)
        objects.append(_stop_line_box(world, geometry.to_ego_frame(line_pose, ego_pose)))

    route_local = geometry.points_to_ego_frame(world.route, ego_pose)
    arc, _, _ = geometry.project_to_polyline((0.0, 0.0), route_local)
    start = geometry.point_at_arc(route_local, arc)
    ahead = geometry.resample_chord(route_local, 1.0, 19, start=start)
    route_points = RoutePoints(np.vstack([start, ahead]))

    raster = (render_road_raster(world.road_map, ego_pose) if record_raster
              else RoadRaster.empty())
    return build_scene(objects, route_points, world.speed_limit_index, raster)
