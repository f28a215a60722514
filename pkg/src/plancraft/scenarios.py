"""World construction for the nine scenario templates.

All randomness (placement jitter, traffic phasing, timing) is drawn here
from the episode seed; once built, a world steps deterministically.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from . import geometry
from .roadmap import straight_two_lane_map
from .scene import ObjectClass
from .world import Actor, ScenarioKind, ScenarioTemplate, World, _StopLine

LANE_WIDTH = 3.5
EGO_LANE_CENTER_Y = -LANE_WIDTH / 2.0
ONCOMING_LANE_CENTER_Y = LANE_WIDTH / 2.0

#: Ego-center lateral offset bounds (from the route) that stay on the road.
OFFSET_BOUNDS = (-0.75, 4.25)

DEFAULT_TEMPLATES: dict[ScenarioKind, ScenarioTemplate] = {
    ScenarioKind.CONSTRUCTION_OBSTACLE: ScenarioTemplate(
        kind=ScenarioKind.CONSTRUCTION_OBSTACLE, speed_limit_index=0),
    ScenarioKind.CONSTRUCTION_OBSTACLE_TWO_WAYS: ScenarioTemplate(
        kind=ScenarioKind.CONSTRUCTION_OBSTACLE_TWO_WAYS, oncoming_rate=0.05,
        speed_limit_index=0, timeout=90.0),
    ScenarioKind.PARKED_OBSTACLE: ScenarioTemplate(
        kind=ScenarioKind.PARKED_OBSTACLE, obstacle_lateral=-0.5, speed_limit_index=1),
    ScenarioKind.ACCIDENT: ScenarioTemplate(
        kind=ScenarioKind.ACCIDENT, speed_limit_index=1),
    ScenarioKind.PARKING_CUT_IN: ScenarioTemplate(
        kind=ScenarioKind.PARKING_CUT_IN, trigger_distance=22.0,
        cutin_speed_threshold=5.0, obstacle_lateral=-2.6, speed_limit_index=0),
    ScenarioKind.PEDESTRIAN_CROSSING: ScenarioTemplate(
        kind=ScenarioKind.PEDESTRIAN_CROSSING, trigger_distance=35.0, speed_limit_index=1),
    ScenarioKind.RED_LIGHT: ScenarioTemplate(
        kind=ScenarioKind.RED_LIGHT, trigger_distance=30.0, speed_limit_index=1),
    ScenarioKind.STOP_SIGN: ScenarioTemplate(
        kind=ScenarioKind.STOP_SIGN, trigger_distance=30.0, speed_limit_index=0),
    ScenarioKind.INVADING_TURN: ScenarioTemplate(
        kind=ScenarioKind.INVADING_TURN, oncoming_rate=0.12, encroach_depth=1.6,
        oncoming_speed=7.0, speed_limit_index=0),
}


def lane_point(arc: float, lateral: float) -> tuple[float, float]:
    """Global point at `arc` along the ego route, offset `lateral` to the left."""
    return (arc, EGO_LANE_CENTER_Y + lateral)


def _route(template: ScenarioTemplate) -> np.ndarray:
    return np.array([[0.0, EGO_LANE_CENTER_Y],
                     [template.route_length, EGO_LANE_CENTER_Y]])


def _oncoming_path(template: ScenarioTemplate, encroach: float = 0.0) -> np.ndarray:
    y = ONCOMING_LANE_CENTER_Y - encroach
    return np.array([[template.route_length + 30.0, y], [-60.0, y]])


def _oncoming_schedule(rng, template: ScenarioTemplate, horizon: float = 150.0):
    if template.oncoming_rate <= 0.0:
        return []
    period = 1.0 / template.oncoming_rate
    times = []
    t = float(rng.uniform(1.0, 5.0))
    while t < horizon:
        times.append(t)
        t += period * float(rng.uniform(0.9, 1.1))
    return times


def make_world(template: ScenarioTemplate, seed: int, *,
               blocked_timeout: float = 90.0) -> World:
    """Instantiate the scenario with seed-dependent jitter."""
    rng = np.random.default_rng(seed)
    road_map = straight_two_lane_map(length=template.route_length + 110.0, x0=-50.0)
    route = _route(template)
    arc = float(template.obstacle_arc + rng.uniform(-8.0, 8.0))
    kind = template.kind

    actors: list[Actor] = []
    next_id = 0

    def add(**kwargs):
        nonlocal next_id
        actor = Actor(actor_id=next_id, **kwargs)
        next_id += 1
        actors.append(actor)
        return actor

    def add_static(arc_pos, lateral, yaw, hl, hw, cls):
        x, y = lane_point(arc_pos, lateral)
        add(object_class=cls, x=x, y=y, yaw=yaw, half_length=hl, half_width=hw)

    stop_line = None
    intersection_zones = ()
    oncoming_path = None
    oncoming_schedule = []

    if kind in (ScenarioKind.CONSTRUCTION_OBSTACLE,
                ScenarioKind.CONSTRUCTION_OBSTACLE_TWO_WAYS):
        lat = template.obstacle_lateral + float(rng.uniform(-0.15, 0.15))
        add_static(arc, lat, 0.0, 0.4, 0.4, ObjectClass.STATIC_OBSTACLE)  # warning sign
        for k in range(5):  # cone line behind the sign
            add_static(arc + 2.0 * (k + 1), lat + float(rng.uniform(-0.2, 0.2)),
                       0.0, 0.15, 0.15, ObjectClass.STATIC_OBSTACLE)
        if kind is ScenarioKind.CONSTRUCTION_OBSTACLE_TWO_WAYS:
            oncoming_path = _oncoming_path(template)
            oncoming_schedule = _oncoming_schedule(rng, template)

    elif kind is ScenarioKind.PARKED_OBSTACLE:
        lat = template.obstacle_lateral + float(rng.uniform(-0.2, 0.2))
        add_static(arc, lat, float(rng.uniform(-0.05, 0.05)), 2.3, 0.95,
                   ObjectClass.VEHICLE)

    elif kind is ScenarioKind.ACCIDENT:
        add_static(arc, float(rng.uniform(-0.3, 0.3)), 0.25 + float(rng.uniform(-0.1, 0.1)),
                   2.3, 0.95, ObjectClass.VEHICLE)
        add_static(arc + 7.0, float(rng.uniform(-0.3, 0.3)),
                   -0.2 + float(rng.uniform(-0.1, 0.1)), 2.3, 0.95, ObjectClass.VEHICLE)
        add_static(arc + 14.0, -1.4, 0.1, 2.5, 1.0, ObjectClass.EMERGENCY_VEHICLE)

    elif kind is ScenarioKind.PARKING_CUT_IN:
        lat = template.obstacle_lateral
        x0, y0 = lane_point(arc, lat)
        merge = np.array([
            lane_point(arc, lat),
            lane_point(arc + 6.0, lat + 0.4),
            lane_point(arc + 12.0, lat * 0.35),
            lane_point(arc + 18.0, 0.0),
            lane_point(template.route_length + 40.0, 0.0),
        ])
        add(object_class=ObjectClass.VEHICLE, x=x0, y=y0, yaw=0.0,
            half_length=2.3, half_width=0.95, behavior="cutin", path=merge,
            cruise_speed=5.5 + float(rng.uniform(-0.5, 0.5)), accel=2.5)

    elif kind is ScenarioKind.PEDESTRIAN_CROSSING:
        start = lane_point(arc, -2.5)
        end = lane_point(arc, 6.0)
        add(object_class=ObjectClass.PEDESTRIAN, x=start[0], y=start[1],
            yaw=math.pi / 2.0, half_length=0.3, half_width=0.3,
            behavior="pedestrian", path=np.array([start, end]),
            cruise_speed=1.5 + float(rng.uniform(-0.2, 0.2)))

    elif kind is ScenarioKind.RED_LIGHT:
        stop_line = _StopLine(kind=kind, arc=arc, lane_half_width=LANE_WIDTH / 2.0)
        intersection_zones = ((arc, arc + 12.0),)

    elif kind is ScenarioKind.STOP_SIGN:
        stop_line = _StopLine(kind=kind, arc=arc, lane_half_width=LANE_WIDTH / 2.0)
        intersection_zones = ((arc, arc + 12.0),)

    elif kind is ScenarioKind.INVADING_TURN:
        oncoming_path = _oncoming_path(template, encroach=template.encroach_depth)
        oncoming_schedule = _oncoming_schedule(rng, template)

    else:
        raise ValueError(f"unknown scenario kind {kind}")

    return World(
        road_map, route, template, seed,
        actors=actors,
        stop_line=stop_line,
        scenario_arc=arc,
        oncoming_schedule=oncoming_schedule,
        oncoming_path=oncoming_path,
        red_duration=8.0 + float(rng.uniform(-2.0, 2.0)),
        intersection_zones=intersection_zones,
        offset_bounds=OFFSET_BOUNDS,
        lane_half_width=LANE_WIDTH / 2.0,
        blocked_timeout=blocked_timeout,
    )


def all_template_kinds() -> list[ScenarioKind]:
    return list(DEFAULT_TEMPLATES)


def template_for(kind: ScenarioKind | str) -> ScenarioTemplate:
    if isinstance(kind, str):
        kind = ScenarioKind(kind)
    return DEFAULT_TEMPLATES[kind]


# ---------------------------------------------------------------------------
# JSON scenario files
# ---------------------------------------------------------------------------


def template_to_json(template: ScenarioTemplate) -> dict:
    return {
        "kind": template.kind.value,
        "trigger_distance": template.trigger_distance,
        "obstacle_arc": template.obstacle_arc,
        "obstacle_lateral": template.obstacle_lateral,
        "oncoming_rate": template.oncoming_rate,
        "oncoming_speed": template.oncoming_speed,
        "cutin_speed_threshold": template.cutin_speed_threshold,
        "encroach_depth": template.encroach_depth,
        "timeout": template.timeout,
        "speed_limit_index": template.speed_limit_index,
        "route_length": template.route_length,
    }


def template_from_json(payload: dict) -> ScenarioTemplate:
    data = dict(payload)
    kind = ScenarioKind(data.pop("kind"))
    return ScenarioTemplate(kind=kind, **data)


def load_template(path: str | Path) -> ScenarioTemplate:
    with open(path) as fh:
        return template_from_json(json.load(fh))


def save_template(template: ScenarioTemplate, path: str | Path):
    with open(path, "w") as fh:
        json.dump(template_to_json(template), fh, indent=2)
        fh.write("\n")
