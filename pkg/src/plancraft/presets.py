"""Probe presets: canned scenes + perturbation programs for the analyses.

Each preset builds a deterministic base scene by rolling the expert into a
scenario up to a characteristic moment, then defines either a sweep axis or
named one-shot perturbations on it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .control import PlanDriver
from .expert import RuleExpert
from .perturb import (RemoveObject, RotateEgo, SweepAxis, TranslateEgo,
                      TranslateObject)
from .scenarios import make_world, template_for
from .scene import ObjectClass, Scene
from .world import ScenarioKind, World, step_ego, tick_scenario, world_scene


@dataclass
class ProbeSetup:
    name: str
    description: str
    scene: Scene
    world: World                      # source world: exact raster re-render
    axis: SweepAxis | None = None
    values: list | None = None
    specs: dict | None = None         # name -> op list (one-shot probes)
    notes: str = ""

    @property
    def road_map(self):
        return self.world.road_map

    @property
    def ego_pose(self):
        return self.world.ego.pose


def _drive_until(world: World, condition, max_time: float = 60.0) -> World:
    """Close the loop with the expert until `condition(world)` holds."""
    expert = RuleExpert()
    driver = PlanDriver()
    control = (0.0, 0.0)
    step = 0
    while world.time < max_time:
        if step % 2 == 0:
            label = expert.plan(None, world)
            control = driver.control(label, world.ego.speed, 0.1).as_tuple()
            if condition(world):
                break
        tick_scenario(world, 0.05)
        world.ego = step_ego(world.ego, control, 0.05)
        world.time += 0.05
        step += 1
    return world


def _approach(world: World, distance: float):
    def cond(w):
        arc, _ = w.ego_arc_lateral()
        return w.scenario_arc - arc <= distance
    return _drive_until(world, cond)


def _construction_scene(seed: int, two_ways: bool, distance: float = 32.0):
    kind = (ScenarioKind.CONSTRUCTION_OBSTACLE_TWO_WAYS if two_ways
            else ScenarioKind.CONSTRUCTION_OBSTACLE)
    world = make_world(template_for(kind), seed)
    _approach(world, distance)
    return world


def fig2_translate(seed: int = 0) -> ProbeSetup:
    world = _construction_scene(seed, two_ways=False)
    scene = world_scene(world)
    statics = [i for i, o in enumerate(scene.objects)
               if o.object_class is ObjectClass.STATIC_OBSTACLE]
    lane_w = 3.5
    specs = {
        "baseline": [],
        "opposite_lane": [TranslateObject(i, 0.0, lane_w) for i in statics],
        "right_of_lane": [TranslateObject(i, 0.0, -2.9) for i in statics],
    }
    return ProbeSetup(
        name="fig2_translate",
        description="Construction composition moved to the opposite lane and "
                    "off the right edge; does the plan still dodge?",
        scene=scene, world=world, specs=specs,
        notes="A location-insensitive reaction to the composition indicates "
              "a triggered behavior rather than geometric understanding.")


def fig2_cones(seed: int = 0) -> ProbeSetup:
    world = _construction_scene(seed, two_ways=False)
    scene = world_scene(world)
    statics = [i for i, o in enumerate(scene.objects)
               if o.object_class is ObjectClass.STATIC_OBSTACLE]
    # The warning sign is the closest static; cones trail behind it.
    sign = min(statics, key=lambda i: scene.objects[i].center_x)
    cones = sorted((i for i in statics if i != sign), reverse=True)
    specs = {
        "baseline": [],
        "no_cones": [RemoveObject(i) for i in cones],
    }
    return ProbeSetup(
        name="fig2_cones",
        description="Remove the cone line behind the warning sign; a model "
                    "keyed on cones stops reacting to the obstacle.",
        scene=scene, world=world, specs=specs)


def fig3_distance(seed: int = 0) -> ProbeSetup:
    world = _construction_scene(seed, two_ways=False, distance=36.0)
    scene = world_scene(world)
    return ProbeSetup(
        name="fig3_distance",
        description="Move the ego toward the obstacle and record predicted "
                    "paths and clearances at each distance.",
        scene=scene, world=world,
        axis=SweepAxis("ego_distance", units="m"),
        values=list(np.arange(0.0, 28.0 + 1e-9, 2.0)),
        notes="Failure mode: too close, and the lane-transition steepness "
              "stops adapting, clipping the obstacle.")


def fig5_rotation(seed: int = 0) -> ProbeSetup:
    world = _construction_scene(seed, two_ways=True)

    def waiting(w):
        arc, _ = w.ego_arc_lateral()
        return (w.scenario_arc - arc) < 25.0 and w.ego.speed < 0.3
    _drive_until(world, waiting, max_time=90.0)
    scene = world_scene(world)
    return ProbeSetup(
        name="fig5_rotation",
        description="Rotate the waiting ego in an overtaking scene with "
                    "oncoming traffic; plot target speed vs rotation.",
        scene=scene, world=world,
        axis=SweepAxis("ego_rotation", units="rad"),
        values=list(np.radians(np.linspace(0.0, 30.0, 31))),
        notes="A positional shortcut shows as an abrupt speed jump once the "
              "rotation looks like a committed overtake.")


def fig7_cutin(seed: int = 0) -> ProbeSetup:
    world = make_world(template_for(ScenarioKind.PARKING_CUT_IN), seed)

    def triggered(w):
        return any(a.behavior == "cutin" and a.active for a in w.actors)
    _drive_until(world, triggered, max_time=60.0)
    scene = world_scene(world)
    return ProbeSetup(
        name="fig7_cutin",
        description="Shift the ego toward the cutting-in vehicle; plot "
                    "target speed vs remaining distance.",
        scene=scene, world=world,
        axis=SweepAxis("ego_distance", units="m"),
        values=list(np.arange(0.0, 16.0 + 1e-9, 1.0)),
        notes="Anticipation shortcut: below a characteristic distance the "
              "model predicts regular driving into the merging car.")


def fig9_speedlimit(seed: int = 0) -> ProbeSetup:
    world = make_world(template_for(ScenarioKind.PEDESTRIAN_CROSSING), seed)

    def crossing(w):
        for a in w.actors:
            if a.behavior == "pedestrian" and a.active and abs(a.y) < 1.2:
                return True
        return False
    _drive_until(world, crossing, max_time=60.0)
    scene = world_scene(world)
    return ProbeSetup(
        name="fig9_speedlimit",
        description="Brake for a crossing pedestrian under each speed-limit "
                    "token; record where the plan stops.",
        scene=scene, world=world,
        axis=SweepAxis("speed_limit_index", units="index"),
        values=[0.0, 1.0, 2.0, 3.0],
        notes="Higher limits shifting the stopping point toward the "
              "pedestrian indicate speed inferred from the limit token.")


def fig10_postcrash(seed: int = 0) -> ProbeSetup:
    world = make_world(template_for(ScenarioKind.ACCIDENT), seed)
    _approach(world, 40.0)
    # Teleport the ego into contact with the first wreck: a pre-collided
    # state the dataset never shows.
    wreck = world.actors[0]
    from .world import EgoState
    world.ego = EgoState(wreck.x - 3.0, wreck.y - 0.3, 0.0, 0.0)
    scene = world_scene(world)
    return ProbeSetup(
        name="fig10_postcrash",
        description="Ego overlapping a wreck: record the prediction; correct "
                    "post-crash behavior is unspecified by the dataset.",
        scene=scene, world=world,
        specs={"postcrash": []},
        notes="No pass/fail: the probe documents what the model does after "
              "contact.")


def default_scene(kind: ScenarioKind, seed: int = 0) -> ProbeSetup:
    """A representative mid-approach scene for any template (workbench)."""
    world = make_world(template_for(kind), seed)
    if kind is ScenarioKind.PARKING_CUT_IN:
        def cond(w):
            return any(a.behavior == "cutin" and a.active for a in w.actors)
        _drive_until(world, cond, max_time=60.0)
    elif kind is ScenarioKind.PEDESTRIAN_CROSSING:
        def cond(w):
            return any(a.behavior == "pedestrian" and a.active and abs(a.y) < 2.0
                       for a in w.actors)
        _drive_until(world, cond, max_time=60.0)
    else:
        _approach(world, 28.0)
    return ProbeSetup(name=f"default_{kind.value}", description="workbench scene",
                      scene=world_scene(world), world=world)


PRESETS = {
    "fig2_translate": fig2_translate,
    "fig2_cones": fig2_cones,
    "fig3_distance": fig3_distance,
    "fig5_rotation": fig5_rotation,
    "fig7_cutin": fig7_cutin,
    "fig9_speedlimit": fig9_speedlimit,
    "fig10_postcrash": fig10_postcrash,
}


def build_preset(name: str, seed: int = 0) -> ProbeSetup:
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; available: {sorted(PRESETS)}")
    return PRESETS[name](seed)
