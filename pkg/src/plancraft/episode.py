"""Closed-loop episode execution and the per-step log."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .control import LateralPID, LongitudinalController, PlanDriver
from .plan import PlanLabel, PlanOutput
from .scenarios import make_world
from .twohot import DEFAULT_SPEED_BINS
from .world import (EgoState, InfractionEvent, ScenarioTemplate, World,
                    detect_infractions, snapshot, step_ego, tick_scenario, world_scene)


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.05                 # 20 Hz simulation
    planner_every: int = 2           # planner/controller at 10 Hz, ZOH between
    time_limit: float = 90.0
    blocked_timeout: float = 90.0
    route_end_tolerance: float = 1.0
    record_scenes: bool = False      # retain Scene objects in the log
    record_raster: bool = True       # render the road raster into scenes
    speed_bins: tuple = DEFAULT_SPEED_BINS


@dataclass(frozen=True)
class StepRecord:
    time: float
    ego: EgoState
    scene: object          # Scene | None (planner ticks only)
    plan: object           # PlanOutput | PlanLabel | None
    control: tuple         # (steer, accel)
    scenario_active: bool


@dataclass
class EpisodeLog:
    template_kind: str
    seed: int
    route: np.ndarray
    route_length: float
    steps: list = field(default_factory=list)
    infractions: list = field(default_factory=list)
    distance_completed: float = 0.0
    completed: bool = False
    termination: str = "route_end"
    error: str | None = None


class PlannerFailure(RuntimeError):
    """Wraps an exception raised by the planner during an episode."""


def run_episode(planner, template: ScenarioTemplate, seed: int,
                config: SimConfig | None = None, world: World | None = None,
                controller: LongitudinalController | None = None) -> EpisodeLog:
    """Run one closed-loop episode.

    `planner` implements plan(scene, world) -> PlanOutput/PlanLabel and
    optionally reset(seed) and needs_scene.  Deterministic for fixed
    (seed, planner): identical runs produce bit-identical logs.
    """
    config = config or SimConfig()
    if world is None:
        world = make_world(template, seed, blocked_timeout=config.blocked_timeout)
    log = EpisodeLog(template_kind=template.kind.value, seed=seed,
                     route=world.route.copy(), route_length=world.route_length)
    driver = PlanDriver(LateralPID(), controller or LongitudinalController(),
                        speed_bins=config.speed_bins)
    if hasattr(planner, "reset"):
        planner.reset(seed)
    needs_scene = getattr(planner, "needs_scene", True)
    build_scene = needs_scene or config.record_scenes

    plan = None
    control = (0.0, 0.0)
    planner_dt = config.dt * config.planner_every
    step_idx = 0
    max_arc = 0.0

    while True:
        scene = None
        if step_idx % config.planner_every == 0:
            if build_scene:
                scene = world_scene(world, record_raster=config.record_raster)
            try:
                plan = planner.plan(scene, world)
                command = driver.control(plan, world.ego.speed, planner_dt)
                control = command.as_tuple()
            except Exception as exc:  # noqa: BLE001 - planner faults end the episode
                log.termination = "planner_failure"
                log.error = f"{type(exc).__name__}: {exc}"
                break

        prev = snapshot(world)
        tick_scenario(world, config.dt)
        world.ego = step_ego(world.ego, control, config.dt)
        world.time += config.dt
        events = detect_infractions(prev, world)
        log.infractions.extend(events)

        arc, _ = world.ego_arc_lateral()
        max_arc = max(max_arc, min(arc, world.route_length))
        log.steps.append(StepRecord(
            time=world.time, ego=world.ego,
            scene=scene if config.record_scenes else None,
            plan=plan, control=control,
            scenario_active=world.triggered and not world.resolved))

        if world.route_length <= 0.0 or arc >= world.route_length - config.route_end_tolerance:
            log.completed = True
            log.termination = "route_end"
            break
        if world.terminated is not None:
            log.termination = world.terminated
            break
        if world.time >= config.time_limit:
            log.termination = "time_limit"
            break
        step_idx += 1

    log.distance_completed = world.route_length if log.completed else max_arc
    return log


# ---------------------------------------------------------------------------
# JSON Lines serialization: one record per step plus a trailing summary.
# ---------------------------------------------------------------------------


def _step_to_json(step: StepRecord, include_plan: bool) -> dict:
    rec = {
        "t": step.time,
        "ego": {"x": step.ego.x, "y": step.ego.y, "yaw": step.ego.yaw,
                "speed": step.ego.speed},
        "control": list(step.control),
        "scenario_active": step.scenario_active,
    }
    if include_plan and step.plan is not None:
        rec["plan"] = step.plan.to_json()
    return rec


def write_episode_jsonl(log: EpisodeLog, path: str | Path, include_plans: bool = False):
    with open(path, "w") as fh:
        for step in log.steps:
            fh.write(json.dumps(_step_to_json(step, include_plans)) + "\n")
        summary = {
            "summary": True,
            "template": log.template_kind,
            "seed": log.seed,
            "route": log.route.tolist(),
            "route_length": log.route_length,
            "distance_completed": log.distance_completed,
            "completed": log.completed,
            "termination": log.termination,
            "error": log.error,
            "infractions": [e.to_json() for e in log.infractions],
        }
        fh.write(json.dumps(summary) + "\n")


def read_episode_jsonl(path: str | Path) -> EpisodeLog:
    """Rebuild the metric-relevant parts of an episode log."""
    steps = []
    summary = None
    with open(path) as fh:
        for line in fh:
            rec = json.loads(line)
            if rec.get("summary"):
                summary = rec
            else:
                ego = EgoState(rec["ego"]["x"], rec["ego"]["y"], rec["ego"]["yaw"],
                               rec["ego"]["speed"])
                steps.append(StepRecord(rec["t"], ego, None,
                                        PlanOutput.from_json(rec["plan"])
                                        if "plan" in rec else None,
                                        tuple(rec["control"]), rec["scenario_active"]))
    if summary is None:
        raise ValueError(f"{path}: missing summary record")
    log = EpisodeLog(
        template_kind=summary["template"], seed=summary["seed"],
        route=np.asarray(summary["route"], dtype=float),
        route_length=summary["route_length"],
        steps=steps,
        infractions=[InfractionEvent.from_json(e) for e in summary["infractions"]],
        distance_completed=summary["distance_completed"],
        completed=summary["completed"],
        termination=summary["termination"],
        error=summary.get("error"),
    )
    return log
