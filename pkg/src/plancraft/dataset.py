"""Dataset collection from expert rollouts, recovery augmentation, sharding.

Collection is deterministic per (template, seed); episodes containing any
collision infraction are discarded entirely.  A configurable fraction of
samples is replaced by recovery-augmented variants: the ego frame is
perturbed laterally and in heading, the scene re-expressed, and the label
path re-targeted to rejoin the original path.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import geometry
from .control import (LongitudinalController, fit_longitudinal,
                      target_speed_from_waypoints)
from .episode import EpisodeLog, SimConfig, run_episode
from .expert import ExpertConfig, RuleExpert
from .plan import PATH_POINT_COUNT, PATH_SPACING, PlanLabel
from .raster import render_road_raster, resample_raster
from .scene import OrientedBox, RoutePoints, Scene, build_scene, scene_from_json, scene_to_json
from .scenarios import DEFAULT_TEMPLATES, make_world
from .world import InfractionKind, ScenarioKind

SHARD_SIZE = 10_000
MANIFEST_VERSION = 1

_COLLISIONS = (InfractionKind.COLLISION_PEDESTRIAN, InfractionKind.COLLISION_VEHICLE,
               InfractionKind.COLLISION_STATIC)


class CollectionError(RuntimeError):
    pass


class IntegrityError(RuntimeError):
    pass


class AugmentationError(ValueError):
    pass


@dataclass(frozen=True)
class SampleMeta:
    scenario: str
    seed: int
    step: int
    augmented: bool = False


@dataclass(frozen=True)
class TrainingSample:
    scene: Scene
    label: PlanLabel
    meta: SampleMeta

    def to_json(self) -> dict:
        return {
            "scene": scene_to_json(self.scene),
            "label": self.label.to_json(),
            "meta": {"scenario": self.meta.scenario, "seed": self.meta.seed,
                     "step": self.meta.step, "augmented": self.meta.augmented},
        }

    @classmethod
    def from_json(cls, payload: dict) -> "TrainingSample":
        meta = payload["meta"]
        return cls(
            scene=scene_from_json(payload["scene"]),
            label=PlanLabel.from_json(payload["label"]),
            meta=SampleMeta(meta["scenario"], int(meta["seed"]), int(meta["step"]),
                            bool(meta["augmented"])),
        )


@dataclass(frozen=True)
class AugmentConfig:
    max_translation: float = 1.0        # lateral, meters
    max_rotation: float = math.radians(20.0)
    rejoin_min: float = 8.0
    rejoin_max: float = 14.0
    drivable_slack: float = 0.2


@dataclass(frozen=True)
class CollectConfig:
    template_kinds: tuple = tuple(k.value for k in ScenarioKind)
    seeds: tuple = (0, 1, 2, 3)
    augment_frac: float = 0.3
    time_limit: float = 120.0
    infeasible_abort: float = 30.0      # s of continuous no-feasible-path
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    expert: ExpertConfig = field(default_factory=ExpertConfig)


# ---------------------------------------------------------------------------
# Augmentation
# ---------------------------------------------------------------------------


def _on_drivable(point, road_map, slack) -> bool:
    p = np.asarray(point, dtype=float).reshape(1, 2)
    for lane in road_map.lanes:
        if geometry.polyline_distance_to_points(p, lane.centerline)[0] <= lane.width / 2.0 + slack:
            return True
    return False


def _recovery_label(label: PlanLabel, delta_pose, rejoin: float) -> PlanLabel:
    """Re-express the label in the perturbed frame and re-target the path.

    The perturbed ego sits off the original path; the new path starts at the
    ego and eases back onto the (transformed) original path with a cosine
    ramp, then is re-sampled to exact 1 m chords.
    """
    path = geometry.points_to_ego_frame(label.path_points, delta_pose)
    wps = geometry.points_to_ego_frame(label.waypoints, delta_pose)

    s0, l0, _ = geometry.project_to_polyline_extended((0.0, 0.0), path)

    def lateral_delta(s: float) -> float:
        u = s - s0
        if u <= 0.0:
            return l0
        if u >= rejoin:
            return 0.0
        return l0 * 0.5 * (1.0 + math.cos(math.pi * u / rejoin))

    # Dense recovery curve: original path plus the decaying ego offset.
    arcs = geometry.polyline_lengths(path)
    dense_s = np.arange(s0, arcs[-1] + 8.0, 0.25)
    dense = []
    for s in dense_s:
        p = geometry.point_at_arc(path, s)
        t = geometry.tangent_at_arc(path, s)
        normal = np.array([-t[1], t[0]])
        dense.append(p + normal * lateral_delta(s))
    dense = np.asarray(dense)
    tail = geometry.resample_chord(dense, PATH_SPACING, PATH_POINT_COUNT - 1,
                                   start=dense[0])
    new_path = np.vstack([dense[0], tail])

    # Waypoints ride the same decaying lateral field.
    new_wps = []
    for wp in wps:
        s, _, _ = geometry.project_to_polyline_extended(wp, path)
        t = geometry.tangent_at_arc(path, s)
        normal = np.array([-t[1], t[0]])
        new_wps.append(wp + normal * lateral_delta(s))
    return PlanLabel(path_points=new_path, waypoints=np.asarray(new_wps),
                     target_speed=label.target_speed, feasible=label.feasible)


def augment(sample: TrainingSample, rng, config: AugmentConfig | None = None, *,
            road_map=None, ego_pose=None) -> TrainingSample:
    """Recovery augmentation: perturb the ego frame, re-express everything.

    With `road_map` and the sample's global `ego_pose`, the raster is
    re-rendered exactly; otherwise it is resampled from the stored grid.
    Raises AugmentationError when the perturbed ego leaves the drivable
    area (checked only when a map is available).
    """
    config = config or AugmentConfig()
    dy = float(rng.uniform(-config.max_translation, config.max_translation))
    dyaw = float(rng.uniform(-config.max_rotation, config.max_rotation))
    return apply_ego_perturbation(sample, dy, dyaw, config,
                                  road_map=road_map, ego_pose=ego_pose)


def apply_ego_perturbation(sample: TrainingSample, dy: float, dyaw: float,
                           config: AugmentConfig | None = None, *,
                           road_map=None, ego_pose=None) -> TrainingSample:
    config = config or AugmentConfig()
    if dy == 0.0 and dyaw == 0.0:
        return sample
    delta_pose = (0.0, dy, dyaw)

    new_global = None
    if road_map is not None and ego_pose is not None:
        new_global = geometry.from_ego_frame(delta_pose, ego_pose)
        if not _on_drivable(new_global[:2], road_map, config.drivable_slack):
            raise AugmentationError(f"perturbed ego off drivable area (dy={dy:.2f})")

    objects = []
    for obj in sample.scene.objects:
        pose = geometry.to_ego_frame(obj.pose, delta_pose)
        objects.append(OrientedBox(pose[0], pose[1], pose[2], obj.half_length,
                                   obj.half_width, obj.speed, obj.object_class))
    route = geometry.points_to_ego_frame(sample.scene.route.points, delta_pose)

    if new_global is not None:
        raster = render_road_raster(road_map, new_global)
    else:
        raster = resample_raster(sample.scene.raster, 0.0, dy, dyaw)

    rejoin = float(np.clip(1.5 * sample.label.target_speed,
                           config.rejoin_min, config.rejoin_max))
    label = _recovery_label(sample.label, delta_pose, rejoin)
    scene = build_scene(objects, RoutePoints(route), sample.scene.speed_limit_index,
                        raster)
    return TrainingSample(scene=scene, label=label,
                          meta=replace(sample.meta, augmented=True))


# ---------------------------------------------------------------------------
# Collection
# ---------------------------------------------------------------------------


def _episode_samples(log: EpisodeLog) -> list[TrainingSample]:
    samples = []
    for i, step in enumerate(log.steps):
        if step.scene is None or step.plan is None:
            continue
        samples.append(TrainingSample(
            scene=step.scene, label=step.plan,
            meta=SampleMeta(log.template_kind, log.seed, i)))
    return samples


def _check_feasibility(log: EpisodeLog, limit_s: float):
    run_start = None
    for step in log.steps:
        if step.plan is None or step.scene is None:
            continue
        if not getattr(step.plan, "feasible", True):
            if run_start is None:
                run_start = step.time
            elif step.time - run_start > limit_s:
                raise CollectionError(
                    f"expert reported no feasible path for over {limit_s:.0f} s "
                    f"({log.template_kind}, seed {log.seed})")
        else:
            run_start = None


def _stride_augment_mask(n: int, frac: float) -> np.ndarray:
    idx = np.arange(n, dtype=float)
    return np.floor((idx + 1) * frac) > np.floor(idx * frac)


@dataclass
class CollectResult:
    samples: list
    episodes: list            # per-episode summary dicts
    controller: LongitudinalController
    discarded: int = 0


def collect(config: CollectConfig | None = None, progress=None) -> CollectResult:
    """Roll out the expert on every (template, seed), harvest one sample per
    planner tick, drop collision episodes, and apply stride augmentation."""
    config = config or CollectConfig()
    sim = SimConfig(record_scenes=True, record_raster=True,
                    time_limit=config.time_limit)
    raw: list[tuple[TrainingSample, object, tuple]] = []
    episodes = []
    discarded = 0
    ctl_samples = []

    for kind_name in config.template_kinds:
        template = DEFAULT_TEMPLATES[ScenarioKind(kind_name)]
        for seed in config.seeds:
            expert = RuleExpert(config.expert)
            world = make_world(template, seed)
            road_map = world.road_map
            log = run_episode(expert, template, seed, config=sim, world=world)
            if log.termination == "planner_failure":
                raise CollectionError(f"expert failed: {log.error}")
            _check_feasibility(log, config.infeasible_abort)
            collided = any(e.kind in _COLLISIONS for e in log.infractions)
            episodes.append({
                "template": log.template_kind, "seed": seed,
                "steps": len(log.steps), "completed": log.completed,
                "infractions": [e.kind.value for e in log.infractions],
                "discarded": collided,
            })
            if collided:
                discarded += 1
                continue
            for sample, step in zip(_episode_samples(log),
                                    (s for s in log.steps if s.scene is not None)):
                raw.append((sample, road_map, step.ego.pose))
            # (pre-step speed, decoded target, applied accel) triples: the
            # step record holds the post-step ego, so lag the speed by one.
            prev_speed = 0.0
            for step in log.steps:
                if step.plan is not None and step.scene is not None:
                    decoded = target_speed_from_waypoints(step.plan.waypoints)
                    ctl_samples.append((prev_speed, decoded, step.control[1]))
                prev_speed = step.ego.speed
            if progress is not None:
                progress(kind_name, seed, len(raw))

    mask = _stride_augment_mask(len(raw), config.augment_frac)
    samples = []
    for i, (sample, road_map, ego_pose) in enumerate(raw):
        if mask[i]:
            samples.append(_augment_with_retry(sample, config, road_map, ego_pose))
        else:
            samples.append(sample)

    controller = (fit_longitudinal(ctl_samples) if len(ctl_samples) >= 3
                  else LongitudinalController())
    return CollectResult(samples=samples, episodes=episodes,
                         controller=controller, discarded=discarded)


def _augment_with_retry(sample, config, road_map, ego_pose, tries: int = 8):
    rng = np.random.default_rng([sample.meta.seed, sample.meta.step, 7])
    dy = float(rng.uniform(-config.augment.max_translation, config.augment.max_translation))
    dyaw = float(rng.uniform(-config.augment.max_rotation, config.augment.max_rotation))
    for _ in range(tries):
        try:
            return apply_ego_perturbation(sample, dy, dyaw, config.augment,
                                          road_map=road_map, ego_pose=ego_pose)
        except AugmentationError:
            dy *= 0.7
            dyaw *= 0.7
    return apply_ego_perturbation(sample, 0.35 * dy, 0.35 * dyaw, config.augment)


def class_balance(samples) -> dict:
    """Fraction of samples containing at least one object of each class."""
    from .scene import ObjectClass
    counts = {cls: 0 for cls in ObjectClass}
    for s in samples:
        present = {o.object_class for o in s.scene.objects}
        for cls in present:
            counts[cls] += 1
    n = max(len(samples), 1)
    return {cls.value: counts[cls] / n for cls in counts}


# ---------------------------------------------------------------------------
# Shards
# ---------------------------------------------------------------------------


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_shards(result_or_samples, out_dir: str | Path,
                 shard_size: int = SHARD_SIZE, augment_frac: float | None = None):
    """Write JSONL shards (<= shard_size samples each) plus manifest.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if isinstance(result_or_samples, CollectResult):
        samples = result_or_samples.samples
        episodes = result_or_samples.episodes
        controller = result_or_samples.controller
    else:
        samples = list(result_or_samples)
        episodes = []
        controller = None

    shards = []
    for shard_idx in range(0, max(len(samples), 1), shard_size):
        chunk = samples[shard_idx:shard_idx + shard_size]
        if not chunk and shard_idx > 0:
            break
        name = f"dataset-{shard_idx // shard_size:05d}.jsonl"
        path = out / name
        with open(path, "w") as fh:
            for s in chunk:
                fh.write(json.dumps(s.to_json()) + "\n")
        shards.append({"file": name, "count": len(chunk), "sha256": _sha256(path)})

    manifest = {
        "version": MANIFEST_VERSION,
        "n_samples": len(samples),
        "n_augmented": sum(1 for s in samples if s.meta.augmented),
        "augment_frac": augment_frac,
        "shards": shards,
        "episodes": episodes,
        "class_balance": class_balance(samples),
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    if controller is not None:
        with open(out / "controller.json", "w") as fh:
            json.dump(controller.to_json(), fh, indent=2)
            fh.write("\n")
    return manifest


def read_shards(data_dir: str | Path) -> list:
    """Load all shards, verifying counts and content hashes."""
    root = Path(data_dir)
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        raise IntegrityError(f"missing manifest.json in {root}")
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    if manifest.get("version") != MANIFEST_VERSION:
        raise IntegrityError(f"unsupported manifest version {manifest.get('version')}")

    samples = []
    for entry in manifest["shards"]:
        path = root / entry["file"]
        if not path.exists():
            raise IntegrityError(f"missing shard {entry['file']}")
        if _sha256(path) != entry["sha256"]:
            raise IntegrityError(f"hash mismatch in shard {entry['file']}")
        count = 0
        with open(path) as fh:
            for line in fh:
                samples.append(TrainingSample.from_json(json.loads(line)))
                count += 1
        if count != entry["count"]:
            raise IntegrityError(
                f"shard {entry['file']}: expected {entry['count']} samples, read {count}")
    if len(samples) != manifest["n_samples"]:
        raise IntegrityError("manifest sample count mismatch")
    return samples


def load_controller(data_dir: str | Path) -> LongitudinalController:
    path = Path(data_dir) / "controller.json"
    if not path.exists():
        return LongitudinalController()
    with open(path) as fh:
        return LongitudinalController.from_json(json.load(fh))
