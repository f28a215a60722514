"""Privileged rule-based expert.

Plans in route coordinates (arc along the route, signed lateral offset):
static obstacles become lateral-offset holds with clearance, oncoming
traffic gates lane changes, and the longitudinal target is the minimum of
speed-limit, gap and stop-point constraints.  Produces PlanLabels for
imitation and doubles as the oracle closed-loop baseline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import geometry
from .control import expert_accel
from .plan import PATH_POINT_COUNT, PATH_SPACING, WAYPOINT_COUNT, WAYPOINT_DT, PlanLabel
from .scene import DEFAULT_SPEED_LIMITS_KMH, ObjectClass, speed_limit_ms
from .world import EGO_HALF_LENGTH, EGO_HALF_WIDTH, ScenarioKind, World

_SIM_DT = 0.05


@dataclass(frozen=True)
class ExpertConfig:
    clearance: float = 0.5              # lateral margin around obstacles
    a_max: float = 3.0                  # braking-law deceleration
    gap_min: float = 4.0                # standstill gap to a leader
    stop_line_gap: float = 2.0          # front bumper offset before stop lines
    pedestrian_gap: float = 6.0
    wait_gap: float = 5.0               # stop distance before a blocked cluster
    cluster_merge_gap: float = 20.0
    transition_speed_gain: float = 1.5  # transition length = gain * v, clamped
    transition_min: float = 6.0
    transition_max: float = 12.0
    hold_margin: float = 5.0            # full offset held this far around a cluster
    wait_setback: float = 8.0           # extra holdback when waiting for a gate
    execution_margin: float = 0.3       # extra planned offset absorbing tracking lag
    maneuver_speed_cap: float = 7.0
    overtake_nominal_speed: float = 4.0
    overtake_buffer: float = 3.0        # extra seconds demanded from the gate
    emergency_yield_distance: float = 40.0
    trajectory_noise: float = 0.0       # lateral jitter on offsets (anti-bias mode)
    speed_limits_kmh: tuple = DEFAULT_SPEED_LIMITS_KMH


@dataclass
class _Cluster:
    s0: float
    s1: float
    l0: float
    l1: float


@dataclass
class _PlanContext:
    leaders: list = field(default_factory=list)     # (rear_arc, speed)
    stop_arcs: list = field(default_factory=list)   # front bumper must not pass
    holds: list = field(default_factory=list)       # (start, end, offset)
    maneuvering: bool = False
    feasible: bool = True


def _actor_route_extent(actor, route):
    """Arc/lateral bounding intervals of an actor's box in route coordinates."""
    corners = geometry.box_corners(actor.x, actor.y, actor.yaw,
                                   actor.half_length, actor.half_width)
    ss, ls = [], []
    for corner in corners:
        s, l, _ = geometry.project_to_polyline_extended(corner, route)
        ss.append(s)
        ls.append(l)
    return min(ss), max(ss), min(ls), max(ls)


class RuleExpert:
    """Stateful per-episode expert (overtake commitment, optional noise)."""

    needs_scene = False

    def __init__(self, config: ExpertConfig | None = None):
        self.config = config or ExpertConfig()
        self.reset()

    def reset(self, seed: int | None = None):
        self._committed = None          # (start_arc, end_arc, offset)
        self._noise_cache: dict[int, float] = {}
        self._rng = np.random.default_rng(seed)

    # `plan` is the closed-loop planner interface; the full PlanLabel is the
    # dataset label.
    def plan(self, scene, world: World) -> PlanLabel:
        return self.plan_label(world)

    def plan_label(self, world: World) -> PlanLabel:
        cfg = self.config
        ego_arc, ego_lat = world.ego_arc_lateral()
        front_arc = ego_arc + EGO_HALF_LENGTH
        v = world.ego.speed
        ctx = self._build_context(world, ego_arc, front_arc, v)

        if not ctx.feasible:
            return self._full_stop_plan(world, ego_arc)

        offset_fn = self._offset_profile(ctx.holds, ego_arc, ego_lat, v)
        target_fn = self._target_fn(world, ctx, ego_lat)
        target_now = target_fn(front_arc, 0.0)

        path = self._build_path(world, offset_fn, ego_arc)
        waypoints = self._simulate_waypoints(world, offset_fn, target_fn, ego_arc, v)
        return PlanLabel(path_points=path, waypoints=waypoints,
                         target_speed=target_now, feasible=True)

    # -- context ------------------------------------------------------------

    def _build_context(self, world: World, ego_arc, front_arc, v) -> _PlanContext:
        cfg = self.config
        ctx = _PlanContext()
        route = world.route
        reach = EGO_HALF_WIDTH + cfg.clearance
        corridor = (-reach, reach)

        statics, oncoming = [], []
        for actor in world.live_actors():
            s0, s1, l0, l1 = _actor_route_extent(actor, route)
            if actor.object_class is ObjectClass.PEDESTRIAN:
                self._pedestrian_constraint(ctx, world, actor, front_arc, route)
                continue
            if actor.speed <= 0.2:
                if s1 > ego_arc - 3.0 and s0 < ego_arc + 120.0 and abs(l0) < 8.0:
                    statics.append(_Cluster(s0, s1, l0, l1))
                continue
            tangent = geometry.tangent_at_arc(route, 0.5 * (s0 + s1))
            heading = np.array([math.cos(actor.yaw), math.sin(actor.yaw)])
            alignment = float(heading @ tangent)
            if alignment > 0.3:
                near_corridor = l0 < corridor[1] + 1.0 and l1 > corridor[0] - 1.0
                if s0 > front_arc - 1.0 and near_corridor:
                    ctx.leaders.append((s0, actor.speed))
            elif alignment < -0.3:
                oncoming.append((s0, s1, l0, l1, actor.speed))

        self._emergency_yield(ctx, world, front_arc)
        self._static_clusters(ctx, world, statics, oncoming, ego_arc, v)
        self._encroachers(ctx, world, oncoming, ego_arc, front_arc)
        self._stop_lines(ctx, world, front_arc)
        if self._committed is not None and ego_arc > self._committed[1]:
            self._committed = None
        return ctx

    def _pedestrian_constraint(self, ctx, world, actor, front_arc, route):
        if actor.speed <= 0.1:
            return
        s, l, _ = geometry.project_to_polyline((actor.x, actor.y), route)
        if s < front_arc - 2.0:
            return
        tangent = geometry.tangent_at_arc(route, s)
        normal = np.array([-tangent[1], tangent[0]])
        vel = actor.speed * np.array([math.cos(actor.yaw), math.sin(actor.yaw)])
        lat_vel = float(vel @ normal)
        inside = abs(l) < 1.9
        closing = abs(l) < 4.5 and l * lat_vel < 0.0
        if inside or closing:
            ctx.stop_arcs.append(s - self.config.pedestrian_gap)

    def _emergency_yield(self, ctx, world, front_arc):
        """Never enter an intersection while an emergency vehicle approaches."""
        cfg = self.config
        for actor in world.live_actors():
            if actor.object_class is not ObjectClass.EMERGENCY_VEHICLE:
                continue
            if actor.speed <= 0.2:
                continue
            to_ego = np.array([world.ego.x - actor.x, world.ego.y - actor.y])
            dist = float(np.linalg.norm(to_ego))
            heading = np.array([math.cos(actor.yaw), math.sin(actor.yaw)])
            approaching = float(heading @ to_ego) > 0.0
            if dist < cfg.emergency_yield_distance and approaching:
                for z0, z1 in world.intersection_zones:
                    if z1 > front_arc - 1.0:
                        ctx.stop_arcs.append(z0 - 1.0)

    def _static_clusters(self, ctx, world, statics, oncoming, ego_arc, v):
        cfg = self.config
        if not statics:
            return
        statics.sort(key=lambda c: c.s0)
        clusters = [statics[0]]
        for c in statics[1:]:
            prev = clusters[-1]
            if c.s0 - prev.s1 < cfg.cluster_merge_gap:
                prev.s1 = max(prev.s1, c.s1)
                prev.l0 = min(prev.l0, c.l0)
                prev.l1 = max(prev.l1, c.l1)
            else:
                clusters.append(c)

        reach = EGO_HALF_WIDTH + cfg.clearance
        lo_bound, hi_bound = world.offset_bounds
        front_arc = ego_arc + EGO_HALF_LENGTH
        for idx, cluster in enumerate(clusters):
            if cluster.l0 > reach or cluster.l1 < -reach:
                continue  # does not intrude the straight-ahead corridor
            o_right = cluster.l0 - reach
            o_left = cluster.l1 + reach
            options = []
            if o_right >= lo_bound:
                options.append(o_right)
            if o_left <= hi_bound:
                options.append(o_left)
            if not options:
                # Hard-blocked corridor: approach like a stationary leader;
                # once pinned against it there is no feasible path forward.
                ctx.leaders.append((cluster.s0, 0.0))
                if cluster.s0 - front_arc < 8.0:
                    ctx.feasible = False
                continue
            options.sort(key=abs)
            chosen = None
            for o in options:
                crossing = o + EGO_HALF_WIDTH > world.lane_half_width
                if not crossing:
                    chosen = o
                    break
                if self._overtake_allowed(world, oncoming, ego_arc, v, cluster, o):
                    chosen = o
                    break
            if chosen is None:
                # Wait for the gate, held back far enough that the lane
                # change can still develop from a standing start.
                ctx.leaders.append((cluster.s0 - cfg.wait_setback, 0.0))
                continue
            chosen += math.copysign(cfg.execution_margin, chosen)
            chosen = float(np.clip(chosen, lo_bound, hi_bound))
            chosen += self._hold_noise(idx)
            start = cluster.s0 - cfg.hold_margin
            end = cluster.s1 + cfg.hold_margin
            ctx.holds.append((start, end, chosen))
            if chosen + EGO_HALF_WIDTH > world.lane_half_width:
                trans = self._transition_length(v)
                self._committed = (start - trans, end + trans, chosen)
            ctx.maneuvering = True

    def _hold_noise(self, cluster_idx: int) -> float:
        amp = self.config.trajectory_noise
        if amp <= 0.0:
            return 0.0
        if cluster_idx not in self._noise_cache:
            self._noise_cache[cluster_idx] = float(self._rng.uniform(-amp, amp))
        return self._noise_cache[cluster_idx]

    def _overtake_allowed(self, world, oncoming, ego_arc, v, cluster, offset) -> bool:
        """Initiate a lane change only when the oncoming lane stays free."""
        cfg = self.config
        if self._committed is not None:
            c0, c1, co = self._committed
            if cluster.s0 - cfg.hold_margin <= c1 and cluster.s1 + cfg.hold_margin >= c0:
                return True  # already committed to this stretch
        trans = self._transition_length(v)
        occupy_end = cluster.s1 + cfg.hold_margin + trans
        t_occ = max(occupy_end - ego_arc, 0.0) / cfg.overtake_nominal_speed \
            + cfg.overtake_buffer
        corridor = (offset - EGO_HALF_WIDTH - 0.2, offset + EGO_HALF_WIDTH + 0.2)

        for s0, s1, l0, l1, speed in oncoming:
            if l0 > corridor[1] or l1 < corridor[0]:
                continue
            if s1 < ego_arc - 2.0:
                continue
            dist = s0 - occupy_end
            if dist <= 0.0 or dist / max(speed, 0.1) < t_occ:
                return False
        # Scheduled oncoming traffic is part of the privileged world state.
        if world.oncoming_path is not None and world.oncoming_schedule:
            spawn_arc, _, _ = geometry.project_to_polyline_extended(
                world.oncoming_path[0], world.route)
            speed = world.template.oncoming_speed
            for ts in world.oncoming_schedule:
                arrival = (ts - world.time) + max(spawn_arc - occupy_end, 0.0) / speed
                if arrival < t_occ:
                    return False
        return True

    def _encroachers(self, ctx, world, oncoming, ego_arc, front_arc):
        """Oncoming traffic intruding into the ego lane: shift right, briefly."""
        cfg = self.config
        reach = EGO_HALF_WIDTH + cfg.clearance
        lo_bound = world.offset_bounds[0]
        for s0, s1, l0, l1, speed in oncoming:
            if l0 > reach or l1 < -reach:
                continue  # stays clear of the straight-ahead corridor
            if s1 < ego_arc - 2.0:
                continue
            o_req = l0 - reach
            if o_req >= lo_bound:
                ctx.holds.append((ego_arc - 2.0, s1 + 8.0, max(o_req, lo_bound)))
                ctx.maneuvering = True
            else:
                ctx.stop_arcs.append(s0 - cfg.wait_gap)

    def _stop_lines(self, ctx, world, front_arc):
        cfg = self.config
        sl = world.stop_line
        if sl is None:
            return
        if world.red_light_active() or world.stop_sign_pending():
            if sl.arc - front_arc > -1.0:
                ctx.stop_arcs.append(sl.arc - cfg.stop_line_gap)

    # -- lateral profile ----------------------------------------------------

    def _transition_length(self, v: float) -> float:
        cfg = self.config
        return float(np.clip(cfg.transition_speed_gain * max(v, 1.0),
                             cfg.transition_min, cfg.transition_max))

    def _offset_profile(self, holds, ego_arc, ego_lat, v):
        trans = self._transition_length(v)

        def profile(s: float) -> float:
            o = 0.0
            for h0, h1, oh in holds:
                if h0 - trans <= s <= h1 + trans:
                    if s < h0:
                        w = 0.5 * (1.0 - math.cos(math.pi * (s - (h0 - trans)) / trans))
                    elif s <= h1:
                        w = 1.0
                    else:
                        w = 0.5 * (1.0 + math.cos(math.pi * (s - h1) / trans))
                    cand = oh * w
                    if abs(cand) > abs(o):
                        o = cand
            return o

        delta = ego_lat - profile(ego_arc)
        blend = max(trans, 8.0)

        def offset(s: float) -> float:
            u = s - ego_arc
            if u <= 0.0:
                w = 1.0
            elif u >= blend:
                w = 0.0
            else:
                w = 0.5 * (1.0 + math.cos(math.pi * u / blend))
            return profile(s) + delta * w

        return offset

    def _curve_point(self, world, offset_fn, s: float) -> np.ndarray:
        p = geometry.point_at_arc(world.route, s)
        t = geometry.tangent_at_arc(world.route, s)
        normal = np.array([-t[1], t[0]])
        return p + offset_fn(s) * normal

    def _build_path(self, world, offset_fn, ego_arc) -> np.ndarray:
        dense_s = ego_arc + np.arange(0.0, 32.0, 0.25)
        dense = np.array([self._curve_point(world, offset_fn, s) for s in dense_s])
        local = geometry.points_to_ego_frame(dense, world.ego.pose)
        tail = geometry.resample_chord(local, PATH_SPACING, PATH_POINT_COUNT - 1,
                                       start=local[0])
        return np.vstack([local[0], tail])

    # -- longitudinal -------------------------------------------------------

    def _target_fn(self, world, ctx, ego_lat: float = 0.0):
        cfg = self.config
        limit = speed_limit_ms(world.speed_limit_index, cfg.speed_limits_kmh)
        off_center = abs(ego_lat) > 0.2

        def target(front_arc: float, t: float) -> float:
            vals = [limit]
            near_hold = any(h0 - 30.0 <= front_arc <= h1 + 30.0
                            for h0, h1, _ in ctx.holds)
            if near_hold or off_center:
                vals.append(cfg.maneuver_speed_cap)
            for rear_arc, speed in ctx.leaders:
                gap = (rear_arc + speed * t) - front_arc
                vals.append(math.sqrt(max(0.0, 2.0 * cfg.a_max * (gap - cfg.gap_min))))
            for stop_arc in ctx.stop_arcs:
                d = stop_arc - front_arc
                if d > -1.5:
                    vals.append(math.sqrt(max(0.0, 2.0 * cfg.a_max * d)))
            return max(0.0, min(vals))

        return target

    def _simulate_waypoints(self, world, offset_fn, target_fn, ego_arc, v) -> np.ndarray:
        s = ego_arc
        speed = v
        t = 0.0
        substeps = int(round(WAYPOINT_DT / _SIM_DT))
        pts = []
        for _ in range(WAYPOINT_COUNT):
            for _ in range(substeps):
                vt = target_fn(s + EGO_HALF_LENGTH, t)
                a = expert_accel(speed, vt)
                speed = max(0.0, speed + a * _SIM_DT)
                s += speed * _SIM_DT
                t += _SIM_DT
            pts.append(self._curve_point(world, offset_fn, s))
        return geometry.points_to_ego_frame(np.array(pts), world.ego.pose)

    def _full_stop_plan(self, world, ego_arc) -> PlanLabel:
        route_local = geometry.points_to_ego_frame(world.route, world.ego.pose)
        arc, _, _ = geometry.project_to_polyline((0.0, 0.0), route_local)
        start = geometry.point_at_arc(route_local, arc)
        tail = geometry.resample_chord(route_local, PATH_SPACING,
                                       PATH_POINT_COUNT - 1, start=start)
        path = np.vstack([start, tail])
        waypoints = np.zeros((WAYPOINT_COUNT, 2))
        return PlanLabel(path_points=path, waypoints=waypoints,
                         target_speed=0.0, feasible=False)


def expert_plan(world: World, config: ExpertConfig | None = None) -> PlanLabel:
    """One-shot expert plan for the current world state."""
    return RuleExpert(config).plan_label(world)


def longitudinal_target(world: World, config: ExpertConfig | None = None) -> float:
    """Current longitudinal target: min(limit, gap-limited, stop-limited)."""
    expert = RuleExpert(config)
    ego_arc, _ = world.ego_arc_lateral()
    front_arc = ego_arc + EGO_HALF_LENGTH
    ctx = expert._build_context(world, ego_arc, front_arc, world.ego.speed)
    return expert._target_fn(world, ctx)(front_arc, 0.0)
