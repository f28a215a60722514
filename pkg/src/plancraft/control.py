"""Plan-to-actuation controllers: lateral PID with variable lookahead and an
affine longitudinal law fitted to expert rollouts."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import geometry
from .plan import WAYPOINT_DT
from .twohot import DEFAULT_SPEED_BINS, two_hot_decode

STEER_LIMIT = 1.22
ACCEL_MIN = -6.0
ACCEL_MAX = 3.0


@dataclass(frozen=True)
class ControlCommand:
    steer: float
    accel: float

    def __post_init__(self):
        object.__setattr__(self, "steer", float(np.clip(self.steer, -STEER_LIMIT, STEER_LIMIT)))
        object.__setattr__(self, "accel", float(np.clip(self.accel, ACCEL_MIN, ACCEL_MAX)))

    def as_tuple(self):
        return (self.steer, self.accel)


def target_speed_from_waypoints(waypoints) -> float:
    """Speed read off the gap between the third and fourth waypoints."""
    wps = np.asarray(waypoints, dtype=float)
    if wps.ndim != 2 or wps.shape[0] < 4:
        raise ValueError("need at least 4 waypoints")
    return float(np.linalg.norm(wps[3] - wps[2]) / WAYPOINT_DT)


@dataclass(frozen=True)
class LateralPIDConfig:
    kp: float = 1.25
    ki: float = 0.1
    kd: float = 0.3
    lookahead_base: float = 2.4    # m
    lookahead_gain: float = 0.35   # s (lookahead grows with speed)
    lookahead_min: float = 2.0
    lookahead_max: float = 10.0
    integral_limit: float = 0.5
    #: Steering is additionally clamped to atan(a_lat_max * wheelbase / v^2):
    #: full range at low speed, a lateral-acceleration bound at speed.  Without
    #: it the steer rail + tan() kinematics sustain a bang-bang limit cycle
    #: above ~10 m/s.
    lat_accel_max: float = 5.0
    wheelbase: float = 2.9


class LateralPID:
    """Steers toward the path point nearest the speed-dependent lookahead arc.

    Holds integral/derivative memory; one instance per episode.
    """

    def __init__(self, config: LateralPIDConfig | None = None):
        self.config = config or LateralPIDConfig()
        self.reset()

    def reset(self):
        self._integral = 0.0
        self._prev_error = None

    def lookahead(self, speed: float) -> float:
        cfg = self.config
        return float(np.clip(cfg.lookahead_base + cfg.lookahead_gain * speed,
                             cfg.lookahead_min, cfg.lookahead_max))

    def step(self, path_points, speed: float, dt: float) -> float:
        """Path points are ego-frame; returns a clamped steering angle."""
        cfg = self.config
        pts = np.asarray(path_points, dtype=float)
        arcs = geometry.polyline_lengths(pts)
        if arcs[-1] < 1e-6:
            return 0.0  # degenerate path: hold the wheel
        idx = int(np.argmin(np.abs(arcs - self.lookahead(speed))))
        if idx == 0 and len(pts) > 1:
            idx = 1
        target = pts[idx]
        error = math.atan2(target[1], target[0])
        self._integral = float(np.clip(self._integral + error * dt,
                                       -cfg.integral_limit, cfg.integral_limit))
        derivative = 0.0 if self._prev_error is None else (error - self._prev_error) / dt
        self._prev_error = error
        steer = cfg.kp * error + cfg.ki * self._integral + cfg.kd * derivative
        limit = STEER_LIMIT
        if speed > 1.0:
            limit = min(limit, math.atan(cfg.lat_accel_max * cfg.wheelbase / speed ** 2))
        return float(np.clip(steer, -limit, limit))


#: Proportional speed-tracking law the expert drives with; the affine
#: controller below is fitted to samples of this behavior.  The gain is
#: high enough that the exponential settling tail creeps well under a
#: meter when tracking a braking profile down to zero.
EXPERT_SPEED_GAIN = 2.5


def expert_accel(current_speed: float, target_speed: float) -> float:
    return float(np.clip(EXPERT_SPEED_GAIN * (target_speed - current_speed),
                         ACCEL_MIN, ACCEL_MAX))


@dataclass(frozen=True)
class LongitudinalController:
    """accel = clamp(c0 + c1 * (v_target - v) + c2 * v_target)."""

    c0: float = 0.0
    c1: float = EXPERT_SPEED_GAIN
    c2: float = 0.0

    def control(self, current_speed: float, target_speed: float) -> float:
        a = self.c0 + self.c1 * (target_speed - current_speed) + self.c2 * target_speed
        return float(np.clip(a, ACCEL_MIN, ACCEL_MAX))

    def to_json(self) -> dict:
        return {"c0": self.c0, "c1": self.c1, "c2": self.c2}

    @classmethod
    def from_json(cls, payload: dict) -> "LongitudinalController":
        return cls(float(payload["c0"]), float(payload["c1"]), float(payload["c2"]))


def fit_longitudinal(samples) -> LongitudinalController:
    """Least-squares fit of the affine law on (speed, target, accel) triples.

    Samples come from expert rollouts.  Clamp-saturated commands are dropped:
    the affine model cannot represent the saturation (the controller clamps
    at apply time), and keeping them biases the linear regime.
    """
    arr = np.asarray(samples, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 3 or len(arr) < 3:
        raise ValueError("need (N >= 3, 3) samples of (speed, target, accel)")
    a = arr[:, 2]
    keep = (a > ACCEL_MIN + 1e-9) & (a < ACCEL_MAX - 1e-9)
    if np.count_nonzero(keep) >= 3:
        arr = arr[keep]
    v, vt, a = arr[:, 0], arr[:, 1], arr[:, 2]
    design = np.stack([np.ones_like(v), vt - v, vt], axis=1)
    coeffs, *_ = np.linalg.lstsq(design, a, rcond=None)
    return LongitudinalController(float(coeffs[0]), float(coeffs[1]), float(coeffs[2]))


class PlanDriver:
    """Converts a PlanOutput (any head variant) into a ControlCommand.

    Lateral control uses path points when present, else waypoints; the
    target speed comes from waypoint spacing when waypoints are present,
    else from the two-hot speed distribution.
    """

    def __init__(self, lateral: LateralPID | None = None,
                 longitudinal: LongitudinalController | None = None,
                 speed_bins=DEFAULT_SPEED_BINS):
        self.lateral = lateral or LateralPID()
        self.longitudinal = longitudinal or LongitudinalController()
        self.speed_bins = tuple(speed_bins)

    def reset(self):
        self.lateral.reset()

    def decode_target_speed(self, plan) -> float:
        if getattr(plan, "waypoints", None) is not None:
            return target_speed_from_waypoints(plan.waypoints)
        if getattr(plan, "speed_probs", None) is not None:
            return two_hot_decode(plan.speed_probs, self.speed_bins)
        raise ValueError("plan carries neither waypoints nor speed_probs")

    def control(self, plan, ego_speed: float, dt: float) -> ControlCommand:
        path = plan.path_points if getattr(plan, "path_points", None) is not None \
            else plan.waypoints
        steer = self.lateral.step(path, ego_speed, dt)
        target = self.decode_target_speed(plan)
        accel = self.longitudinal.control(ego_speed, target)
        return ControlCommand(steer, accel)
