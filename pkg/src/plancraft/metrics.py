"""Driving metrics: RC, IS, DS, NDS, SR, and report aggregation."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import geometry
from .episode import EpisodeLog
from .world import InfractionKind

#: CARLA-style penalty multipliers; configuration, not measurement.
DEFAULT_PENALTIES = {
    InfractionKind.COLLISION_PEDESTRIAN: 0.50,
    InfractionKind.COLLISION_VEHICLE: 0.60,
    InfractionKind.COLLISION_STATIC: 0.65,
    InfractionKind.RED_LIGHT: 0.70,
    InfractionKind.STOP_SIGN: 0.80,
    InfractionKind.SCENARIO_TIMEOUT: 0.70,
}


def validate_penalties(table: dict) -> dict:
    for kind, mult in table.items():
        if not (0.0 < mult <= 1.0):
            raise ValueError(f"penalty for {kind} must be in (0, 1], got {mult}")
    return table


@dataclass(frozen=True)
class RouteResult:
    rc: float
    is_: float
    ds: float
    nds: float
    counts: dict                      # InfractionKind -> int
    km_driven: float
    template: str = ""
    seed: int = 0
    termination: str = ""

    def to_json(self) -> dict:
        return {
            "rc": self.rc, "is": self.is_, "ds": self.ds, "nds": self.nds,
            "km_driven": self.km_driven,
            "counts": {k.value: v for k, v in self.counts.items() if v},
            "template": self.template, "seed": self.seed,
            "termination": self.termination,
        }


def route_completion(log: EpisodeLog) -> float:
    """Monotone closest-point arc coverage divided by route length.

    A completed episode snaps to exactly 1.0; a RouteDeviation caps the
    fraction at the deviation point.  Zero-length routes count as complete.
    """
    if log.route_length <= 0.0:
        return 1.0
    if log.completed:
        return 1.0
    best = 0.0
    for step in log.steps:
        arc, _, _ = geometry.project_to_polyline((step.ego.x, step.ego.y), log.route)
        best = max(best, arc)
    deviation = [e for e in log.infractions
                 if e.kind is InfractionKind.ROUTE_DEVIATION]
    if deviation:
        arc, _, _ = geometry.project_to_polyline((deviation[0].x, deviation[0].y),
                                                 log.route)
        best = min(best, arc)
    return float(np.clip(best / log.route_length, 0.0, 1.0))


def infraction_counts(log: EpisodeLog) -> dict:
    counts = {kind: 0 for kind in InfractionKind}
    for event in log.infractions:
        counts[event.kind] += 1
    return counts


def infraction_score(counts: dict, table: dict | None = None) -> float:
    """Product of penalty multipliers over all counted infractions.

    Multiset semantics: the product runs in a canonical kind order so the
    result is bit-identical regardless of event or dict ordering.
    """
    table = validate_penalties(table or DEFAULT_PENALTIES)
    score = 1.0
    for kind in InfractionKind:
        count = counts.get(kind, 0)
        if kind in table and count:
            score *= table[kind] ** count
    return score


def driving_score(rc: float, is_: float) -> float:
    return rc * is_


def normalized_driving_score(rc: float, counts: dict, km_driven: float,
                             table: dict | None = None) -> float:
    """Per-kilometer geometric penalty: NDS = RC * prod p_k^(n_k / km).

    At a fixed per-km infraction rate the penalty factor is constant, so
    NDS increases with route completion (unlike DS on long routes).
    """
    table = validate_penalties(table or DEFAULT_PENALTIES)
    if km_driven <= 0.0:
        return rc
    score = rc
    for kind in InfractionKind:
        count = counts.get(kind, 0)
        if kind in table and count:
            score *= table[kind] ** (count / km_driven)
    return score


def evaluate_episode(log: EpisodeLog, table: dict | None = None) -> RouteResult:
    rc = route_completion(log)
    counts = infraction_counts(log)
    is_ = infraction_score(counts, table)
    km = log.distance_completed / 1000.0
    return RouteResult(
        rc=rc, is_=is_, ds=driving_score(rc, is_),
        nds=normalized_driving_score(rc, counts, km, table),
        counts=counts, km_driven=km,
        template=log.template_kind, seed=log.seed, termination=log.termination,
    )


def success_rate(results) -> float:
    """Fraction of episodes with full completion and zero infractions."""
    results = list(results)
    if not results:
        raise ValueError("success_rate of an empty result list")
    good = sum(1 for r in results
               if r.rc >= 1.0 - 1e-9 and sum(r.counts.values()) == 0)
    return good / len(results)


def aggregate_report(results) -> dict:
    """Per-episode results plus mean/std aggregates (across episodes)."""
    results = list(results)
    arr = {
        "rc": np.array([r.rc for r in results]),
        "is": np.array([r.is_ for r in results]),
        "ds": np.array([r.ds for r in results]),
        "nds": np.array([r.nds for r in results]),
    }
    report = {
        "episodes": [r.to_json() for r in results],
        "n_episodes": len(results),
        "success_rate": success_rate(results) if results else None,
        "aggregate": {
            key: {"mean": float(v.mean()), "std": float(v.std(ddof=0))}
            for key, v in arr.items()
        },
        "infractions_total": {},
        "infractions_per_km": {},
    }
    total_km = sum(r.km_driven for r in results)
    for kind in InfractionKind:
        total = sum(r.counts.get(kind, 0) for r in results)
        if total:
            report["infractions_total"][kind.value] = total
            report["infractions_per_km"][kind.value] = (
                total / total_km if total_km > 0 else None)
    return report


def write_report(report: dict, path: str | Path):
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
