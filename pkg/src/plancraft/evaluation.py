"""Closed-loop suite evaluation and the representation x generator ablation."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .control import LongitudinalController
from .episode import EpisodeLog, SimConfig, run_episode, write_episode_jsonl
from .metrics import RouteResult, aggregate_report, evaluate_episode, success_rate
from .model import ModelConfig, ModelPlanner, TrainConfig, train
from .scenarios import DEFAULT_TEMPLATES
from .world import InfractionKind, ScenarioKind


def suite_world_seed(eval_seed: int, template_index: int) -> int:
    return eval_seed * 1009 + template_index


def run_suite(planner, template_kinds=None, eval_seeds=(0,),
              sim_config: SimConfig | None = None,
              controller: LongitudinalController | None = None,
              log_dir: str | Path | None = None):
    """Run the scenario suite; returns (RouteResults, EpisodeLogs)."""
    kinds = list(template_kinds or ScenarioKind)
    sim_config = sim_config or SimConfig(time_limit=120.0)
    results, logs = [], []
    for eval_seed in eval_seeds:
        for t_idx, kind in enumerate(kinds):
            kind = ScenarioKind(kind)
            template = DEFAULT_TEMPLATES[kind]
            seed = suite_world_seed(eval_seed, t_idx)
            log = run_episode(planner, template, seed, config=sim_config,
                              controller=controller)
            results.append(evaluate_episode(log))
            logs.append(log)
            if log_dir is not None:
                out = Path(log_dir)
                out.mkdir(parents=True, exist_ok=True)
                write_episode_jsonl(
                    log, out / f"{kind.value}-seed{seed}.jsonl")
    return results, logs


# ---------------------------------------------------------------------------
# Ablation: 3 representations x 3 generators x train seeds x eval seeds
# ---------------------------------------------------------------------------

HEADS = ("wps", "path", "pwp")
GENERATORS = ("gru_single", "gru_multi", "linear")


@dataclass(frozen=True)
class AblateConfig:
    train_seeds: tuple = (0, 1, 2)
    eval_seeds: tuple = (0, 1, 2)
    epochs: int = 10
    batch_size: int = 128
    lr: float = 1e-4
    d_model: int = 256
    n_layers: int = 4
    n_heads: int = 8
    ffn_mult: int = 4
    template_kinds: tuple = tuple(k.value for k in ScenarioKind)
    time_limit: float = 120.0


def _cell_metrics(results) -> dict:
    km = sum(r.km_driven for r in results)

    def per_km(kind):
        total = sum(r.counts.get(kind, 0) for r in results)
        return total / km if km > 0 else 0.0

    return {
        "nds": float(np.mean([r.nds for r in results])),
        "ds": float(np.mean([r.ds for r in results])),
        "rc": float(np.mean([r.rc for r in results])),
        "sr": success_rate(results),
        "cv_per_km": per_km(InfractionKind.COLLISION_VEHICLE),
        "cl_per_km": per_km(InfractionKind.COLLISION_STATIC),
        "st_per_km": per_km(InfractionKind.SCENARIO_TIMEOUT),
    }


def ablate(arrays_or_samples, config: AblateConfig | None = None,
           controller: LongitudinalController | None = None, log=None) -> dict:
    """Train and evaluate the full 3x3 grid.

    For every (head, generator) cell: one model per training seed, each
    evaluated with every evaluation seed on the scenario suite.  Cell
    statistics are mean +- std across training seeds of the per-seed means
    (std across training seeds, following the reporting convention).
    Per-cell failures are recorded and the table is still emitted.
    """
    config = config or AblateConfig()
    from .model.train import prepare_arrays
    arrays = (arrays_or_samples if isinstance(arrays_or_samples, dict)
              else prepare_arrays(arrays_or_samples))
    sim = SimConfig(time_limit=config.time_limit)

    grid = {}
    runs = []
    for head in HEADS:
        grid[head] = {}
        for gen in GENERATORS:
            per_train_seed = []
            errors = []
            for train_seed in config.train_seeds:
                try:
                    mcfg = ModelConfig(
                        d_model=config.d_model, n_layers=config.n_layers,
                        n_heads=config.n_heads, ffn_mult=config.ffn_mult,
                        head_kind=head, generator=gen)
                    tcfg = TrainConfig(epochs=config.epochs,
                                       batch_size=config.batch_size,
                                       lr=config.lr, seed=train_seed)
                    trained = train(arrays, mcfg, tcfg)
                    planner = ModelPlanner(trained.model)
                    seed_metrics = []
                    for eval_seed in config.eval_seeds:
                        results, _ = run_suite(
                            planner, config.template_kinds, (eval_seed,),
                            sim_config=sim, controller=controller)
                        seed_metrics.append(_cell_metrics(results))
                    mean_over_eval = {
                        k: float(np.mean([m[k] for m in seed_metrics]))
                        for k in seed_metrics[0]}
                    per_train_seed.append(mean_over_eval)
                    runs.append({"head": head, "generator": gen,
                                 "train_seed": train_seed,
                                 "metrics": mean_over_eval,
                                 "final_train_loss": trained.final_train_loss})
                except Exception as exc:  # noqa: BLE001 - cell fault isolation
                    errors.append(f"seed {train_seed}: {type(exc).__name__}: {exc}")
                if log is not None:
                    log(f"[{head} x {gen}] train_seed={train_seed} done")
            if per_train_seed:
                keys = per_train_seed[0]
                cell = {k: {"mean": float(np.mean([m[k] for m in per_train_seed])),
                            "std": float(np.std([m[k] for m in per_train_seed]))}
                        for k in keys}
            else:
                cell = None
            grid[head][gen] = {"metrics": cell, "errors": errors,
                               "n_runs": len(per_train_seed)}
    return {
        "config": {
            "train_seeds": list(config.train_seeds),
            "eval_seeds": list(config.eval_seeds),
            "epochs": config.epochs, "d_model": config.d_model,
            "n_layers": config.n_layers,
        },
        "grid": grid,
        "runs": runs,
    }


def format_ablation_table(report: dict) -> str:
    """Plain-text grid (NDS mean +- std) plus detail columns per cell."""
    lines = []
    header = f"{'NDS':>12s} | " + " | ".join(f"{h:>18s}" for h in HEADS)
    lines.append(header)
    lines.append("-" * len(header))
    for gen in GENERATORS:
        cells = []
        for head in HEADS:
            cell = report["grid"][head][gen]["metrics"]
            if cell is None:
                cells.append(f"{'failed':>18s}")
            else:
                m, s = cell["nds"]["mean"], cell["nds"]["std"]
                cells.append(f"{m:9.3f} +-{s:5.3f}")
        lines.append(f"{gen:>12s} | " + " | ".join(cells))
    lines.append("")
    lines.append("per-cell detail: RC | CV/km | CL/km | ST/km")
    for head in HEADS:
        for gen in GENERATORS:
            cell = report["grid"][head][gen]["metrics"]
            if cell is None:
                continue
            lines.append(
                f"  {head:>4s} x {gen:<10s}: rc={cell['rc']['mean']:.3f}  "
                f"cv={cell['cv_per_km']['mean']:.3f}  "
                f"cl={cell['cl_per_km']['mean']:.3f}  "
                f"st={cell['st_per_km']['mean']:.3f}")
    return "\n".join(lines)
