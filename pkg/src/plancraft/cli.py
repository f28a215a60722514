"""Unified command line: collect, train, eval, ablate, perturb, serve.

Exit codes: 0 ok, 1 usage, 2 data error, 3 numerical fault.
"""

from __future__ import annotations

import argparse
import json
import shutil
import sys
from pathlib import Path

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> _Parser:
    parser = _Parser(prog="plancraft", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("collect", help="roll out the expert and write dataset shards")
    p.add_argument("--out", required=True)
    p.add_argument("--templates", default="all",
                   help="comma-separated template kinds, or 'all'")
    p.add_argument("--seeds", default="4",
                   help="seed count N (0..N-1) or comma-separated seeds")
    p.add_argument("--augment-frac", type=float, default=0.3)
    p.add_argument("--time-limit", type=float, default=120.0)
    p.add_argument("--bias", action="store_true",
                   help="bias-train recipe: no recovery augmentation")
    p.add_argument("--config", help="run-config JSON overriding the above")

    p = sub.add_parser("train", help="train a planner on collected shards")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="run-config JSON (model + train sections)")
    p.add_argument("--head", choices=("wps", "path", "pwp"))
    p.add_argument("--generator", choices=("gru_single", "gru_multi", "linear"))
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--val-frac", type=float)
    p.add_argument("--paper-scale", action="store_true",
                   help="30 epochs, batch 128, lr 1e-4 with a final-epoch drop")

    p = sub.add_parser("eval", help="closed-loop evaluation / report generation")
    p.add_argument("--runs", required=True,
                   help="directory of episode JSONL logs (read, or written "
                        "when --model is given)")
    p.add_argument("--report", required=True)
    p.add_argument("--model", help="checkpoint: run the suite before reporting")
    p.add_argument("--templates", default="all")
    p.add_argument("--seeds", default="1")
    p.add_argument("--time-limit", type=float, default=120.0)

    p = sub.add_parser("ablate", help="3x3 representation/generator study")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--train-seeds", default="0,1,2")
    p.add_argument("--eval-seeds", default="0,1,2")
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--paper-scale", action="store_true",
                   help="use the full 30-epoch schedule per cell")
    p.add_argument("--d-model", type=int, default=256)
    p.add_argument("--n-layers", type=int, default=4)
    p.add_argument("--n-heads", type=int, default=8)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--time-limit", type=float, default=120.0)

    p = sub.add_parser("perturb", help="run a probe preset against a model")
    p.add_argument("--model", required=True)
    p.add_argument("--preset", required=True)
    p.add_argument("--scene", help="scene JSON overriding the preset's base scene")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--csv", help="also write two-column axis/target-speed data")
    p.add_argument("--threshold", type=float, default=3.0,
                   help="jump-detector threshold (m/s)")

    p = sub.add_parser("serve", help="HTTP service for the workbench UI")
    p.add_argument("--model", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8023)
    p.add_argument("--ui", help="directory of built UI assets to serve at /")

    return parser


def _parse_seeds(raw: str) -> tuple:
    if "," in raw:
        return tuple(int(s) for s in raw.split(",") if s.strip() != "")
    return tuple(range(int(raw)))


def _parse_templates(raw: str) -> tuple:
    from .world import ScenarioKind
    if raw == "all":
        return tuple(k.value for k in ScenarioKind)
    kinds = tuple(s.strip() for s in raw.split(",") if s.strip())
    for k in kinds:
        ScenarioKind(k)  # validates
    return kinds


def cmd_collect(args) -> int:
    from .config import load_run_config
    from .dataset import CollectConfig, collect, write_shards

    if args.config:
        cfg = load_run_config(args.config).collect
    else:
        cfg = CollectConfig(
            template_kinds=_parse_templates(args.templates),
            seeds=_parse_seeds(args.seeds),
            augment_frac=0.0 if args.bias else args.augment_frac,
            time_limit=args.time_limit,
        )
    print(f"collecting: {len(cfg.template_kinds)} templates x {len(cfg.seeds)} seeds")
    result = collect(cfg, progress=lambda kind, seed, n:
                     print(f"  {kind} seed={seed}: {n} samples so far"))
    manifest = write_shards(result, args.out, augment_frac=cfg.augment_frac)
    print(f"wrote {manifest['n_samples']} samples "
          f"({manifest['n_augmented']} augmented, {result.discarded} episodes "
          f"discarded) to {args.out}")
    balance = manifest["class_balance"]
    for cls, frac in balance.items():
        marker = "" if frac >= 0.01 else "  <-- below 1% presence"
        print(f"  class {cls:<24s} in {frac * 100:5.1f}% of samples{marker}")
    return EXIT_OK


def cmd_train(args) -> int:
    from .config import load_run_config
    from .dataset import load_controller, read_shards
    from .model import ModelConfig, TrainConfig, save_checkpoint, train
    from .model.train import prepare_arrays

    if args.config:
        run = load_run_config(args.config)
        mcfg, tcfg = run.model, run.train
    else:
        mcfg, tcfg = ModelConfig(), TrainConfig()
    overrides = {}
    if args.head:
        overrides["head_kind"] = args.head
    if args.generator:
        overrides["generator"] = args.generator
    if overrides:
        from dataclasses import replace
        mcfg = replace(mcfg, **overrides)
    t_overrides = {}
    if args.paper_scale:
        t_overrides.update(epochs=30, batch_size=128, lr=1e-4)
    for name in ("epochs", "batch_size", "lr", "seed", "val_frac"):
        value = getattr(args, name)
        if value is not None:
            t_overrides[name] = value
    if t_overrides:
        from dataclasses import replace
        tcfg = replace(tcfg, **t_overrides)

    print(f"loading dataset from {args.data}")
    samples = read_shards(args.data)
    print(f"{len(samples)} samples; packing arrays")
    arrays = prepare_arrays(samples)
    result = train(arrays, mcfg, tcfg, log=print)
    controller = load_controller(args.data)
    save_checkpoint(result.model, args.out, extra={
        "controller": controller.to_json(),
        "final_val_loss": result.final_val_loss,
        "final_train_loss": result.final_train_loss,
        "epochs_run": result.epochs_run,
    })
    sidecar = Path(args.out).with_name("controller.json")
    with open(sidecar, "w") as fh:
        json.dump(controller.to_json(), fh, indent=2)
        fh.write("\n")
    print(f"checkpoint written to {args.out} "
          f"(val loss {result.final_val_loss:.4f}); controller sidecar {sidecar}")
    return EXIT_OK


def _load_model_and_controller(path: str):
    from .control import LongitudinalController
    from .model import load_checkpoint
    model, extra = load_checkpoint(path)
    controller = LongitudinalController()
    sidecar = Path(path).with_name("controller.json")
    if sidecar.exists():
        with open(sidecar) as fh:
            controller = LongitudinalController.from_json(json.load(fh))
    elif "controller" in extra:
        controller = LongitudinalController.from_json(extra["controller"])
    return model, controller


def cmd_eval(args) -> int:
    from .episode import SimConfig, read_episode_jsonl
    from .evaluation import run_suite
    from .metrics import aggregate_report, evaluate_episode, write_report
    from .model import ModelPlanner

    runs_dir = Path(args.runs)
    if args.model:
        model, controller = _load_model_and_controller(args.model)
        planner = ModelPlanner(model)
        results, _ = run_suite(
            planner, _parse_templates(args.templates), _parse_seeds(args.seeds),
            sim_config=SimConfig(time_limit=args.time_limit),
            controller=controller, log_dir=runs_dir)
    else:
        logs = sorted(runs_dir.glob("*.jsonl"))
        if not logs:
            print(f"no episode logs in {runs_dir}", file=sys.stderr)
            return EXIT_DATA
        results = [evaluate_episode(read_episode_jsonl(p)) for p in logs]
    report = aggregate_report(results)
    write_report(report, args.report)
    agg = report["aggregate"]
    print(f"{report['n_episodes']} episodes: "
          f"DS {agg['ds']['mean']:.3f}+-{agg['ds']['std']:.3f}  "
          f"NDS {agg['nds']['mean']:.3f}  RC {agg['rc']['mean']:.3f}  "
          f"SR {report['success_rate']:.2f}")
    print(f"report written to {args.report}")
    return EXIT_OK


def cmd_ablate(args) -> int:
    from .dataset import load_controller, read_shards
    from .evaluation import AblateConfig, ablate, format_ablation_table
    from .model.train import prepare_arrays

    samples = read_shards(args.data)
    arrays = prepare_arrays(samples)
    cfg = AblateConfig(
        train_seeds=_parse_seeds(args.train_seeds),
        eval_seeds=_parse_seeds(args.eval_seeds),
        epochs=30 if args.paper_scale else args.epochs,
        batch_size=args.batch_size,
        d_model=args.d_model, n_layers=args.n_layers, n_heads=args.n_heads,
        time_limit=args.time_limit,
    )
    report = ablate(arrays, cfg, controller=load_controller(args.data), log=print)
    with open(args.out, "w") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    print(format_ablation_table(report))
    print(f"ablation report written to {args.out}")
    return EXIT_OK


def cmd_perturb(args) -> int:
    from .model.planner import infer
    from .perturb import apply, decoded_target_speed, jump_detector, min_clearance, sweep
    from .presets import build_preset
    from .scene import scene_from_json, scene_to_json
    from .service import model_id_of
    from .world import EGO_HALF_LENGTH, EGO_HALF_WIDTH

    model, _ = _load_model_and_controller(args.model)
    setup = build_preset(args.preset, seed=args.seed)
    scene = setup.scene
    road_map, ego_pose = setup.road_map, setup.ego_pose
    if args.scene:
        with open(args.scene) as fh:
            scene = scene_from_json(json.load(fh))
        road_map = ego_pose = None
    model_id = model_id_of(args.model)

    out: dict = {"preset": setup.name, "description": setup.description,
                 "notes": setup.notes, "model_id": model_id}
    if setup.axis is not None:
        result = sweep(scene, setup.axis, setup.values,
                       lambda s: infer(model, s), model.config.speed_bins,
                       road_map=road_map, ego_pose=ego_pose, model_id=model_id,
                       scene_id=setup.name)
        payload = result.to_json()
        payload["jumps"] = [[v, d] for v, d in
                            jump_detector(result, threshold=args.threshold)]
        out["sweep"] = payload
        if args.csv:
            with open(args.csv, "w") as fh:
                fh.write(f"{setup.axis.kind}_{setup.axis.units},target_speed\n")
                for p in result.points:
                    speed = "" if p.target_speed is None else f"{p.target_speed:.6f}"
                    fh.write(f"{p.value:.6f},{speed}\n")
    else:
        variants = {}
        for name, ops in setup.specs.items():
            perturbed, flags = apply(scene, ops, road_map=road_map,
                                     ego_pose=ego_pose)
            plan = infer(model, perturbed)
            entry = {
                "plan": plan.to_json(),
                "target_speed": decoded_target_speed(plan, model.config.speed_bins),
                "flags": flags,
                "scene": scene_to_json(perturbed),
            }
            if plan.path_points is not None and perturbed.objects:
                entry["min_clearance"] = min_clearance(
                    plan, (EGO_HALF_LENGTH, EGO_HALF_WIDTH),
                    [o for o in perturbed.objects])
            variants[name] = entry
        out["variants"] = variants
    with open(args.out, "w") as fh:
        json.dump(out, fh, indent=2)
        fh.write("\n")
    print(f"probe output written to {args.out}")
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn
    from .service import app_from_checkpoint

    app = app_from_checkpoint(args.model, ui_dir=args.ui)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return EXIT_OK


_COMMANDS = {
    "collect": cmd_collect,
    "train": cmd_train,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "perturb": cmd_perturb,
    "serve": cmd_serve,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    from .config import ConfigError
    from .dataset import CollectionError, IntegrityError
    from .model import NumericalFault, TrainingDiverged
    from .model.checkpoint import CheckpointError
    from .scene import SceneInvariantError, SchemaError

    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, IntegrityError, CollectionError, CheckpointError,
            SchemaError, SceneInvariantError, FileNotFoundError, KeyError,
            json.JSONDecodeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalFault, TrainingDiverged) as exc:
        print(f"numerical fault: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
