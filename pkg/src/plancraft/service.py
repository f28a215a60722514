"""HTTP service backing the perturbation workbench.

Endpoints exchange the shared JSON schemas; responses are deterministic
for identical requests.  Error mapping: 400 for malformed payloads (with a
field path), 422 for domain-invariant violations, 500 never leaks
internals.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from .control import LongitudinalController
from .model import PlannerNetwork, load_checkpoint
from .model.planner import infer
from .perturb import (PerturbationError, SweepAxis, apply, decoded_target_speed,
                      spec_from_json, sweep)
from .presets import PRESETS, build_preset
from .scene import SceneInvariantError, SchemaError, scene_from_json, scene_to_json
from .world import ScenarioKind


def model_id_of(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()[:12]


def create_app(model: PlannerNetwork, model_id: str = "unversioned",
               ui_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="plancraft workbench service")
    app.add_middleware(CORSMiddleware, allow_origins=["*"], allow_methods=["*"],
                       allow_headers=["*"])
    speed_bins = model.config.speed_bins
    scene_cache: dict[str, dict] = {}

    @app.exception_handler(SchemaError)
    async def schema_error(_, exc):
        return JSONResponse(status_code=400, content={"error": str(exc)})

    @app.exception_handler(SceneInvariantError)
    async def invariant_error(_, exc):
        return JSONResponse(status_code=422, content={"error": str(exc)})

    @app.exception_handler(PerturbationError)
    async def perturb_error(_, exc):
        return JSONResponse(status_code=422, content={"error": str(exc)})

    @app.exception_handler(Exception)
    async def internal_error(_, exc):
        return JSONResponse(status_code=500, content={"error": "internal error"})

    async def read_body(request: Request) -> dict:
        try:
            payload = await request.json()
        except Exception:
            raise SchemaError("body: invalid JSON") from None
        if not isinstance(payload, dict):
            raise SchemaError("body: expected a JSON object")
        return payload

    @app.get("/healthz")
    async def healthz():
        return {"status": "ok", "model": model_id}

    @app.post("/infer")
    async def infer_endpoint(request: Request):
        payload = await read_body(request)
        if "scene" not in payload:
            raise SchemaError("body.scene: missing field")
        scene = scene_from_json(payload["scene"])
        plan = infer(model, scene)
        return {
            "plan": plan.to_json(),
            "target_speed": decoded_target_speed(plan, speed_bins),
            "model": model_id,
        }

    @app.post("/perturb/apply")
    async def apply_endpoint(request: Request):
        payload = await read_body(request)
        if "scene" not in payload:
            raise SchemaError("body.scene: missing field")
        if "ops" not in payload:
            raise SchemaError("body.ops: missing field")
        scene = scene_from_json(payload["scene"])
        ops = spec_from_json(payload["ops"])
        out, flags = apply(scene, ops)
        return {"scene": scene_to_json(out), "flags": flags}

    @app.post("/perturb/sweep")
    async def sweep_endpoint(request: Request):
        payload = await read_body(request)
        for key in ("scene", "axis", "values"):
            if key not in payload:
                raise SchemaError(f"body.{key}: missing field")
        scene = scene_from_json(payload["scene"])
        axis_raw = payload["axis"]
        if not isinstance(axis_raw, dict) or "kind" not in axis_raw:
            raise SchemaError("body.axis: expected an object with 'kind'")
        axis = SweepAxis(kind=axis_raw["kind"],
                         units=axis_raw.get("units", ""),
                         object_index=axis_raw.get("object_index"))
        values = payload["values"]
        if (not isinstance(values, list)
                or any(isinstance(v, bool) or not isinstance(v, (int, float))
                       for v in values)):
            raise SchemaError("body.values: expected a list of numbers")
        result = sweep(scene, axis, values,
                       lambda s: infer(model, s), speed_bins,
                       model_id=model_id)
        return result.to_json()

    @app.get("/scenarios")
    async def scenarios():
        if not scene_cache:
            from .presets import default_scene
            for kind in ScenarioKind:
                scene_cache[kind.value] = scene_to_json(default_scene(kind).scene)
        return {
            "templates": [k.value for k in ScenarioKind],
            "presets": sorted(PRESETS),
            "scenes": scene_cache,
        }

    if ui_dir is not None and Path(ui_dir).exists():
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app


def app_from_checkpoint(path: str | Path, ui_dir=None) -> FastAPI:
    model, _ = load_checkpoint(path)
    return create_app(model, model_id=model_id_of(path), ui_dir=ui_dir)
