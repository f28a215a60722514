import numpy as np
import pytest
import torch
from fastapi.testclient import TestClient

from plancraft.model import MINI_CONFIG, PlannerNetwork
from plancraft.scene import RoutePoints, build_scene, scene_to_json
from plancraft.service import create_app


@pytest.fixture(scope="module")
def client():
    torch.manual_seed(0)
    model = PlannerNetwork(MINI_CONFIG)
    app = create_app(model, model_id="test-model")
    return TestClient(app, raise_server_exceptions=False)


def empty_scene_payload():
    route = np.stack([np.arange(20.0) + 1.0, np.zeros(20)], axis=1)
    return scene_to_json(build_scene([], RoutePoints(route), 0))


class TestHealth:
    def test_healthz(self, client):
        r = client.get("/healthz")
        assert r.status_code == 200
        assert r.json() == {"status": "ok", "model": "test-model"}


class TestInfer:
    def test_empty_scene(self, client):
        r = client.post("/infer", json={"scene": empty_scene_payload()})
        assert r.status_code == 200
        body = r.json()
        plan = body["plan"]
        # P+WP head: path and waypoints present, no speed distribution.
        assert plan["path_points"] is not None
        assert plan["waypoints"] is not None
        assert plan["speed_probs"] is None
        assert isinstance(body["target_speed"], float)

    def test_deterministic(self, client):
        payload = {"scene": empty_scene_payload()}
        a = client.post("/infer", json=payload).json()
        b = client.post("/infer", json=payload).json()
        assert a == b

    def test_short_route_422_names_route(self, client):
        scene = empty_scene_payload()
        scene["route"] = scene["route"][:19]
        r = client.post("/infer", json={"scene": scene})
        assert r.status_code == 422
        assert "route" in r.json()["error"]

    def test_missing_scene_400(self, client):
        r = client.post("/infer", json={})
        assert r.status_code == 400
        assert "scene" in r.json()["error"]

    def test_invalid_json_400(self, client):
        r = client.post("/infer", content=b"{nope",
                        headers={"content-type": "application/json"})
        assert r.status_code == 400


class TestPerturbEndpoints:
    def test_apply(self, client):
        scene = empty_scene_payload()
        scene["objects"] = [{"class": "vehicle", "x": 10.0, "y": 1.0, "yaw": 0.0,
                             "half_length": 2.0, "half_width": 1.0, "speed": 0.0}]
        ops = [{"op": "translate_object", "id": 0, "dx": 5.0, "dy": 0.0}]
        r = client.post("/perturb/apply", json={"scene": scene, "ops": ops})
        assert r.status_code == 200
        out = r.json()["scene"]
        assert out["objects"][0]["x"] == pytest.approx(15.0)

    def test_apply_bad_id_422(self, client):
        r = client.post("/perturb/apply", json={
            "scene": empty_scene_payload(),
            "ops": [{"op": "remove_object", "id": 7}]})
        assert r.status_code == 422

    def test_apply_unknown_op_400(self, client):
        r = client.post("/perturb/apply", json={
            "scene": empty_scene_payload(),
            "ops": [{"op": "explode"}]})
        assert r.status_code == 400

    def test_sweep(self, client):
        r = client.post("/perturb/sweep", json={
            "scene": empty_scene_payload(),
            "axis": {"kind": "ego_rotation", "units": "rad"},
            "values": [0.0, 0.1, 0.2]})
        assert r.status_code == 200
        body = r.json()
        assert len(body["points"]) == 3
        assert body["model_id"] == "test-model"
        assert all(p["error"] is None for p in body["points"])
        assert "jumps" in body

    def test_sweep_non_monotone_422(self, client):
        r = client.post("/perturb/sweep", json={
            "scene": empty_scene_payload(),
            "axis": {"kind": "ego_rotation"},
            "values": [0.2, 0.1]})
        assert r.status_code == 422

    def test_sweep_missing_values_400(self, client):
        r = client.post("/perturb/sweep", json={
            "scene": empty_scene_payload(),
            "axis": {"kind": "ego_rotation"}})
        assert r.status_code == 400


class TestScenarios:
    def test_scenario_listing(self, client):
        r = client.get("/scenarios")
        assert r.status_code == 200
        body = r.json()
        assert len(body["templates"]) == 9
        assert len(body["scenes"]) == 9
        # every default scene must itself be loadable through /infer
        name = body["templates"][0]
        resp = client.post("/infer", json={"scene": body["scenes"][name]})
        assert resp.status_code == 200
