import json
from pathlib import Path

import pytest

from plancraft.cli import main


MINI_RUN_CONFIG = {
    "version": 1,
    "collect": {
        "template_kinds": ["construction_obstacle", "red_light"],
        "seeds": [0],
        "augment_frac": 0.3,
    },
    "model": {
        "d_model": 16, "n_layers": 1, "n_heads": 2, "ffn_mult": 2,
        "head_kind": "pwp", "generator": "linear",
        "speed_bins": [0.0, 2.857, 5.714, 8.571, 11.429, 14.286, 17.143, 20.0],
        "include_ego_speed": False,
    },
    "train": {"epochs": 2, "batch_size": 64, "lr": 1e-3, "seed": 0,
              "val_frac": 0.2},
}


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg_path = root / "run.json"
    cfg_path.write_text(json.dumps(MINI_RUN_CONFIG))
    data_dir = root / "data"
    ckpt = root / "model.ckpt"
    assert main(["collect", "--out", str(data_dir), "--config", str(cfg_path)]) == 0
    assert main(["train", "--data", str(data_dir), "--out", str(ckpt),
                 "--config", str(cfg_path)]) == 0
    return root, cfg_path, data_dir, ckpt


class TestPipeline:
    def test_collect_artifacts(self, pipeline):
        _, _, data_dir, _ = pipeline
        manifest = json.loads((data_dir / "manifest.json").read_text())
        assert manifest["n_samples"] > 100
        assert (data_dir / "controller.json").exists()

    def test_train_artifacts(self, pipeline):
        root, _, _, ckpt = pipeline
        assert ckpt.exists()
        assert ckpt.read_bytes()[:4] == b"PLNC"
        assert (root / "controller.json").exists()

    def test_eval_with_model(self, pipeline):
        root, _, _, ckpt = pipeline
        report_path = root / "report.json"
        code = main(["eval", "--model", str(ckpt), "--runs", str(root / "runs"),
                     "--report", str(report_path),
                     "--templates", "red_light", "--seeds", "1",
                     "--time-limit", "40"])
        assert code == 0
        report = json.loads(report_path.read_text())
        assert report["n_episodes"] == 1
        assert 0.0 <= report["aggregate"]["rc"]["mean"] <= 1.0

    def test_eval_from_logs(self, pipeline):
        root, _, _, _ = pipeline
        report_path = root / "report2.json"
        code = main(["eval", "--runs", str(root / "runs"),
                     "--report", str(report_path)])
        assert code == 0
        assert json.loads(report_path.read_text())["n_episodes"] == 1

    def test_perturb_preset(self, pipeline):
        root, _, _, ckpt = pipeline
        out = root / "curve.json"
        csv = root / "curve.csv"
        code = main(["perturb", "--model", str(ckpt), "--preset", "fig5_rotation",
                     "--out", str(out), "--csv", str(csv)])
        assert code == 0
        curve = json.loads(out.read_text())
        assert len(curve["sweep"]["points"]) == 31
        lines = csv.read_text().strip().splitlines()
        assert len(lines) == 32  # header + points
        assert lines[0].endswith("target_speed")

    def test_ablate_mini_grid(self, pipeline):
        root, cfg_path, data_dir, _ = pipeline
        out = root / "ablation.json"
        code = main(["ablate", "--data", str(data_dir), "--out", str(out),
                     "--train-seeds", "0", "--eval-seeds", "0",
                     "--epochs", "1", "--d-model", "16", "--n-layers", "1",
                     "--n-heads", "2", "--batch-size", "64",
                     "--time-limit", "30"])
        assert code == 0
        report = json.loads(out.read_text())
        assert set(report["grid"]) == {"wps", "path", "pwp"}
        for head in report["grid"]:
            assert set(report["grid"][head]) == {"gru_single", "gru_multi", "linear"}


class TestErrorPaths:
    def test_usage_error(self):
        assert main(["collect"]) == 1          # missing --out
        assert main(["nonsense"]) == 1

    def test_missing_dataset_is_data_error(self, tmp_path):
        assert main(["train", "--data", str(tmp_path / "nope"),
                     "--out", str(tmp_path / "x.ckpt")]) == 2

    def test_bad_config_is_data_error(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"version": 99}))
        assert main(["collect", "--out", str(tmp_path / "d"),
                     "--config", str(bad)]) == 2

    def test_unknown_config_key_rejected(self, tmp_path):
        bad = tmp_path / "bad2.json"
        bad.write_text(json.dumps({"version": 1, "modell": {}}))
        assert main(["collect", "--out", str(tmp_path / "d"),
                     "--config", str(bad)]) == 2
