import math

import numpy as np
import pytest
import torch

from plancraft.model import (MINI_CONFIG, GRUCell, ModelConfig, NumericalFault,
                             PlannerNetwork, cumsum_points, infer, label_deltas,
                             load_checkpoint, planner_loss, prepare_arrays,
                             save_checkpoint, scene_batch, train, TrainConfig,
                             two_hot_targets)
from plancraft.model.planner import ModelPlanner
from plancraft.plan import PlanLabel
from plancraft.dataset import SampleMeta, TrainingSample
from plancraft.scene import ObjectClass, OrientedBox, RoutePoints, build_scene


def vbox(x, y, yaw=0.0, speed=0.0, cls=ObjectClass.VEHICLE):
    return OrientedBox(x, y, yaw, 2.0, 1.0, speed, cls)


def straight_scene(objects=(), limit=0):
    route = np.stack([np.arange(20.0) + 1.0, np.zeros(20)], axis=1)
    return build_scene(list(objects), RoutePoints(route), limit)


def mini_model(config=MINI_CONFIG, seed=0):
    torch.manual_seed(seed)
    return PlannerNetwork(config)


def synthetic_samples(n=48, seed=0):
    """Cheap synthetic dataset: drive straight at a speed set by the limit."""
    rng = np.random.default_rng(seed)
    samples = []
    for i in range(n):
        v = float(rng.uniform(2.0, 12.0))
        objs = [vbox(float(rng.uniform(8, 60)), float(rng.uniform(-3, 3)),
                     speed=float(rng.uniform(0, 10)))
                for _ in range(rng.integers(0, 4))]
        scene = straight_scene(objs, limit=int(rng.integers(0, 4)))
        path = scene.route.points.copy()
        wps = np.stack([np.arange(1, 9) * v * 0.25, np.zeros(8)], axis=1)
        label = PlanLabel(path_points=path, waypoints=wps, target_speed=v)
        samples.append(TrainingSample(scene, label, SampleMeta("synthetic", seed, i)))
    return samples


class TestTokenize:
    def test_empty_scene_sequence(self):
        model = mini_model()
        batch = scene_batch(straight_scene())
        tokens, mask = model.tokenize(batch)
        n_slots = sum(model._slot_counts)
        # one zero-padded object row + route/limit/raster + slots
        assert tokens.shape[1] == 1 + 3 + n_slots
        assert not mask[0, 0]  # padding row masked out

    def test_class_specific_projections_differ(self):
        model = mini_model()
        a = scene_batch(straight_scene([vbox(10, 0, cls=ObjectClass.VEHICLE)]))
        b = scene_batch(straight_scene([vbox(10, 0, cls=ObjectClass.EMERGENCY_VEHICLE)]))
        ta, _ = model.tokenize(a)
        tb, _ = model.tokenize(b)
        assert not torch.allclose(ta[0, 0], tb[0, 0])
        assert torch.equal(ta[0, 1:], tb[0, 1:])  # context and slots unchanged

    def test_permuting_objects_permutes_tokens_only(self):
        model = mini_model()
        objs = [vbox(10, 1), vbox(20, -2, cls=ObjectClass.PEDESTRIAN, speed=1.0),
                vbox(30, 0, cls=ObjectClass.STATIC_OBSTACLE)]
        sa = scene_batch(straight_scene(objs))
        sb = scene_batch(straight_scene([objs[2], objs[0], objs[1]]))
        ta, _ = model.tokenize(sa)
        tb, _ = model.tokenize(sb)
        assert torch.allclose(ta[0, [2, 0, 1]], tb[0, :3], atol=0, rtol=0)
        assert torch.equal(ta[0, 3:], tb[0, 3:])


class TestForward:
    def test_determinism_across_fresh_models(self):
        scene = straight_scene([vbox(12, 0.5)])
        out1 = infer(mini_model(seed=3), scene)
        out2 = infer(mini_model(seed=3), scene)
        assert np.array_equal(out1.path_points, out2.path_points)
        assert np.array_equal(out1.waypoints, out2.waypoints)

    def test_head_presence_patterns(self):
        scene = straight_scene()
        for head, has_path, has_wp, has_speed in (
                ("wps", False, True, False),
                ("path", True, False, True),
                ("pwp", True, True, False)):
            cfg = ModelConfig(d_model=16, n_layers=1, n_heads=2, ffn_mult=2,
                              head_kind=head)
            out = infer(mini_model(cfg), scene)
            assert (out.path_points is not None) == has_path
            assert (out.waypoints is not None) == has_wp
            assert (out.speed_probs is not None) == has_speed
            if has_speed:
                assert out.speed_probs.sum() == pytest.approx(1.0, abs=1e-6)

    def test_permutation_invariance(self):
        model = mini_model()
        rng = np.random.default_rng(0)
        objs = [vbox(float(rng.uniform(5, 60)), float(rng.uniform(-5, 5)),
                     yaw=float(rng.uniform(-3, 3)), speed=float(rng.uniform(0, 8)))
                for _ in range(6)]
        base = infer(model, straight_scene(objs))
        for _ in range(10):
            perm = rng.permutation(6)
            out = infer(model, straight_scene([objs[j] for j in perm]))
            assert np.max(np.abs(out.path_points - base.path_points)) < 1e-6
            assert np.max(np.abs(out.waypoints - base.waypoints)) < 1e-6

    def test_out_of_range_object_no_influence(self):
        model = mini_model()
        objs = [vbox(12, 1.0)]
        base = infer(model, straight_scene(objs))
        # The far object is dropped by the range filter before tokenization.
        out = infer(model, straight_scene(objs + [vbox(-70, 0)]))
        assert np.array_equal(out.path_points, base.path_points)
        assert np.array_equal(out.waypoints, base.waypoints)

    def test_final_linear_layer_scaling(self):
        model = mini_model()
        scene = straight_scene([vbox(15, 0)])
        batch = scene_batch(scene)
        with torch.no_grad():
            base = model(batch)["wp_raw"].clone()
            model.decoders["wp"].proj.weight *= 2.0
            model.decoders["wp"].proj.bias *= 2.0
            doubled = model(batch)["wp_raw"]
        assert torch.allclose(doubled, 2.0 * base, atol=0, rtol=0)

    def test_numerical_fault_names_layer(self):
        model = mini_model()
        with torch.no_grad():
            model.layers[0].ffn[0].weight[0, 0] = float("nan")
        with pytest.raises(NumericalFault, match="layer 0"):
            infer(model, straight_scene([vbox(10, 0)]))

    def test_batched_matches_single(self):
        model = mini_model()
        samples = synthetic_samples(5)
        arrays = prepare_arrays(samples)
        from plancraft.model import make_batch
        batch, _ = make_batch(arrays, np.arange(5), model.config.speed_bins)
        with torch.no_grad():
            batched = model(batch)["wp_points"].numpy()
        for i, s in enumerate(samples):
            single = infer(model, s.scene)
            assert np.max(np.abs(single.waypoints - batched[i])) < 1e-9


class TestDecoders:
    def test_prefix_sum_example(self):
        deltas = torch.tensor([[[1.0, 0.0], [1.0, 0.5], [0.5, 0.5]]])
        pts = cumsum_points(deltas)[0].numpy()
        assert np.allclose(pts, [[1, 0], [2, 0.5], [2.5, 1.0]])

    def test_zero_deltas_stay_at_origin(self):
        pts = cumsum_points(torch.zeros(1, 8, 2))
        assert torch.all(pts == 0)

    def test_linear_decode_is_exact_prefix_sum(self):
        cfg = ModelConfig(d_model=16, n_layers=1, n_heads=2, ffn_mult=2,
                          generator="linear")
        model = mini_model(cfg)
        batch = scene_batch(straight_scene([vbox(10, 0)]))
        with torch.no_grad():
            out = model(batch)
        assert torch.equal(out["wp_points"], torch.cumsum(out["wp_raw"], dim=-2))

    def _unrolled_single_gru(self, cell, proj_w, proj_b, h0, target, n):
        """Independent numpy unroll of the autoregressive GRU decoder."""
        w_ih = cell.weight_ih.detach().numpy()
        w_hh = cell.weight_hh.detach().numpy()
        b_ih = cell.bias_ih.detach().numpy()
        b_hh = cell.bias_hh.detach().numpy()
        hsz = cell.hidden_size
        h = h0.copy()
        prev = np.zeros(2)
        pts = []
        for _ in range(n):
            x = np.concatenate([prev, target])
            gi = w_ih @ x + b_ih
            gh = w_hh @ h + b_hh
            r = 1 / (1 + np.exp(-(gi[:hsz] + gh[:hsz])))
            z = 1 / (1 + np.exp(-(gi[hsz:2 * hsz] + gh[hsz:2 * hsz])))
            nn_ = np.tanh(gi[2 * hsz:] + r * gh[2 * hsz:])
            h = (1 - z) * nn_ + z * h
            prev = prev + (proj_w @ h + proj_b)
            pts.append(prev.copy())
        return np.array(pts)

    def test_single_gru_matches_hand_unroll(self):
        cfg = ModelConfig(d_model=16, n_layers=1, n_heads=2, ffn_mult=2,
                          generator="gru_single", head_kind="wps")
        model = mini_model(cfg, seed=1)
        dec = model.decoders["wp"]
        rng = np.random.default_rng(2)
        h0 = rng.normal(size=16)
        target = np.array([0.9, -0.1])
        with torch.no_grad():
            got = dec(torch.from_numpy(h0[None]), torch.from_numpy(target[None]))[0][0]
        want = self._unrolled_single_gru(
            dec.cell, dec.proj.weight.detach().numpy(),
            dec.proj.bias.detach().numpy(), h0, target, 8)
        assert np.max(np.abs(got.numpy() - want)) < 1e-12

    def test_single_gru_zero_weights_arithmetic_progression(self):
        cfg = ModelConfig(d_model=16, n_layers=1, n_heads=2, ffn_mult=2,
                          generator="gru_single", head_kind="wps")
        model = mini_model(cfg, seed=1)
        dec = model.decoders["wp"]
        with torch.no_grad():
            dec.cell.weight_ih.zero_()
            dec.cell.weight_hh.zero_()
            dec.cell.bias_ih.zero_()
            dec.cell.bias_hh.zero_()
            dec.proj.bias[:] = torch.tensor([0.5, -0.25], dtype=torch.float64)
            # Zero hidden state: the cell output stays zero, the projection
            # bias becomes a constant per-step delta.
            h0 = torch.zeros(1, 16, dtype=torch.float64)
            pts = dec(h0, torch.zeros(1, 2, dtype=torch.float64))[0][0].numpy()
        steps = np.arange(1, 9)[:, None]
        assert np.allclose(pts, steps * np.array([0.5, -0.25]), atol=1e-12)

    def test_multi_gru_target_seeds_hidden(self):
        cfg = ModelConfig(d_model=16, n_layers=1, n_heads=2, ffn_mult=2,
                          generator="gru_multi", head_kind="wps")
        model = mini_model(cfg, seed=1)
        batch_a = scene_batch(straight_scene())
        batch_b = scene_batch(straight_scene())
        batch_b["target"] = batch_b["target"] + 1.0
        with torch.no_grad():
            a = model(batch_a)["wp_points"]
            b = model(batch_b)["wp_points"]
        assert not torch.allclose(a, b)


class TestLoss:
    def test_perfect_prediction_zero_point_loss(self):
        cfg = ModelConfig(d_model=16, n_layers=1, n_heads=2, ffn_mult=2)
        label_path = torch.randn(2, 20, 2, dtype=torch.float64)
        label_wp = torch.randn(2, 8, 2, dtype=torch.float64)
        outputs = {
            "path_points": label_path, "path_raw": label_deltas(label_path),
            "wp_points": label_wp, "wp_raw": label_deltas(label_wp),
        }
        targets = {"path_points": label_path, "waypoints": label_wp}
        total, parts = planner_loss(outputs, targets, cfg)
        assert float(total) == 0.0

    def test_uniform_speed_probs_cross_entropy(self):
        cfg = ModelConfig(d_model=16, n_layers=1, n_heads=2, ffn_mult=2,
                          head_kind="path")
        k = len(cfg.speed_bins)
        label_path = torch.zeros(1, 20, 2, dtype=torch.float64)
        outputs = {
            "path_points": label_path, "path_raw": label_deltas(label_path),
            "speed_logits": torch.zeros(1, k, dtype=torch.float64),
        }
        targets = {
            "path_points": label_path,
            "speed_twohot": torch.from_numpy(
                two_hot_targets(np.array([(cfg.speed_bins[3] + cfg.speed_bins[4]) / 2]),
                                cfg.speed_bins)),
        }
        total, parts = planner_loss(outputs, targets, cfg)
        assert parts["speed"] == pytest.approx(math.log(k), abs=1e-12)

    def test_l1_scales_linearly(self):
        cfg = ModelConfig(d_model=16, n_layers=1, n_heads=2, ffn_mult=2,
                          head_kind="wps", generator="gru_multi")
        label = torch.zeros(1, 8, 2, dtype=torch.float64)
        one = {"wp_points": label.clone(), "wp_raw": label.clone()}
        one["wp_points"][0, 3, 0] = 1.0
        t1, _ = planner_loss(one, {"waypoints": label}, cfg)
        two = {"wp_points": label.clone(), "wp_raw": label.clone()}
        two["wp_points"][0, 3, 0] = 2.0
        t2, _ = planner_loss(two, {"waypoints": label}, cfg)
        assert float(t2) == pytest.approx(2.0 * float(t1), rel=1e-12)


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path):
        model = mini_model(seed=4)
        scene = straight_scene([vbox(14, -1)])
        path = tmp_path / "model.ckpt"
        save_checkpoint(model, path, extra={"note": "test"})
        quantized = infer(model, scene)      # model is quantized in place
        loaded, extra = load_checkpoint(path)
        assert extra == {"note": "test"}
        again = infer(loaded, scene)
        assert np.array_equal(quantized.path_points, again.path_points)
        assert np.array_equal(quantized.waypoints, again.waypoints)

    def test_rejects_garbage(self, tmp_path):
        bad = tmp_path / "bad.ckpt"
        bad.write_bytes(b"not a checkpoint")
        from plancraft.model import CheckpointError
        with pytest.raises(CheckpointError):
            load_checkpoint(bad)


class TestTraining:
    def test_loss_decreases_and_is_deterministic(self):
        samples = synthetic_samples(48)
        cfg = ModelConfig(d_model=16, n_layers=1, n_heads=2, ffn_mult=2)
        tcfg = TrainConfig(epochs=5, batch_size=16, lr=1e-3, seed=7, val_frac=0.25)
        r1 = train(samples, cfg, tcfg)
        assert r1.history[-1][2] < r1.history[0][2]
        r2 = train(samples, cfg, tcfg)
        for (p1, p2) in zip(r1.model.parameters(), r2.model.parameters()):
            assert torch.equal(p1, p2)

    def test_final_epoch_lr_drop(self):
        samples = synthetic_samples(24)
        cfg = ModelConfig(d_model=16, n_layers=1, n_heads=2, ffn_mult=2)
        tcfg = TrainConfig(epochs=3, batch_size=12, lr=1e-3, seed=0)
        result = train(samples, cfg, tcfg)
        lrs = [h[1] for h in result.history]
        assert lrs == [1e-3, 1e-3, 1e-4]
