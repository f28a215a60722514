import math

import numpy as np
import pytest

from plancraft import scene as sc
from oracles import box_overlap_oracle, box_sample_margin, range_membership_oracle


def vbox(x, y, yaw=0.0, hl=2.0, hw=1.0, speed=0.0, cls=sc.ObjectClass.VEHICLE):
    return sc.OrientedBox(x, y, yaw, hl, hw, speed, cls)


def straight_route(start=(0.0, 0.0), heading=0.0):
    d = np.array([math.cos(heading), math.sin(heading)])
    pts = np.array(start) + np.arange(20)[:, None] * d
    return sc.RoutePoints(pts)


class TestOrientedBox:
    def test_yaw_normalized(self):
        b = vbox(0, 0, yaw=3 * math.pi)
        assert b.yaw == pytest.approx(math.pi)
        assert -math.pi < b.yaw <= math.pi

    def test_rejects_nonpositive_extent(self):
        with pytest.raises(sc.SceneInvariantError):
            vbox(0, 0, hl=0.0)
        with pytest.raises(sc.SceneInvariantError):
            vbox(0, 0, hw=-1.0)

    def test_rejects_negative_speed(self):
        with pytest.raises(sc.SceneInvariantError):
            vbox(0, 0, speed=-0.1)

    def test_stop_lines_must_be_stationary(self):
        with pytest.raises(sc.SceneInvariantError):
            vbox(5, 0, speed=1.0, cls=sc.ObjectClass.STOP_SIGN_STOP_LINE)
        vbox(5, 0, speed=0.0, cls=sc.ObjectClass.TRAFFIC_LIGHT_STOP_LINE)


class TestRangeFilter:
    def test_spec_examples(self):
        assert sc.filter_by_range([vbox(60, 0)]) != []      # (60/100)^2 = 0.36 <= 1
        assert sc.filter_by_range([vbox(-60, 0)]) == []     # behind radius 50
        assert sc.filter_by_range([vbox(0, 60)]) == []      # ellipse branch at x = 0

    def test_order_preserved_and_idempotent(self):
        boxes = [vbox(10, 0), vbox(-200, 0), vbox(20, 5), vbox(0, 60), vbox(-10, -10)]
        kept = sc.filter_by_range(boxes)
        assert kept == [boxes[0], boxes[2], boxes[4]]
        assert sc.filter_by_range(kept) == kept

    def test_against_membership_oracle(self):
        rng = np.random.default_rng(7)
        xs = rng.uniform(-120, 120, size=10_000)
        ys = rng.uniform(-80, 80, size=10_000)
        for x, y in zip(xs, ys):
            assert sc.in_range(x, y) == range_membership_oracle(x, y), (x, y)


class TestBoxOverlap:
    def test_identical_boxes(self):
        a = vbox(0, 0)
        assert sc.box_overlap(a, a)

    def test_separated_unit_squares(self):
        a = vbox(0, 0, hl=0.5, hw=0.5)
        b = vbox(3, 0, hl=0.5, hw=0.5)
        assert not sc.box_overlap(a, b)
        assert sc.box_overlap(b, a) == sc.box_overlap(a, b)

    def test_rotated_case_matches_sampling_oracle(self):
        a = vbox(0, 0, hl=0.5, hw=0.5)
        b = vbox(1.05, 1.05, yaw=math.pi / 4, hl=0.5, hw=0.5)
        expected = box_overlap_oracle(a.pose, a.half_extent, b.pose, b.half_extent)
        assert sc.box_overlap(a, b) == expected

    def test_random_pairs_against_oracle(self):
        from plancraft import geometry as geo
        rng = np.random.default_rng(11)
        for _ in range(1000):
            a = vbox(rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-math.pi, math.pi),
                     rng.uniform(0.3, 2.0), rng.uniform(0.3, 2.0))
            b = vbox(rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-math.pi, math.pi),
                     rng.uniform(0.3, 2.0), rng.uniform(0.3, 2.0))
            got = sc.box_overlap(a, b)
            want = box_overlap_oracle(a.pose, a.half_extent, b.pose, b.half_extent, 60)
            if got != want:
                # Only tolerate disagreement within the oracle's sampling margin.
                margin = abs(geo.rect_rect_signed_distance(
                    a.pose, a.half_extent, b.pose, b.half_extent))
                spacing = box_sample_margin(a.pose, a.half_extent, 60)
                assert margin <= spacing, (a, b)


class TestRoutePoints:
    def test_valid_route(self):
        r = straight_route()
        assert r.points.shape == (20, 2)

    def test_wrong_count(self):
        with pytest.raises(sc.SceneInvariantError, match="route"):
            sc.RoutePoints(np.zeros((19, 2)))

    def test_wrong_spacing(self):
        pts = np.stack([np.arange(20) * 1.1, np.zeros(20)], axis=1)
        with pytest.raises(sc.SceneInvariantError, match="spacing"):
            sc.RoutePoints(pts)

    def test_immutable(self):
        r = straight_route()
        with pytest.raises(ValueError):
            r.points[0, 0] = 99.0


class TestScene:
    def test_rejects_out_of_range_object(self):
        with pytest.raises(sc.SceneInvariantError, match="range"):
            sc.Scene(objects=(vbox(-60, 0),), route=straight_route(), speed_limit_index=0)

    def test_rejects_bad_speed_limit_index(self):
        with pytest.raises(sc.SceneInvariantError, match="speed_limit_index"):
            sc.Scene(objects=(), route=straight_route(), speed_limit_index=4)

    def test_build_scene_filters(self):
        s = sc.build_scene([vbox(10, 0), vbox(-60, 0)], straight_route(), 1)
        assert len(s.objects) == 1


class TestWireFormat:
    def test_round_trip(self):
        s = sc.build_scene(
            [vbox(10, 2, yaw=0.3, speed=4.0),
             vbox(20, 0, cls=sc.ObjectClass.STATIC_OBSTACLE)],
            straight_route(), 2)
        payload = sc.scene_to_json(s)
        back = sc.scene_from_json(payload)
        assert back.objects == s.objects
        assert back.route == s.route
        assert back.speed_limit_index == s.speed_limit_index
        assert back.raster == s.raster

    def test_missing_field_is_schema_error(self):
        payload = sc.scene_to_json(sc.build_scene([], straight_route(), 0))
        del payload["route"]
        with pytest.raises(sc.SchemaError, match="route"):
            sc.scene_from_json(payload)

    def test_bad_class_is_schema_error(self):
        payload = sc.scene_to_json(sc.build_scene([vbox(5, 0)], straight_route(), 0))
        payload["objects"][0]["class"] = "bicycle"
        with pytest.raises(sc.SchemaError, match="class"):
            sc.scene_from_json(payload)

    def test_short_route_is_invariant_error(self):
        payload = sc.scene_to_json(sc.build_scene([], straight_route(), 0))
        payload["route"] = payload["route"][:19]
        with pytest.raises(sc.SceneInvariantError, match="route"):
            sc.scene_from_json(payload)

    def test_bad_raster_values_rejected(self):
        payload = sc.scene_to_json(sc.build_scene([], straight_route(), 0))
        import base64
        blob = bytearray(base64.b64decode(payload["raster"]))
        blob[0] = 9
        payload["raster"] = base64.b64encode(bytes(blob)).decode()
        with pytest.raises(sc.SceneInvariantError, match="raster"):
            sc.scene_from_json(payload)
