import math

import numpy as np
import pytest

from plancraft import geometry as geo


def test_normalize_angle_range():
    rng = np.random.default_rng(0)
    for a in rng.uniform(-50, 50, size=500):
        n = geo.normalize_angle(float(a))
        assert -math.pi < n <= math.pi
        assert math.isclose(math.cos(n), math.cos(a), abs_tol=1e-12)
        assert math.isclose(math.sin(n), math.sin(a), abs_tol=1e-12)


def test_normalize_angle_boundary():
    assert geo.normalize_angle(math.pi) == pytest.approx(math.pi)
    assert geo.normalize_angle(-math.pi) == pytest.approx(math.pi)
    assert geo.normalize_angle(3 * math.pi) == pytest.approx(math.pi)


def test_to_ego_frame_identity():
    assert geo.to_ego_frame((5, 0, 0), (5, 0, 0)) == pytest.approx((0, 0, 0))


def test_to_ego_frame_hand_rotation():
    # Ego at origin facing +y; a point one meter ahead-right of it.
    x, y, yaw = geo.to_ego_frame((1, 1, 0), (0, 0, math.pi / 2))
    assert (x, y) == pytest.approx((1, -1))
    assert yaw == pytest.approx(-math.pi / 2)


def test_frame_round_trip():
    rng = np.random.default_rng(1)
    for _ in range(1000):
        g = tuple(rng.uniform(-100, 100, 2)) + (rng.uniform(-math.pi, math.pi),)
        e = tuple(rng.uniform(-100, 100, 2)) + (rng.uniform(-math.pi, math.pi),)
        local = geo.to_ego_frame(g, e)
        back = geo.from_ego_frame(local, e)
        assert np.allclose(back[:2], g[:2], atol=1e-9)
        assert abs(geo.normalize_angle(back[2] - g[2])) < 1e-9


def test_points_frame_round_trip():
    rng = np.random.default_rng(2)
    pts = rng.uniform(-50, 50, size=(100, 2))
    ego = (3.0, -4.0, 0.7)
    back = geo.points_from_ego_frame(geo.points_to_ego_frame(pts, ego), ego)
    assert np.allclose(back, pts, atol=1e-9)


def test_point_at_arc_and_projection():
    line = np.array([[0.0, 0.0], [10.0, 0.0], [10.0, 10.0]])
    assert np.allclose(geo.point_at_arc(line, 5.0), [5.0, 0.0])
    assert np.allclose(geo.point_at_arc(line, 15.0), [10.0, 5.0])
    # Extrapolation past the end continues along the last tangent.
    assert np.allclose(geo.point_at_arc(line, 25.0), [10.0, 15.0])
    arc, lateral, dist = geo.project_to_polyline((5.0, 2.0), line)
    assert arc == pytest.approx(5.0)
    assert lateral == pytest.approx(2.0)  # left of travel direction
    assert dist == pytest.approx(2.0)


def test_resample_chord_exact_spacing():
    rng = np.random.default_rng(3)
    for _ in range(20):
        # Wiggly forward polyline.
        xs = np.cumsum(rng.uniform(0.5, 2.0, size=30))
        ys = np.cumsum(rng.uniform(-0.5, 0.5, size=30))
        poly = np.stack([xs, ys], axis=1)
        out = geo.resample_chord(poly, spacing=1.0, count=20)
        gaps = np.linalg.norm(np.diff(out, axis=0), axis=1)
        assert np.max(np.abs(gaps - 1.0)) < 1e-9
        first = np.linalg.norm(out[0] - poly[0])
        assert first == pytest.approx(1.0, abs=1e-9)


def test_resample_chord_extrapolates():
    poly = np.array([[0.0, 0.0], [3.0, 0.0]])
    out = geo.resample_chord(poly, spacing=1.0, count=5)
    assert np.allclose(out, [[1, 0], [2, 0], [3, 0], [4, 0], [5, 0]], atol=1e-12)


def test_offset_polyline_straight():
    poly = np.array([[0.0, 0.0], [10.0, 0.0]])
    left = geo.offset_polyline(poly, 2.0)
    assert np.allclose(left, [[0.0, 2.0], [10.0, 2.0]])


def test_rect_overlap_basics():
    a = ((0.0, 0.0, 0.0), (0.5, 0.5))
    assert geo.rect_rect_overlap(*a, *a)
    b = ((3.0, 0.0, 0.0), (0.5, 0.5))
    assert not geo.rect_rect_overlap(*a, *b)


def test_rect_signed_distance_known():
    a = ((0.0, 0.0, 0.0), (0.5, 0.5))
    b = ((3.0, 0.0, 0.0), (0.5, 0.5))
    assert geo.rect_rect_signed_distance(*a, *b) == pytest.approx(2.0)
    c = ((0.2, 0.0, 0.0), (0.5, 0.5))
    assert geo.rect_rect_signed_distance(*a, *c) == pytest.approx(-0.8)


def test_rect_signed_distance_rotated():
    a = ((0.0, 0.0, 0.0), (0.5, 0.5))
    # Diagonal square whose nearest corner points at the origin box.
    b = ((2.0, 0.0, math.pi / 4), (0.5, 0.5))
    expected = 2.0 - 0.5 - 0.5 * math.sqrt(2.0)
    assert geo.rect_rect_signed_distance(*a, *b) == pytest.approx(expected, abs=1e-9)
