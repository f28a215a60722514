"""Planar geometry helpers: angles, rigid transforms, polylines, oriented boxes.

All coordinates are 2D, x forward / y left, angles CCW radians.
"""

from __future__ import annotations

import math

import numpy as np

TAU = 2.0 * math.pi


def normalize_angle(angle: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    a = math.remainder(angle, TAU)
    if a <= -math.pi:
        a += TAU
    return a


def rotate_points(points: np.ndarray, angle: float) -> np.ndarray:
    """Rotate (..., 2) points CCW by `angle`."""
    c, s = math.cos(angle), math.sin(angle)
    pts = np.asarray(points, dtype=float)
    x = pts[..., 0] * c - pts[..., 1] * s
    y = pts[..., 0] * s + pts[..., 1] * c
    return np.stack([x, y], axis=-1)


def to_ego_frame(global_pose, ego_pose):
    """Express a global (x, y, yaw) pose in the ego frame defined by ego_pose.

    Inverse of `from_ego_frame`; round-trips to 1e-9 or better.
    """
    gx, gy, gyaw = global_pose
    ex, ey, eyaw = ego_pose
    dx, dy = gx - ex, gy - ey
    c, s = math.cos(eyaw), math.sin(eyaw)
    return (
        c * dx + s * dy,
        -s * dx + c * dy,
        normalize_angle(gyaw - eyaw),
    )


def from_ego_frame(local_pose, ego_pose):
    """Express an ego-frame (x, y, yaw) pose in the global frame."""
    lx, ly, lyaw = local_pose
    ex, ey, eyaw = ego_pose
    c, s = math.cos(eyaw), math.sin(eyaw)
    return (
        ex + c * lx - s * ly,
        ey + s * lx + c * ly,
        normalize_angle(lyaw + eyaw),
    )


def points_to_ego_frame(points: np.ndarray, ego_pose) -> np.ndarray:
    """Transform (..., 2) global points into the ego frame."""
    ex, ey, eyaw = ego_pose
    pts = np.asarray(points, dtype=float)
    shifted = pts - np.array([ex, ey])
    return rotate_points(shifted, -eyaw)


def points_from_ego_frame(points: np.ndarray, ego_pose) -> np.ndarray:
    """Transform (..., 2) ego-frame points into the global frame."""
    ex, ey, eyaw = ego_pose
    return rotate_points(np.asarray(points, dtype=float), eyaw) + np.array([ex, ey])


# ---------------------------------------------------------------------------
# Polylines
# ---------------------------------------------------------------------------


def polyline_lengths(points: np.ndarray) -> np.ndarray:
    """Cumulative arc length per vertex, starting at 0."""
    pts = np.asarray(points, dtype=float)
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    return np.concatenate([[0.0], np.cumsum(seg)])


def point_at_arc(points: np.ndarray, s: float) -> np.ndarray:
    """Point at arc length `s` along a polyline, extrapolating past the ends."""
    pts = np.asarray(points, dtype=float)
    cum = polyline_lengths(pts)
    total = cum[-1]
    if total == 0.0:
        return pts[0].copy()
    if s <= 0.0:
        d = pts[1] - pts[0]
        return pts[0] + d / np.linalg.norm(d) * s
    if s >= total:
        d = pts[-1] - pts[-2]
        return pts[-1] + d / np.linalg.norm(d) * (s - total)
    i = int(np.searchsorted(cum, s, side="right")) - 1
    seg_len = cum[i + 1] - cum[i]
    t = (s - cum[i]) / seg_len
    return pts[i] + t * (pts[i + 1] - pts[i])


def tangent_at_arc(points: np.ndarray, s: float) -> np.ndarray:
    """Unit tangent of the segment containing arc length `s` (clamped)."""
    pts = np.asarray(points, dtype=float)
    cum = polyline_lengths(pts)
    i = int(np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(pts) - 2))
    d = pts[i + 1] - pts[i]
    n = np.linalg.norm(d)
    return d / n if n > 0 else np.array([1.0, 0.0])


def project_to_polyline(point, polyline: np.ndarray):
    """Project a point onto a polyline.

    Returns (arc, lateral, distance): arc length of the closest point,
    signed lateral offset (positive = left of travel direction), and the
    unsigned distance.
    """
    p = np.asarray(point, dtype=float)
    pts = np.asarray(polyline, dtype=float)
    cum = polyline_lengths(pts)
    a = pts[:-1]
    b = pts[1:]
    ab = b - a
    seg_len2 = np.einsum("ij,ij->i", ab, ab)
    seg_len2 = np.where(seg_len2 == 0.0, 1.0, seg_len2)
    t = np.clip(np.einsum("ij,ij->i", p - a, ab) / seg_len2, 0.0, 1.0)
    proj = a + t[:, None] * ab
    d = np.linalg.norm(p - proj, axis=1)
    i = int(np.argmin(d))
    tangent = ab[i] / math.sqrt(seg_len2[i]) if seg_len2[i] > 0 else np.array([1.0, 0.0])
    rel = p - proj[i]
    lateral = tangent[0] * rel[1] - tangent[1] * rel[0]
    arc = cum[i] + t[i] * (cum[i + 1] - cum[i])
    return float(arc), float(lateral), float(d[i])


def project_to_polyline_extended(point, polyline: np.ndarray):
    """Like `project_to_polyline`, but the arc is unclamped at the ends.

    Points beyond the polyline project onto the infinite extension of the
    first/last segment, yielding arcs < 0 or > total length.  Needed when
    actors live outside the route extent (e.g. not-yet-entered traffic).
    """
    pts = np.asarray(polyline, dtype=float)
    arc, lateral, dist = project_to_polyline(point, pts)
    total = float(polyline_lengths(pts)[-1])
    p = np.asarray(point, dtype=float)
    if arc <= 1e-9:
        d = pts[1] - pts[0]
        u = d / np.linalg.norm(d)
        rel = p - pts[0]
        along = float(rel @ u)
        if along < 0.0:
            lat = u[0] * rel[1] - u[1] * rel[0]
            return along, float(lat), float(np.hypot(along, lat))
    elif arc >= total - 1e-9:
        d = pts[-1] - pts[-2]
        u = d / np.linalg.norm(d)
        rel = p - pts[-1]
        along = float(rel @ u)
        if along > 0.0:
            lat = u[0] * rel[1] - u[1] * rel[0]
            return total + along, float(lat), float(np.hypot(along, lat))
    return arc, lateral, dist


def segment_distances_to_points(points: np.ndarray, a, b) -> np.ndarray:
    """Distance from each of (N, 2) points to segment a-b. Vectorized."""
    pts = np.asarray(points, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ab = b - a
    len2 = float(ab @ ab)
    if len2 == 0.0:
        return np.linalg.norm(pts - a, axis=-1)
    t = np.clip((pts - a) @ ab / len2, 0.0, 1.0)
    proj = a + t[..., None] * ab
    return np.linalg.norm(pts - proj, axis=-1)


def polyline_distance_to_points(points: np.ndarray, polyline: np.ndarray) -> np.ndarray:
    """Distance from each of (N, 2) points to the nearest polyline segment."""
    pts = np.asarray(points, dtype=float)
    poly = np.asarray(polyline, dtype=float)
    best = np.full(pts.shape[0], np.inf)
    for i in range(len(poly) - 1):
        np.minimum(best, segment_distances_to_points(pts, poly[i], poly[i + 1]), out=best)
    return best


def resample_chord(polyline: np.ndarray, spacing: float, count: int,
                   start: np.ndarray | None = None) -> np.ndarray:
    """Resample a polyline into `count` points with exact chord spacing.

    Each output point is at Euclidean distance `spacing` from the previous
    one (circle/polyline intersection), so consecutive-point distances are
    exact rather than arc-length approximations.  Walks forward only and
    extrapolates along the final tangent once the polyline is exhausted.
    `start` defaults to the first vertex and is not included in the output.
    """
    pts = np.asarray(polyline, dtype=float)
    if len(pts) < 2:
        raise ValueError("polyline needs at least 2 points")
    cur = pts[0].copy() if start is None else np.asarray(start, dtype=float).copy()
    seg_i = 0
    seg_t = 0.0
    out = np.empty((count, 2), dtype=float)
    for k in range(count):
        nxt, seg_i, seg_t = _advance_chord(pts, cur, seg_i, seg_t, spacing)
        out[k] = nxt
        cur = nxt
    return out


def _advance_chord(pts, cur, seg_i, seg_t, spacing):
    """Find the next point at chord distance `spacing` from `cur` along pts."""
    n_seg = len(pts) - 1
    i = seg_i
    t_lo = seg_t
    while i < n_seg:
        a, b = pts[i], pts[i + 1]
        d = b - a
        f = a - cur
        A = float(d @ d)
        if A > 0.0:
            B = 2.0 * float(f @ d)
            C = float(f @ f) - spacing * spacing
            disc = B * B - 4.0 * A * C
            if disc >= 0.0:
                t = (-B + math.sqrt(disc)) / (2.0 * A)
                if t_lo <= t <= 1.0:
                    return a + t * d, i, t
        i += 1
        t_lo = 0.0
    # Polyline exhausted: extrapolate along the last tangent from `cur`.
    d = pts[-1] - pts[-2]
    norm = np.linalg.norm(d)
    u = d / norm if norm > 0 else np.array([1.0, 0.0])
    far = np.asarray(cur) - pts[-1]
    along = float(far @ u)
    perp2 = float(far @ far) - along * along
    step = math.sqrt(max(spacing * spacing - max(perp2, 0.0), 0.0))
    nxt = pts[-1] + u * (along + step)
    return nxt, n_seg - 1, 1.0


def offset_polyline(polyline: np.ndarray, offset: float) -> np.ndarray:
    """Offset a polyline laterally (positive = left) using vertex normals."""
    pts = np.asarray(polyline, dtype=float)
    tangents = np.diff(pts, axis=0)
    tangents = tangents / np.linalg.norm(tangents, axis=1, keepdims=True)
    vert_t = np.empty_like(pts)
    vert_t[0] = tangents[0]
    vert_t[-1] = tangents[-1]
    if len(pts) > 2:
        mid = tangents[:-1] + tangents[1:]
        norms = np.linalg.norm(mid, axis=1, keepdims=True)
        norms[norms == 0.0] = 1.0
        vert_t[1:-1] = mid / norms
    normals = np.stack([-vert_t[:, 1], vert_t[:, 0]], axis=1)
    return pts + offset * normals


# ---------------------------------------------------------------------------
# Oriented rectangles
# ---------------------------------------------------------------------------


def box_corners(cx: float, cy: float, yaw: float, half_length: float,
                half_width: float) -> np.ndarray:
    """(4, 2) corners of an oriented rectangle, CCW."""
    c, s = math.cos(yaw), math.sin(yaw)
    local = np.array([
        [half_length, half_width],
        [-half_length, half_width],
        [-half_length, -half_width],
        [half_length, -half_width],
    ])
    rot = np.array([[c, -s], [s, c]])
    return local @ rot.T + np.array([cx, cy])


def _axes_of(yaw: float) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, s], [-s, c]])


def rect_rect_overlap(a_pose, a_half, b_pose, b_half) -> bool:
    """Separating-axis intersection test for two oriented rectangles.

    Poses are (cx, cy, yaw); halves are (half_length, half_width).
    Touching boundaries count as overlap.
    """
    return rect_rect_penetration(a_pose, a_half, b_pose, b_half) >= 0.0


def rect_rect_penetration(a_pose, a_half, b_pose, b_half) -> float:
    """Minimum SAT overlap across the 4 face axes (negative = separated)."""
    ax_a = _axes_of(a_pose[2])
    ax_b = _axes_of(b_pose[2])
    centers = np.array([b_pose[0] - a_pose[0], b_pose[1] - a_pose[1]])
    a_h = np.asarray(a_half, dtype=float)
    b_h = np.asarray(b_half, dtype=float)
    min_overlap = math.inf
    for axis in (*ax_a, *ax_b):
        ra = a_h[0] * abs(axis @ ax_a[0]) + a_h[1] * abs(axis @ ax_a[1])
        rb = b_h[0] * abs(axis @ ax_b[0]) + b_h[1] * abs(axis @ ax_b[1])
        overlap = ra + rb - abs(float(centers @ axis))
        if overlap < min_overlap:
            min_overlap = overlap
    return float(min_overlap)


def _segment_segment_distance(p1, p2, q1, q2) -> float:
    """Distance between two 2D segments."""
    if _segments_intersect(p1, p2, q1, q2):
        return 0.0
    cands = (
        segment_distances_to_points(np.array([q1, q2]), p1, p2).min(),
        segment_distances_to_points(np.array([p1, p2]), q1, q2).min(),
    )
    return float(min(cands))


def _segments_intersect(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        return 0 if v == 0 else (1 if v > 0 else -1)

    o1, o2 = orient(p1, p2, q1), orient(p1, p2, q2)
    o3, o4 = orient(q1, q2, p1), orient(q1, q2, p2)
    return o1 != o2 and o3 != o4


def rect_rect_signed_distance(a_pose, a_half, b_pose, b_half) -> float:
    """Signed distance between oriented rectangles.

    Positive separation distance when disjoint, negative penetration depth
    when overlapping.
    """
    pen = rect_rect_penetration(a_pose, a_half, b_pose, b_half)
    if pen >= 0.0:
        return -pen
    ca = box_corners(a_pose[0], a_pose[1], a_pose[2], a_half[0], a_half[1])
    cb = box_corners(b_pose[0], b_pose[1], b_pose[2], b_half[0], b_half[1])
    best = math.inf
    for i in range(4):
        for j in range(4):
            d = _segment_segment_distance(ca[i], ca[(i + 1) % 4], cb[j], cb[(j + 1) % 4])
            if d < best:
                best = d
    return float(best)
