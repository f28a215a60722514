"""BEV road raster rendering from the lane-graph map."""

from __future__ import annotations

import numpy as np

from . import geometry
from .roadmap import MarkingType, RoadMap
from .scene import RASTER_RESOLUTION, RASTER_SIZE, CellClass, RoadRaster

_HALF_CELLS = RASTER_SIZE // 2

# Ego-frame cell centers, computed once: row index i runs along x (forward),
# column index j along y (left).
_coords = (np.arange(RASTER_SIZE) - _HALF_CELLS) * RASTER_RESOLUTION + RASTER_RESOLUTION / 2.0
_CELL_X, _CELL_Y = np.meshgrid(_coords, _coords, indexing="ij")
_CELL_CENTERS = np.stack([_CELL_X.ravel(), _CELL_Y.ravel()], axis=1)
_CELL_CENTERS.setflags(write=False)

_MARKING_HALF = RASTER_RESOLUTION / 2.0
_MARKING_END_SLACK = _MARKING_HALF + 1e-2


def _canonical(polyline: np.ndarray) -> np.ndarray:
    """Orient a polyline so shared boundaries rasterize identically.

    Two adjacent lanes describe the same boundary with opposite directions;
    picking the lexicographically smaller endpoint as the start makes the
    signed-offset band (and therefore the marked cells) direction-free.
    """
    first, last = polyline[0], polyline[-1]
    if (last[0], last[1]) < (first[0], first[1]):
        return polyline[::-1]
    return polyline


def _mark_boundary(grid_flat: np.ndarray, boundary: np.ndarray, value: int):
    """Mark cells whose center sits in the half-open band around a boundary.

    Membership uses the signed lateral offset o in [-half, +half) so a
    boundary lying exactly between two cell-center offsets claims exactly
    one row of cells.
    """
    poly = _canonical(boundary)
    # Vectorized signed offset of every cell center w.r.t. the polyline.
    best_d2 = np.full(len(_CELL_CENTERS), np.inf)
    best_lat = np.zeros(len(_CELL_CENTERS))
    for i in range(len(poly) - 1):
        a, b = poly[i], poly[i + 1]
        ab = b - a
        len2 = float(ab @ ab)
        if len2 == 0.0:
            continue
        t = np.clip((_CELL_CENTERS - a) @ ab / len2, 0.0, 1.0)
        proj = a + t[:, None] * ab
        rel = _CELL_CENTERS - proj
        d2 = np.einsum("ij,ij->i", rel, rel)
        closer = d2 < best_d2
        tangent = ab / np.sqrt(len2)
        lat = tangent[0] * rel[:, 1] - tangent[1] * rel[:, 0]
        best_lat = np.where(closer, lat, best_lat)
        best_d2 = np.where(closer, d2, best_d2)
    dist = np.sqrt(best_d2)
    hit = (best_lat >= -_MARKING_HALF) & (best_lat < _MARKING_HALF) & (dist <= _MARKING_END_SLACK)
    grid_flat[hit] = value


def render_road_raster(road_map: RoadMap, ego_pose) -> RoadRaster:
    """Rasterize drivable area and lane markings around the ego pose.

    Cells are classified by their centers; deterministic for fixed inputs.
    """
    grid = np.zeros(RASTER_SIZE * RASTER_SIZE, dtype=np.uint8)
    locals_ = [geometry.points_to_ego_frame(lane.centerline, ego_pose)
               for lane in road_map.lanes]

    for lane, center in zip(road_map.lanes, locals_):
        d = geometry.polyline_distance_to_points(_CELL_CENTERS, center)
        grid[d <= lane.width / 2.0] = int(CellClass.DRIVABLE_ROAD)

    for pass_type, value in ((MarkingType.SOLID, CellClass.SOLID_MARKING),
                             (MarkingType.BROKEN, CellClass.BROKEN_MARKING)):
        for lane, center in zip(road_map.lanes, locals_):
            half = lane.width / 2.0
            if lane.marking_left is pass_type:
                _mark_boundary(grid, geometry.offset_polyline(center, half), int(value))
            if lane.marking_right is pass_type:
                _mark_boundary(grid, geometry.offset_polyline(center, -half), int(value))

    return RoadRaster(grid.reshape(RASTER_SIZE, RASTER_SIZE))


def resample_raster(raster: RoadRaster, dx: float, dy: float, dyaw: float) -> RoadRaster:
    """Re-express a raster in a shifted/rotated ego frame by nearest-neighbor.

    Used when the source map is unavailable; cells that fall outside the
    original grid become Background.
    """
    # New-frame cell centers expressed in the old frame.
    pts = geometry.rotate_points(_CELL_CENTERS, dyaw) + np.array([dx, dy])
    idx = np.floor(pts / RASTER_RESOLUTION).astype(int) + _HALF_CELLS
    valid = ((idx[:, 0] >= 0) & (idx[:, 0] < RASTER_SIZE)
             & (idx[:, 1] >= 0) & (idx[:, 1] < RASTER_SIZE))
    out = np.zeros(RASTER_SIZE * RASTER_SIZE, dtype=np.uint8)
    out[valid] = raster.grid[idx[valid, 0], idx[valid, 1]]
    return RoadRaster(out.reshape(RASTER_SIZE, RASTER_SIZE))
