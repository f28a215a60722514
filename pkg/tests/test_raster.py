import numpy as np
import pytest

from plancraft import raster as ras
from plancraft.roadmap import Lane, MarkingType, RoadMap, empty_map
from plancraft.scene import CellClass, RASTER_SIZE


def seven_meter_road(length=200.0, outer=MarkingType.NONE):
    """7 m-wide two-lane road along x through the origin, center line broken."""
    xs = np.array([-length / 2, length / 2])
    right = Lane(np.stack([xs, np.full(2, -1.75)], axis=1), width=3.5,
                 marking_left=MarkingType.BROKEN, marking_right=outer)
    left = Lane(np.stack([xs[::-1], np.full(2, 1.75)], axis=1), width=3.5,
                marking_left=MarkingType.BROKEN, marking_right=outer)
    return RoadMap(lanes=(right, left))


def test_empty_map_all_background():
    r = ras.render_road_raster(empty_map(), (0.0, 0.0, 0.0))
    assert np.all(r.grid == int(CellClass.BACKGROUND))


def test_two_lane_road_band_and_center_line():
    r = ras.render_road_raster(seven_meter_road(), (0.0, 0.0, 0.0))
    # Examine a column strip well inside the road extent.
    row = r.grid[64, :]
    road_cols = np.nonzero(row != int(CellClass.BACKGROUND))[0]
    assert len(road_cols) == 14  # 7 m at 0.5 m/cell
    assert np.all(np.diff(road_cols) == 1)  # one contiguous band
    broken = np.nonzero(row == int(CellClass.BROKEN_MARKING))[0]
    assert len(broken) == 1  # exactly one center-line cell
    assert np.sum(row == int(CellClass.DRIVABLE_ROAD)) == 13
    assert np.sum(row == int(CellClass.SOLID_MARKING)) == 0
    # Same pattern across every row covered by the road.
    assert np.all(r.grid[10] == row) and np.all(r.grid[120] == row)


def test_forward_translation_shifts_one_row():
    m = seven_meter_road()
    base = ras.render_road_raster(m, (0.0, 0.0, 0.0))
    moved = ras.render_road_raster(m, (0.5, 0.0, 0.0))
    # Moving the ego 0.5 m forward pulls the world one row backward.
    assert np.array_equal(moved.grid[:-1, :], base.grid[1:, :])


def test_lateral_translation_shifts_one_column():
    m = seven_meter_road()
    base = ras.render_road_raster(m, (0.0, 0.0, 0.0))
    moved = ras.render_road_raster(m, (0.0, 0.5, 0.0))
    assert np.array_equal(moved.grid[:, :-1], base.grid[:, 1:])


def test_multi_cell_translation_equivariance():
    m = seven_meter_road()
    base = ras.render_road_raster(m, (0.0, 0.0, 0.0))
    moved = ras.render_road_raster(m, (2.0, -1.5, 0.0))
    # 4 rows forward, 3 columns right.
    assert np.array_equal(moved.grid[:-4, 3:], base.grid[4:, :-3])


def test_solid_markings_rendered():
    m = seven_meter_road(outer=MarkingType.SOLID)
    r = ras.render_road_raster(m, (0.0, 0.0, 0.0))
    row = r.grid[64, :]
    assert np.sum(row == int(CellClass.SOLID_MARKING)) == 2  # both road edges


def test_resample_identity():
    m = seven_meter_road()
    base = ras.render_road_raster(m, (0.0, 0.0, 0.0))
    same = ras.resample_raster(base, 0.0, 0.0, 0.0)
    assert np.array_equal(same.grid, base.grid)


def test_resample_shift_matches_render():
    m = seven_meter_road()
    base = ras.render_road_raster(m, (0.0, 0.0, 0.0))
    shifted = ras.resample_raster(base, 2.0, 0.0, 0.0)
    rendered = ras.render_road_raster(m, (2.0, 0.0, 0.0))
    # Interior agrees exactly; edge rows fall outside the source grid.
    assert np.array_equal(shifted.grid[:-4, :], rendered.grid[:-4, :])
