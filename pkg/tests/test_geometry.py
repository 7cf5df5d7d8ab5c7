import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eagers.errors import InvalidGeometryError, InvalidSelectionError
from eagers.geometry import (
    CellIndex,
    GridSpec,
    Rect,
    cell_from_linear,
    expand_margin,
    partition,
    round_half_up,
    selection_count,
    visible_region,
)

grids = st.builds(
    GridSpec,
    rows=st.integers(min_value=1, max_value=12),
    cols=st.integers(min_value=1, max_value=12),
)


def test_round_half_up_convention():
    assert round_half_up(0.5) == 1
    assert round_half_up(1.5) == 2
    assert round_half_up(2.4) == 2
    assert round_half_up(-0.5) == 0


def test_grid_validation():
    with pytest.raises(InvalidGeometryError):
        GridSpec(rows=0, cols=5)
    with pytest.raises(InvalidGeometryError):
        GridSpec(rows=5, cols=-1)
    assert GridSpec(rows=5, cols=5).cell_count == 25


def test_cell_index_linear_round_trip():
    grid = GridSpec(rows=3, cols=4)
    for i in range(grid.cell_count):
        cell = cell_from_linear(i, grid)
        assert cell.linear(grid) == i
    with pytest.raises(InvalidGeometryError):
        cell_from_linear(12, grid)
    with pytest.raises(InvalidGeometryError):
        CellIndex(row=3, col=0).linear(grid)
    with pytest.raises(InvalidGeometryError):
        CellIndex(row=-1, col=0)


def test_rect_validation_and_accessors():
    r = Rect(left=2, top=3, right=10, bottom=7)
    assert r.width == 8 and r.height == 4 and r.area == 32
    assert r.contains(2, 3) and not r.contains(10, 3)
    with pytest.raises(InvalidGeometryError):
        Rect(left=5, top=0, right=5, bottom=3)
    with pytest.raises(InvalidGeometryError):
        Rect(left=-1, top=0, right=5, bottom=3)


def test_partition_known_boundaries():
    # width 1003 over 5 columns lands on the rounded fifths
    cells = partition(1003, 5, GridSpec(rows=1, cols=5))
    assert [c.left for c in cells] == [0, 201, 401, 602, 802]
    assert cells[-1].right == 1003


@given(
    grid=grids,
    width=st.integers(min_value=12, max_value=60),
    height=st.integers(min_value=12, max_value=60),
)
@settings(max_examples=60)
def test_partition_tiles_exactly(grid, width, height):
    cells = partition(width, height, grid)
    assert len(cells) == grid.cell_count
    # brute force: every pixel covered exactly once
    owners = [[0] * width for _ in range(height)]
    for c in cells:
        for y in range(c.top, c.bottom):
            for x in range(c.left, c.right):
                owners[y][x] += 1
    assert all(owners[y][x] == 1 for y in range(height) for x in range(width))


def test_partition_rejects_too_small_images():
    with pytest.raises(InvalidGeometryError):
        partition(4, 10, GridSpec(rows=1, cols=5))
    with pytest.raises(InvalidGeometryError):
        partition(0, 10, GridSpec(rows=1, cols=1))


def test_selection_count_examples():
    assert selection_count(GridSpec(rows=5, cols=5)) == 8
    assert selection_count(GridSpec(rows=10, cols=5)) == 15
    assert selection_count(GridSpec(rows=1, cols=1)) == 1


@given(grid=grids)
def test_selection_count_bounds_and_ceiling(grid):
    k = selection_count(grid)
    assert 1 <= k <= grid.cell_count
    assert k == math.ceil(0.3 * grid.cell_count) or k == (3 * grid.cell_count + 9) // 10
    # integer ceiling oracle, no floats involved
    assert k == -((-3 * grid.cell_count) // 10)


def test_expand_margin_examples():
    # growth is 15% of the rect's own extent on each side
    assert expand_margin(Rect(200, 100, 400, 200), 0.15, 1000, 500) == Rect(170, 85, 430, 215)
    r = Rect(10, 10, 50, 30)
    assert expand_margin(r, 0.0, 100, 100) == r
    assert expand_margin(Rect(0, 0, 200, 100), 0.15, 1000, 500) == Rect(0, 0, 230, 115)


def test_expand_margin_validation():
    with pytest.raises(InvalidGeometryError):
        expand_margin(Rect(0, 0, 10, 10), -0.1, 100, 100)
    with pytest.raises(InvalidGeometryError):
        expand_margin(Rect(0, 0, 10, 10), 1.1, 100, 100)
    with pytest.raises(InvalidGeometryError):
        expand_margin(Rect(0, 0, 10, 10), 0.1, 5, 100)


@given(
    grid=grids,
    width=st.integers(min_value=24, max_value=200),
    height=st.integers(min_value=24, max_value=200),
    margin=st.floats(min_value=0, max_value=1, allow_nan=False),
    pick=st.integers(min_value=0, max_value=10_000),
)
@settings(max_examples=80)
def test_expand_margin_monotone_and_clamped(grid, width, height, margin, pick):
    cells = partition(width, height, grid)
    cell = cells[pick % len(cells)]
    grown = expand_margin(cell, margin, width, height)
    assert grown.left <= cell.left and grown.top <= cell.top
    assert grown.right >= cell.right and grown.bottom >= cell.bottom
    assert grown.left >= 0 and grown.top >= 0
    assert grown.right <= width and grown.bottom <= height


def test_visible_region_rejects_empty_selection():
    with pytest.raises(InvalidSelectionError):
        visible_region(set(), GridSpec(rows=2, cols=2), 0.0, 100, 100)


def test_visible_region_full_and_single():
    grid = GridSpec(rows=2, cols=3)
    every = {cell_from_linear(i, grid) for i in range(grid.cell_count)}
    rects = visible_region(every, grid, 0.0, 90, 60)
    assert sum(r.area for r in rects) == 90 * 60
    corner = visible_region({CellIndex(0, 0)}, grid, 0.0, 90, 60)
    assert corner == [partition(90, 60, grid)[0]]


def test_visible_region_margin_overlap():
    # two adjacent cells grown by 15% overlap, so union < sum of areas
    grid = GridSpec(rows=1, cols=2)
    rects = visible_region({CellIndex(0, 0), CellIndex(0, 1)}, grid, 0.15, 200, 100)
    assert len(rects) == 2
    a, b = rects
    assert a.intersects(b)
    union = set()
    for r in rects:
        union.update((x, y) for y in range(r.top, r.bottom) for x in range(r.left, r.right))
    assert len(union) < a.area + b.area
