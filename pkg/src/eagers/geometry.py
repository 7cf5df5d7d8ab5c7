"""Grid partitioning and rectangle arithmetic on pixel images.

Coordinates are integer pixels. Rectangles are half-open: a Rect covers
columns [left, right) and rows [top, bottom), so width = right - left.
Cells are addressed in row-major order, index = row * cols + col.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import InvalidGeometryError, InvalidSelectionError

SELECTION_FRACTION_NUM = 3
SELECTION_FRACTION_DEN = 10


def round_half_up(value: float) -> int:
    """Round to the nearest integer, with .5 going away from zero toward +inf.

    Python's built-in round() uses banker's rounding, which would make cell
    boundaries depend on parity. Boundary math needs a fixed convention.
    """
    return math.floor(value + 0.5)


@dataclass(frozen=True, slots=True)
class GridSpec:
    """An m x n partition of an image, rows x cols."""

    rows: int
    cols: int

    def __post_init__(self) -> None:
        if self.rows < 1 or self.cols < 1:
            raise InvalidGeometryError(
                f"grid must have positive dimensions, got {self.rows}x{self.cols}"
            )

    @property
    def cell_count(self) -> int:
        return self.rows * self.cols


@dataclass(frozen=True, slots=True)
class CellIndex:
    """Position of one cell within a grid."""

    row: int
    col: int

    def __post_init__(self) -> None:
        if self.row < 0 or self.col < 0:
            raise InvalidGeometryError(
                f"cell index must be non-negative, got ({self.row}, {self.col})"
            )

    def linear(self, grid: GridSpec) -> int:
        if self.row >= grid.rows or self.col >= grid.cols:
            raise InvalidGeometryError(
                f"cell ({self.row}, {self.col}) outside {grid.rows}x{grid.cols} grid"
            )
        return self.row * grid.cols + self.col


def cell_from_linear(index: int, grid: GridSpec) -> CellIndex:
    if not 0 <= index < grid.cell_count:
        raise InvalidGeometryError(
            f"linear index {index} outside grid with {grid.cell_count} cells"
        )
    return CellIndex(row=index // grid.cols, col=index % grid.cols)


@dataclass(frozen=True, slots=True)
class Rect:
    """Half-open axis-aligned pixel rectangle."""

    left: int
    top: int
    right: int
    bottom: int

    def __post_init__(self) -> None:
        if self.left < 0 or self.top < 0:
            raise InvalidGeometryError(f"rect origin must be non-negative: {self}")
        if self.right <= self.left or self.bottom <= self.top:
            raise InvalidGeometryError(f"rect must have positive extent: {self}")

    @property
    def width(self) -> int:
        return self.right - self.left

    @property
    def height(self) -> int:
        return self.bottom - self.top

    @property
    def area(self) -> int:
        return self.width * self.height

    def contains(self, x: int, y: int) -> bool:
        return self.left <= x < self.right and self.top <= y < self.bottom

    def intersects(self, other: "Rect") -> bool:
        return (
            self.left < other.right
            and other.left < self.right
            and self.top < other.bottom
            and other.top < self.bottom
        )


def _boundaries(extent: int, parts: int) -> list[int]:
    # Boundary i sits at round(i * extent / parts), computed in integers so
    # float rounding can never split a pixel differently across platforms.
    # round_half_up(i * extent / parts) == (2 * i * extent + parts) // (2 * parts).
    return [(2 * i * extent + parts) // (2 * parts) for i in range(parts + 1)]


def partition(width: int, height: int, grid: GridSpec) -> list[Rect]:
    """Split a width x height image into grid.rows * grid.cols cell rects.

    Cells are returned in row-major order and tile the image exactly: every
    pixel belongs to exactly one cell. Requires the image to be large enough
    that every cell has positive extent.
    """
    if width < 1 or height < 1:
        raise InvalidGeometryError(f"image extent must be positive, got {width}x{height}")
    if width < grid.cols or height < grid.rows:
        raise InvalidGeometryError(
            f"image {width}x{height} too small for {grid.rows}x{grid.cols} grid"
        )
    xs = _boundaries(width, grid.cols)
    ys = _boundaries(height, grid.rows)
    cells: list[Rect] = []
    for r in range(grid.rows):
        for c in range(grid.cols):
            cells.append(Rect(left=xs[c], top=ys[r], right=xs[c + 1], bottom=ys[r + 1]))
    return cells


def selection_count(grid: GridSpec) -> int:
    """Number of cells to keep: ceil of 30% of the grid's cell count.

    Computed with integer arithmetic; ceil(3n/10) == (3n + 9) // 10.
    """
    n = grid.cell_count
    return (SELECTION_FRACTION_NUM * n + SELECTION_FRACTION_DEN - 1) // SELECTION_FRACTION_DEN


def expand_margin(
    cell: Rect,
    margin_fraction: float,
    image_width: int,
    image_height: int,
) -> Rect:
    """Grow a rect by a fraction of its own extent on each side.

    Growth is round(margin_fraction * width) on left and right and
    round(margin_fraction * height) on top and bottom, clamped to the image.
    """
    if not 0 <= margin_fraction <= 1:
        raise InvalidGeometryError(f"margin fraction must be in [0, 1], got {margin_fraction}")
    if cell.right > image_width or cell.bottom > image_height:
        raise InvalidGeometryError(
            f"cell {cell} exceeds image bounds {image_width}x{image_height}"
        )
    if margin_fraction == 0:
        return cell
    dx = round_half_up(margin_fraction * cell.width)
    dy = round_half_up(margin_fraction * cell.height)
    return Rect(
        left=max(0, cell.left - dx),
        top=max(0, cell.top - dy),
        right=min(image_width, cell.right + dx),
        bottom=min(image_height, cell.bottom + dy),
    )


def visible_region(
    selected: frozenset[CellIndex] | set[CellIndex],
    grid: GridSpec,
    margin_fraction: float,
    image_width: int,
    image_height: int,
) -> list[Rect]:
    """Margin-expanded rects of the selected cells, in linear-index order.

    Expanded rects may overlap; mask application takes their union. An empty
    selection is rejected, since masking everything would leave the model a
    black image.
    """
    if not selected:
        raise InvalidSelectionError("selection covers no cells")
    cells = partition(image_width, image_height, grid)
    indices = sorted(idx.linear(grid) for idx in selected)
    return [
        expand_margin(cells[i], margin_fraction, image_width, image_height) for i in indices
    ]
