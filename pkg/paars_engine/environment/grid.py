"""
GPS co-ordinate blocks and the access-point layout of the system environment.

The environment is an axis-aligned grid of square cells no wider than the
2 m contact radius. Blocks are numbered row-major from the origin corner.
"""

import hashlib
import hmac
import logging
import math
from dataclasses import dataclass
from typing import FrozenSet, List, Sequence, Tuple

from ..exceptions import (
    CellTooLargeError,
    DataValidationError,
    InvalidDimensionsError,
    OutOfBoundsError,
    log_operation,
)

logger = logging.getLogger(__name__)

MAX_CELL_SIZE_M = 2.0
ADDRESS_BITS = 48

Position = Tuple[float, float]


@dataclass(frozen=True, order=True)
class BlockId:
    """Row-major index of a grid cell"""
    value: int


@dataclass(frozen=True)
class Grid:
    origin: Position
    cell_size_m: float
    width_cells: int
    height_cells: int

    @property
    def n_blocks(self) -> int:
        return self.width_cells * self.height_cells

    @property
    def bounds(self) -> Tuple[float, float, float, float]:
        ox, oy = self.origin
        return (ox, oy, ox + self.width_cells * self.cell_size_m, oy + self.height_cells * self.cell_size_m)

    def cell_of(self, block: BlockId) -> Tuple[int, int]:
        """(column, row) of a block"""
        if not 0 <= block.value < self.n_blocks:
            raise DataValidationError(f"Block {block.value} outside grid", {'n_blocks': self.n_blocks})
        return block.value % self.width_cells, block.value // self.width_cells

    def block_at(self, column: int, row: int) -> BlockId:
        return BlockId(row * self.width_cells + column)

    def center_of(self, block: BlockId) -> Position:
        column, row = self.cell_of(block)
        ox, oy = self.origin
        return (ox + (column + 0.5) * self.cell_size_m, oy + (row + 0.5) * self.cell_size_m)


def build_grid(origin: Position, cell_size_m: float, width_cells: int, height_cells: int) -> Grid:
    """Partition the environment into square blocks of side `cell_size_m`"""
    if not cell_size_m > 0:
        raise InvalidDimensionsError(f"Cell size must be positive, got {cell_size_m}", {'cell_size_m': cell_size_m})
    if cell_size_m > MAX_CELL_SIZE_M:
        raise CellTooLargeError(cell_size_m, MAX_CELL_SIZE_M)
    if width_cells < 1 or height_cells < 1:
        raise InvalidDimensionsError(
            f"Grid dimensions must be at least 1x1, got {width_cells}x{height_cells}",
            {'width_cells': width_cells, 'height_cells': height_cells},
        )

    grid = Grid((float(origin[0]), float(origin[1])), float(cell_size_m), int(width_cells), int(height_cells))
    log_operation("build_grid", {
        "cell_size_m": grid.cell_size_m,
        "width_cells": grid.width_cells,
        "height_cells": grid.height_cells,
    })
    return grid


def block_of(grid: Grid, position: Position) -> BlockId:
    """Map an in-bounds position to the identifier of the block containing it"""
    x, y = position
    ox, oy = grid.origin
    column = math.floor((x - ox) / grid.cell_size_m)
    row = math.floor((y - oy) / grid.cell_size_m)
    if not (0 <= column < grid.width_cells and 0 <= row < grid.height_cells):
        raise OutOfBoundsError(position, grid.bounds)
    return grid.block_at(column, row)


@dataclass(frozen=True)
class AccessPoint:
    ap_id: int
    network_address: int
    covered_blocks: FrozenSet[int]

    def __post_init__(self):
        if not self.covered_blocks:
            raise DataValidationError(f"Access point {self.ap_id} covers no block")
        if not 0 <= self.network_address < (1 << ADDRESS_BITS):
            raise DataValidationError(f"Access point {self.ap_id} address is not 48-bit")

    @property
    def address_bytes(self) -> bytes:
        return self.network_address.to_bytes(ADDRESS_BITS // 8, "big")

    @property
    def mac(self) -> str:
        return ":".join(f"{b:02x}" for b in self.address_bytes)

    def covers(self, block: BlockId) -> bool:
        return block.value in self.covered_blocks


def _derive_address(seed: bytes, ap_id: int) -> int:
    digest = hmac.new(seed, b"paars-ap-address" + ap_id.to_bytes(4, "big"), hashlib.sha256).digest()
    octets = bytearray(digest[:6])
    # locally administered, unicast
    octets[0] = (octets[0] | 0x02) & 0xFE
    return int.from_bytes(bytes(octets), "big")


def build_access_points(grid: Grid, n_access_points: int, seed: bytes) -> List[AccessPoint]:
    """Split the grid into vertical strips served by one access point each"""
    if not 1 <= n_access_points <= grid.width_cells:
        raise InvalidDimensionsError(
            f"Need between 1 and {grid.width_cells} access points, got {n_access_points}",
            {'n_access_points': n_access_points},
        )

    strip_edges = [round(i * grid.width_cells / n_access_points) for i in range(n_access_points + 1)]
    access_points = []
    for ap_id in range(n_access_points):
        columns = range(strip_edges[ap_id], strip_edges[ap_id + 1])
        blocks = frozenset(
            grid.block_at(c, r).value for c in columns for r in range(grid.height_cells)
        )
        access_points.append(AccessPoint(ap_id, _derive_address(seed, ap_id), blocks))

    validate_coverage(grid, access_points)
    log_operation("build_access_points", {"n_access_points": n_access_points})
    return access_points


def validate_coverage(grid: Grid, access_points: Sequence[AccessPoint]) -> None:
    covered = set()
    for ap in access_points:
        covered |= ap.covered_blocks
    missing = grid.n_blocks - len(covered & set(range(grid.n_blocks)))
    if missing:
        raise DataValidationError(f"{missing} blocks are not covered by any access point")


def access_point_for(access_points: Sequence[AccessPoint], block: BlockId) -> AccessPoint:
    """First access point whose coverage includes the block"""
    for ap in access_points:
        if ap.covers(block):
            return ap
    raise DataValidationError(f"No access point covers block {block.value}")
