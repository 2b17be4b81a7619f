from .grid import (
    AccessPoint,
    BlockId,
    Grid,
    access_point_for,
    block_of,
    build_access_points,
    build_grid,
)
from .netkey import EpochClock, KeySchedule, NetKey, epoch_of, net_key

__all__ = [
    "AccessPoint",
    "BlockId",
    "EpochClock",
    "Grid",
    "KeySchedule",
    "NetKey",
    "access_point_for",
    "block_of",
    "build_access_points",
    "build_grid",
    "epoch_of",
    "net_key",
]
