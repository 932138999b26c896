"""Direction sectors and the sparse block-hashed voxel volume."""

from .directions import (
    DIRECTION_THRESHOLD,
    NUM_CHANNELS,
    UNDIRECTED,
    Direction,
    applicable_directions,
    direction_masks,
    direction_weight,
    direction_weights,
    opposite,
)
from .block_map import (
    BlockMap,
    Voxel,
    VoxelBlock,
    allocate,
    position_of,
    voxel_array_stats,
    voxel_at,
)
from .snapshot import load_volume, save_volume

__all__ = [
    "DIRECTION_THRESHOLD",
    "NUM_CHANNELS",
    "UNDIRECTED",
    "Direction",
    "applicable_directions",
    "direction_masks",
    "direction_weight",
    "direction_weights",
    "opposite",
    "BlockMap",
    "Voxel",
    "VoxelBlock",
    "allocate",
    "position_of",
    "voxel_array_stats",
    "voxel_at",
    "load_volume",
    "save_volume",
]
