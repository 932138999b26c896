"""
Binary volume snapshots for save and resume.

Layout (little-endian): header ``<8sIddIQ`` with magic, format version,
voxel size, tau, block size and block count, then per block the int32
block coordinate, a uint8 allocation mask and, for each set mask bit in
channel order, float64 sdf and weight arrays of B^3 values.
"""

import logging
import struct
from pathlib import Path
from typing import Union

import numpy as np

from ..errors import SnapshotError
from .block_map import BlockMap
from .directions import NUM_CHANNELS


logger = logging.getLogger(__name__)


MAGIC = b"DTSDFVOL"
VERSION = 1
HEADER = struct.Struct("<8sIddIQ")
BLOCK_HEADER = struct.Struct("<3iB")


def save_volume(block_map: BlockMap, path: Union[str, Path]) -> None:
    """
    Write a BlockMap snapshot.

    Args:
        block_map: Volume to write
        path: Output file; parent directories are created
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    coords = block_map.block_coords()

    with open(path, "wb") as f:
        f.write(
            HEADER.pack(
                MAGIC,
                VERSION,
                block_map.voxel_size,
                block_map.truncation,
                block_map.block_size,
                len(coords),
            )
        )
        for coord in coords:
            block = block_map.get_block(coord)
            f.write(BLOCK_HEADER.pack(*coord, block.allocation_mask))
            for channel in range(NUM_CHANNELS):
                arrays = block_map.block_arrays(coord, channel)
                if arrays is None:
                    continue
                sdf, weight = arrays
                f.write(np.ascontiguousarray(sdf, dtype="<f8").tobytes())
                f.write(np.ascontiguousarray(weight, dtype="<f8").tobytes())

    logger.debug(f"Saved {len(coords)} blocks to {path}")


def load_volume(path: Union[str, Path]) -> BlockMap:
    """
    Read a snapshot written by save_volume.

    Args:
        path: Snapshot file

    Returns:
        Reconstructed BlockMap

    Raises:
        FileNotFoundError: If the file does not exist
        SnapshotError: If the file is truncated, foreign or of another version
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Volume snapshot not found: {path}")

    data = path.read_bytes()
    if len(data) < HEADER.size:
        raise SnapshotError(f"{path}: file too short for a volume header")

    magic, version, voxel_size, tau, block_size, n_blocks = HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise SnapshotError(f"{path}: not a dtsdf volume snapshot")
    if version != VERSION:
        raise SnapshotError(f"{path}: unsupported snapshot version {version}")
    if not voxel_size > 0 or block_size < 1 or tau < voxel_size:
        raise SnapshotError(f"{path}: invalid volume header")

    block_map = BlockMap(voxel_size, tau / voxel_size, block_size)
    voxels = block_size ** 3
    array_bytes = voxels * 8
    offset = HEADER.size

    try:
        for _ in range(n_blocks):
            *coord, mask = BLOCK_HEADER.unpack_from(data, offset)
            offset += BLOCK_HEADER.size
            channels = [c for c in range(NUM_CHANNELS) if mask & (1 << c)]
            if mask >> NUM_CHANNELS:
                raise SnapshotError(f"{path}: invalid allocation mask {mask:#x}")
            block_map.allocate(coord, channels)
            for channel in channels:
                if offset + 2 * array_bytes > len(data):
                    raise SnapshotError(f"{path}: truncated block data")
                sdf, weight = block_map.block_arrays(coord, channel)
                sdf[...] = np.frombuffer(data, "<f8", voxels, offset).reshape(sdf.shape)
                offset += array_bytes
                weight[...] = np.frombuffer(data, "<f8", voxels, offset).reshape(weight.shape)
                offset += array_bytes
    except struct.error as e:
        raise SnapshotError(f"{path}: truncated block record") from e

    if offset != len(data):
        raise SnapshotError(f"{path}: {len(data) - offset} trailing bytes")

    logger.debug(f"Loaded {n_blocks} blocks from {path}")
    return block_map
