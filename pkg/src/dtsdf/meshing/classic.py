"""
Classic marching cubes over one channel of the volume.

Used for the undirected baseline TSDF and for single directions. A cell is
extractable only when all eight corners carry weight.
"""

import logging
from typing import Tuple

import numpy as np

from ..volume.block_map import BlockMap
from ..volume.directions import UNDIRECTED
from .mesh import TriangleMesh, edge_keys, split_edge_keys
from .tables import AXIS_VECTORS, CORNER_OFFSETS, EDGE_LOWER, EDGE_OWNERS, TRI_TABLE


logger = logging.getLogger(__name__)


def corner_cells(cells: np.ndarray) -> np.ndarray:
    """Lattice points of the eight corners of each cell, shape (N, 8, 3)."""
    return np.asarray(cells, dtype=np.int64)[:, None, :] + CORNER_OFFSETS[None, :, :]


def mc_indices(sdf: np.ndarray) -> np.ndarray:
    """MC index per row of an (N, 8) corner sdf array; bit c set iff sdf_c < 0."""
    bits = (np.asarray(sdf) < 0).astype(np.int64)
    return (bits << np.arange(8, dtype=np.int64)).sum(axis=-1)


def edge_offset(s_low: np.ndarray, s_up: np.ndarray) -> np.ndarray:
    """Zero crossing along an edge, |s_low| / (|s_low| + |s_up|) for opposite signs."""
    denom = s_low - s_up
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(denom != 0, s_low / np.where(denom != 0, denom, 1.0), 0.5)
    return np.clip(t, 0.0, 1.0)


def emit_triangles(
    cells: np.ndarray, indices: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Triangle corner keys for cells with given MC indices.

    Each vertex is keyed by the edge owner, edge axis and surface side
    (0 when the owner's lattice point is inside, 1 otherwise).

    Returns:
        Tuple of (unique keys (V,), triangles (T, 3) indexing those keys)
    """
    cells = np.asarray(cells, dtype=np.int64).reshape(-1, 3)
    indices = np.asarray(indices, dtype=np.int64).reshape(-1)
    edges = TRI_TABLE[indices]
    rows, cols = np.nonzero(edges >= 0)
    if rows.size == 0:
        return np.zeros(0, dtype=np.int64), np.zeros((0, 3), dtype=np.int64)

    e = edges[rows, cols]
    owners = cells[rows] + EDGE_OWNERS[e, :3]
    axes = EDGE_OWNERS[e, 3]
    low_inside = (indices[rows] >> EDGE_LOWER[e]) & 1
    sides = 1 - low_inside
    keys = edge_keys(owners, axes, sides)

    unique, inverse = np.unique(keys, return_inverse=True)
    return unique, inverse.reshape(-1, 3)


def classic_mc(block_map: BlockMap, channel: int = UNDIRECTED) -> TriangleMesh:
    """
    Extract a mesh from one channel with standard marching cubes.

    Args:
        block_map: Volume
        channel: Channel to mesh; the undirected baseline by default

    Returns:
        TriangleMesh with outward winding
    """
    cells, _ = block_map.allocated_voxels(channel)
    if cells.shape[0] == 0:
        return TriangleMesh()

    sdf, weight = block_map.gather(corner_cells(cells), channel)
    indices = mc_indices(sdf)
    surface = np.all(weight > 0, axis=1) & (indices != 0) & (indices != 255)
    keys, triangles = emit_triangles(cells[surface], indices[surface])
    if keys.size == 0:
        return TriangleMesh()

    owners, axes, _ = split_edge_keys(keys)
    s_low, _ = block_map.gather(owners, channel)
    s_up, _ = block_map.gather(owners + AXIS_VECTORS[axes], channel)
    t = edge_offset(s_low, s_up)
    vertices = (owners + t[:, None] * AXIS_VECTORS[axes]) * block_map.voxel_size

    logger.debug(f"Classic MC: {int(surface.sum())} surface cells, {triangles.shape[0]} triangles")
    return TriangleMesh(vertices, triangles)
