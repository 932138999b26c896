"""
Grid traversal of ray segments (3D-DDA).

The batch walker advances every active ray one cell per iteration, so the
cost is the longest segment in cells rather than the ray count. Boundary
crossing times are recomputed from the cell index at every step instead of
accumulated, which keeps results bit-identical to a direct slab test.
"""

from typing import List, Tuple

import numpy as np


def traverse_batch(
    origins: np.ndarray,
    directions: np.ndarray,
    t_min: np.ndarray,
    t_max: np.ndarray,
    cell_size: float = 1.0,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Cells crossed by many ray segments o + t d, t in [t_min, t_max].

    A cell is reported when the segment spends positive length inside it;
    segments grazing an edge or corner do not report the touched cell.

    Args:
        origins: (N, 3) ray origins
        directions: (N, 3) ray directions (need not be unit)
        t_min: (N,) segment start parameters
        t_max: (N,) segment end parameters
        cell_size: Edge length of a grid cell

    Returns:
        Tuple of (ray index (M,), cells (M, 3) int64); cells of one ray appear
        in walk order, rays interleaved
    """
    origins = np.asarray(origins, dtype=np.float64).reshape(-1, 3)
    directions = np.asarray(directions, dtype=np.float64).reshape(-1, 3)
    t_min = np.broadcast_to(np.asarray(t_min, dtype=np.float64), origins.shape[:1]).copy()
    t_max = np.broadcast_to(np.asarray(t_max, dtype=np.float64), origins.shape[:1]).copy()

    n = origins.shape[0]
    if n == 0:
        return np.zeros(0, dtype=np.int64), np.zeros((0, 3), dtype=np.int64)

    start = origins + t_min[:, None] * directions
    cell = np.floor(start / cell_size).astype(np.int64)
    step = np.sign(directions).astype(np.int64)
    moving = step != 0
    safe_dir = np.where(moving, directions, 1.0)

    bound = (cell + (step > 0)) * cell_size
    t_next = np.where(moving, (bound - origins) / safe_dir, np.inf)
    t_cur = t_min.copy()
    active = np.flatnonzero(t_min < t_max)

    ray_parts: List[np.ndarray] = []
    cell_parts: List[np.ndarray] = []
    while active.size:
        t_exit = t_next[active].min(axis=1)
        inside = np.minimum(t_exit, t_max[active]) > t_cur[active]
        ray_parts.append(active[inside])
        cell_parts.append(cell[active[inside]].copy())

        axis = t_next[active].argmin(axis=1)
        cell[active, axis] += step[active, axis]
        stepped = cell[active, axis] + (step[active, axis] > 0)
        t_next[active, axis] = (stepped * cell_size - origins[active, axis]) / safe_dir[active, axis]
        t_cur[active] = t_exit
        active = active[t_exit < t_max[active]]

    if not ray_parts:
        return np.zeros(0, dtype=np.int64), np.zeros((0, 3), dtype=np.int64)
    return np.concatenate(ray_parts), np.concatenate(cell_parts)


def traverse_voxels(
    origin: np.ndarray,
    direction: np.ndarray,
    t_min: float,
    t_max: float,
    voxel_size: float = 1.0,
) -> List[Tuple[int, int, int]]:
    """
    Ordered voxel cells crossed by one ray segment.

    Args:
        origin: Ray origin
        direction: Unit ray direction
        t_min: Segment start
        t_max: Segment end
        voxel_size: Cell edge length

    Returns:
        Cells in ray order, each exactly once; empty when t_min >= t_max
    """
    _, cells = traverse_batch(
        np.asarray(origin, dtype=np.float64)[None],
        np.asarray(direction, dtype=np.float64)[None],
        np.array([t_min]),
        np.array([t_max]),
        voxel_size,
    )
    return [tuple(int(v) for v in c) for c in cells]
