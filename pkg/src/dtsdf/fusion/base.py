"""
Base class for fusion strategies.
Defines the interface that voxel projection and the ray casting modes implement.
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..config import FusionConfig
from ..volume.block_map import BlockMap, pack_coords, unpack_coords
from ..volume.directions import DIRECTION_VECTORS, UNDIRECTED
from .frame import DepthFrame, NormalMap
from .traversal import traverse_batch
from .weighting import angle_weight, depth_weight


PIXEL_CHUNK = 8192
VOXEL_CHUNK = 65536

# (flat voxel indices, sum of w*d, sum of w) for one channel
Partial = Tuple[np.ndarray, np.ndarray, np.ndarray]


@dataclass
class FrameContext:
    """
    Per-frame quantities shared by allocation and write passes.

    All per-pixel arrays are restricted to contributing pixels; row k
    belongs to flat pixel ``pixel_ids[k]``.
    """
    config: FusionConfig
    block_map: BlockMap
    frame: DepthFrame
    pixel_ids: np.ndarray
    depth: np.ndarray
    points: np.ndarray
    view_dirs: np.ndarray
    normals: Optional[np.ndarray]
    normals_camera_z: Optional[np.ndarray]
    camera_center: np.ndarray
    channels: List[int]
    channel_weights: np.ndarray
    pixel_lookup: np.ndarray
    segments: Optional[Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]] = None
    voxels: Dict[int, Tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)

    @property
    def count(self) -> int:
        return int(self.pixel_ids.shape[0])

    @property
    def inward_normals(self) -> np.ndarray:
        return -self.normals


@dataclass
class ChunkResult:
    """Partial sums produced by one work item."""
    partials: Dict[int, Partial] = field(default_factory=dict)
    samples: int = 0
    dropped: int = 0


def build_context(
    block_map: BlockMap,
    frame: DepthFrame,
    normals: Optional[NormalMap],
    config: FusionConfig,
) -> FrameContext:
    """
    Transform the contributing pixels of a frame to world space and weight them.

    A pixel contributes iff its depth is valid and, when normals are given,
    its normal is valid.
    """
    valid = frame.valid_mask(config.depth_min, config.depth_max)
    if normals is not None:
        valid &= normals.valid
    pixel_ids = np.flatnonzero(valid.reshape(-1))

    pose = frame.pose
    rays = frame.pixel_rays().reshape(-1, 3)[pixel_ids]
    depth = frame.depth.reshape(-1)[pixel_ids]
    points_cam = rays * depth[:, None]
    points = pose.to_world(points_cam)
    view_dirs = pose.rotate_to_world(rays / np.linalg.norm(rays, axis=1, keepdims=True))

    weight = np.ones(pixel_ids.shape[0])
    if config.depth_weighting:
        weight *= depth_weight(depth)

    world_normals = None
    normals_z = None
    if normals is not None:
        cam_normals = normals.normals.reshape(-1, 3)[pixel_ids]
        normals_z = cam_normals[:, 2].copy()
        world_normals = pose.rotate_to_world(cam_normals)
        if config.angle_weighting:
            weight *= angle_weight(world_normals, view_dirs)

    if config.directional:
        channels = list(range(UNDIRECTED))
        dots = world_normals @ DIRECTION_VECTORS.T
        channel_weights = np.where(dots > config.direction_threshold, weight[:, None] * dots, 0.0)
    else:
        channels = [UNDIRECTED]
        channel_weights = weight[:, None].copy()
    channel_weights = np.clip(channel_weights, 0.0, config.max_weight)

    lookup = np.full(frame.depth.size, -1, dtype=np.int64)
    lookup[pixel_ids] = np.arange(pixel_ids.shape[0])

    return FrameContext(
        config=config,
        block_map=block_map,
        frame=frame,
        pixel_ids=pixel_ids,
        depth=depth,
        points=points,
        view_dirs=view_dirs,
        normals=world_normals,
        normals_camera_z=normals_z,
        camera_center=pose.position.copy(),
        channels=channels,
        channel_weights=channel_weights,
        pixel_lookup=lookup,
    )


def clip_to_depth_range(
    z0: np.ndarray,
    rate: np.ndarray,
    t0: np.ndarray,
    t1: np.ndarray,
    depth_min: float,
    depth_max: float,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Restrict [t0, t1] so that camera depth z0 + t * rate stays in (depth_min, depth_max).
    """
    with np.errstate(divide="ignore", invalid="ignore"):
        to_min = (depth_min - z0) / rate
        to_max = (depth_max - z0) / rate
    rising = rate > 0
    falling = rate < 0
    lo = np.where(rising, to_min, np.where(falling, to_max, -np.inf))
    hi = np.where(rising, to_max, np.where(falling, to_min, np.inf))
    return np.maximum(t0, lo), np.minimum(t1, hi)


def reduce_samples(flat: np.ndarray, weights: np.ndarray, values: np.ndarray) -> Partial:
    """Sum w*d and w per distinct flat voxel index."""
    unique, inverse = np.unique(flat, return_inverse=True)
    inverse = inverse.reshape(-1)
    size = unique.shape[0]
    return (
        unique,
        np.bincount(inverse, weights=weights * values, minlength=size),
        np.bincount(inverse, weights=weights, minlength=size),
    )


class FusionStrategy(ABC):
    """Abstract base class for the ways depth pixels are associated with voxels."""

    def __init__(self, config: FusionConfig):
        """
        Initialize the strategy with configuration.

        Args:
            config: FusionConfig containing all settings
        """
        self.config = config

    @property
    def requires_normals(self) -> bool:
        """Whether fuse_frame must be given a NormalMap."""
        return self.config.directional

    @abstractmethod
    def segments(self, ctx: FrameContext) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """
        Per-pixel truncation segments used for block allocation.

        Returns:
            Tuple of (origins (K, 3), directions (K, 3), t_min (K,), t_max (K,))
        """
        pass

    @abstractmethod
    def work_items(self, ctx: FrameContext) -> List[tuple]:
        """Fixed-size work items for the write pass, independent of thread count."""
        pass

    @abstractmethod
    def integrate(self, ctx: FrameContext, item: tuple) -> ChunkResult:
        """Compute partial sums for one work item. Must not mutate the volume."""
        pass

    def prepare(self, ctx: FrameContext) -> None:
        """Hook run after allocation and before the write pass."""
        pass

    def sample_offset(self, ctx: FrameContext) -> float:
        """Shift applied to segment origins so grid cells map to nearest lattice samples."""
        return 0.5 * ctx.block_map.voxel_size

    def allocation_blocks(self, ctx: FrameContext, start: int, stop: int) -> Dict[int, np.ndarray]:
        """Packed keys of blocks touched by segments of pixels [start, stop), per channel."""
        origins, dirs, t0, t1 = ctx.segments
        offset = self.sample_offset(ctx)
        rays, blocks = traverse_batch(
            origins[start:stop] + offset,
            dirs[start:stop],
            t0[start:stop],
            t1[start:stop],
            ctx.block_map.block_extent,
        )
        keys = pack_coords(blocks)
        touched: Dict[int, np.ndarray] = {}
        for column, channel in enumerate(ctx.channels):
            uses = ctx.channel_weights[start + rays, column] > 0
            if uses.any():
                touched[channel] = np.unique(keys[uses])
        return touched

    def pixel_chunks(self, ctx: FrameContext) -> List[tuple]:
        return [(start, min(start + PIXEL_CHUNK, ctx.count)) for start in range(0, ctx.count, PIXEL_CHUNK)]

    @staticmethod
    def blocks_from_keys(keys: np.ndarray) -> np.ndarray:
        return unpack_coords(keys)


def line_of_sight_segments(
    ctx: FrameContext,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Camera rays through each pixel over +-tau around the measured point."""
    tau = ctx.block_map.truncation
    origins = np.broadcast_to(ctx.camera_center, ctx.points.shape)
    ranges = np.linalg.norm(ctx.points - ctx.camera_center, axis=1)
    # camera depth gained per meter along the ray
    rate = ctx.depth / ranges
    t0, t1 = clip_to_depth_range(
        np.zeros_like(rate), rate, ranges - tau, ranges + tau,
        ctx.config.depth_min, ctx.config.depth_max,
    )
    return origins, ctx.view_dirs, t0, t1
