"""
Voxel projection fusion (VP).

Every voxel of an allocated array is projected onto the image and updated
from its nearest pixel, so each (voxel, channel) changes at most once per
frame.
"""

from typing import List, Tuple

import numpy as np

from ..config import DistanceMetric
from .base import VOXEL_CHUNK, ChunkResult, FrameContext, FusionStrategy, line_of_sight_segments
from .weighting import point_to_plane


class VoxelProjection(FusionStrategy):
    """Projective TSDF update over allocated voxels."""

    @property
    def requires_normals(self) -> bool:
        return (
            self.config.directional
            or self.config.distance_metric is DistanceMetric.POINT_TO_PLANE
        )

    def segments(self, ctx: FrameContext) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        return line_of_sight_segments(ctx)

    def prepare(self, ctx: FrameContext) -> None:
        for channel in ctx.channels:
            ctx.voxels[channel] = ctx.block_map.allocated_voxels(channel)

    def work_items(self, ctx: FrameContext) -> List[tuple]:
        items = []
        for channel in ctx.channels:
            total = ctx.voxels[channel][1].shape[0]
            items.extend(
                (channel, start, min(start + VOXEL_CHUNK, total))
                for start in range(0, total, VOXEL_CHUNK)
            )
        return items

    def integrate(self, ctx: FrameContext, item: tuple) -> ChunkResult:
        channel, start, stop = item
        cells, flats = ctx.voxels[channel]
        cells = cells[start:stop]
        flats = flats[start:stop]
        column = ctx.channels.index(channel)
        frame = ctx.frame
        intr = frame.intrinsics
        tau = ctx.block_map.truncation

        samples = cells * ctx.block_map.voxel_size
        cam = frame.pose.to_camera(samples)
        z = cam[:, 2]
        front = z > 0
        safe_z = np.where(front, z, 1.0)
        u = np.floor(intr.f * cam[:, 0] / safe_z + intr.cx + 0.5).astype(np.int64)
        v = np.floor(intr.f * cam[:, 1] / safe_z + intr.cy + 0.5).astype(np.int64)
        visible = front & (u >= 0) & (u < frame.width) & (v >= 0) & (v < frame.height)

        rows = np.full(z.shape[0], -1, dtype=np.int64)
        rows[visible] = ctx.pixel_lookup[v[visible] * frame.width + u[visible]]
        hit = rows >= 0

        result = ChunkResult()
        if not hit.any():
            return result

        rows = rows[hit]
        if self.config.distance_metric is DistanceMetric.POINT_TO_PLANE:
            d = point_to_plane(ctx.points[rows], ctx.inward_normals[rows], samples[hit])
        else:
            d = ctx.depth[rows] - z[hit]
        w = ctx.channel_weights[rows, column]
        use = (np.abs(d) <= tau) & (w > 0)
        result.samples = int(use.sum())
        if use.any():
            result.partials[channel] = (flats[hit][use], w[use] * d[use], w[use])
        return result
