"""
Ray casting fusion.

RayCasting walks the line of sight through every pixel over the +-tau window
around the measured surface point. NormalRayCasting walks along the estimated
normal through the surface point instead, in both directions.

Both write every voxel of a segment, so samples behind the surface fade out
towards -tau when weight_dropoff is set.
"""

from typing import List, Tuple

import numpy as np

from ..config import DistanceMetric
from .base import (
    ChunkResult,
    FrameContext,
    FusionStrategy,
    clip_to_depth_range,
    line_of_sight_segments,
    reduce_samples,
)
from .traversal import traverse_batch
from .weighting import dropoff_weight, point_to_plane


class RayCasting(FusionStrategy):
    """Line-of-sight ray casting (RC)."""

    @property
    def requires_normals(self) -> bool:
        return (
            self.config.directional
            or self.config.distance_metric is DistanceMetric.POINT_TO_PLANE
        )

    def segments(self, ctx: FrameContext) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        return line_of_sight_segments(ctx)

    def distances(self, ctx: FrameContext, rows: np.ndarray, samples: np.ndarray) -> np.ndarray:
        if self.config.distance_metric is DistanceMetric.POINT_TO_PLANE:
            return point_to_plane(ctx.points[rows], ctx.inward_normals[rows], samples)
        return point_to_plane(ctx.points[rows], ctx.view_dirs[rows], samples)

    def work_items(self, ctx: FrameContext) -> List[tuple]:
        return self.pixel_chunks(ctx)

    def integrate(self, ctx: FrameContext, item: tuple) -> ChunkResult:
        start, stop = item
        origins, dirs, t0, t1 = ctx.segments
        vs = ctx.block_map.voxel_size
        tau = ctx.block_map.truncation

        rays, cells = traverse_batch(
            origins[start:stop] + self.sample_offset(ctx),
            dirs[start:stop],
            t0[start:stop],
            t1[start:stop],
            vs,
        )
        rows = rays + start
        d = self.distances(ctx, rows, cells * vs)
        in_band = np.abs(d) <= tau
        falloff = dropoff_weight(d, tau, vs) if self.config.weight_dropoff else 1.0

        result = ChunkResult()
        for column, channel in enumerate(ctx.channels):
            w = ctx.channel_weights[rows, column] * falloff
            use = in_band & (w > 0)
            if not use.any():
                continue
            flat = ctx.block_map.lookup(cells[use], channel)
            present = flat >= 0
            result.samples += int(use.sum())
            result.dropped += int((~present).sum())
            if present.any():
                result.partials[channel] = reduce_samples(
                    flat[present], w[use][present], d[use][present]
                )
        return result


class NormalRayCasting(RayCasting):
    """Ray casting along the surface normal (RCN); distances are point-to-plane."""

    @property
    def requires_normals(self) -> bool:
        return True

    def segments(self, ctx: FrameContext) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        tau = ctx.block_map.truncation
        count = ctx.count
        t0, t1 = clip_to_depth_range(
            ctx.depth, ctx.normals_camera_z, np.full(count, -tau), np.full(count, tau),
            self.config.depth_min, self.config.depth_max,
        )
        return ctx.points, ctx.normals, t0, t1

    def distances(self, ctx: FrameContext, rows: np.ndarray, samples: np.ndarray) -> np.ndarray:
        return point_to_plane(ctx.points[rows], ctx.inward_normals[rows], samples)
