"""
Two-phase voxel update and the per-frame fusion driver.

Writes never touch sdf/weight directly: every sample is first summed into
the accumulation slots (S_d += w d, S_w += w) and a single finalize step per
touched voxel folds the sums into the weighted moving average. Workers
produce partial sums for fixed-size chunks, and the partials are merged in
chunk order, so results do not depend on the number of threads.
"""

import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional

import numpy as np

from ..config import FusionConfig, FusionMode
from ..errors import ConfigError
from ..volume.block_map import BlockMap, ChannelPool, Voxel, unpack_coords
from .base import ChunkResult, FusionStrategy, build_context
from .frame import DepthFrame, NormalMap
from .ray_casting import NormalRayCasting, RayCasting
from .voxel_projection import VoxelProjection


logger = logging.getLogger(__name__)


@dataclass
class FusionStats:
    """Counters and per-phase wall-clock seconds for one fused frame."""
    pixels_processed: int = 0
    voxels_touched: int = 0
    blocks_allocated: int = 0
    samples_dropped: int = 0
    preprocess_s: float = 0.0
    allocate_s: float = 0.0
    fuse_s: float = 0.0
    finalize_s: float = 0.0

    @property
    def total_s(self) -> float:
        return self.preprocess_s + self.allocate_s + self.fuse_s + self.finalize_s

    def as_dict(self) -> Dict[str, float]:
        values = asdict(self)
        values["total_s"] = self.total_s
        return values


def accumulate(voxel: Voxel, d: float, w: float) -> None:
    """
    Add one weighted sample to a voxel's accumulation slots.

    Safe to call from several threads; the channel pool's lock serializes
    the update.
    """
    with voxel.lock:
        voxel.acc_sdf = voxel.acc_sdf + w * d
        voxel.acc_weight = voxel.acc_weight + w


def finalize(voxel: Voxel, truncation: float, max_weight: float = 255.0) -> None:
    """
    Fold accumulated sums into sdf and weight and reset the slots.

    D = (W D + S_d) / (W + S_w), W = min(W + S_w, max_weight), D clamped to
    [-truncation, truncation]. No-op when nothing was accumulated.
    """
    s_w = voxel.acc_weight
    if s_w <= 0.0:
        voxel.acc_sdf = 0.0
        voxel.acc_weight = 0.0
        return
    w = voxel.weight
    total = w + s_w
    voxel.sdf = float(np.clip((w * voxel.sdf + voxel.acc_sdf) / total, -truncation, truncation))
    voxel.weight = min(total, max_weight)
    voxel.acc_sdf = 0.0
    voxel.acc_weight = 0.0


def finalize_voxels(
    pool: ChannelPool, flat: np.ndarray, truncation: float, max_weight: float
) -> int:
    """
    Vectorized finalize over flat pool indices.

    Returns:
        Number of voxels that received weight
    """
    sdf = pool.flat("sdf")
    weight = pool.flat("weight")
    acc_sdf = pool.flat("acc_sdf")
    acc_weight = pool.flat("acc_weight")

    s_w = acc_weight[flat]
    changed = flat[s_w > 0]
    s_w = acc_weight[changed]
    w = weight[changed]
    total = w + s_w
    sdf[changed] = np.clip((w * sdf[changed] + acc_sdf[changed]) / total, -truncation, truncation)
    weight[changed] = np.minimum(total, max_weight)
    acc_sdf[flat] = 0.0
    acc_weight[flat] = 0.0
    return int(changed.shape[0])


def get_fusion_strategy(config: FusionConfig) -> FusionStrategy:
    """
    Get the fusion strategy for the configured mode.

    Args:
        config: Fusion configuration

    Returns:
        Strategy instance

    Raises:
        ConfigError: If the mode is unknown
    """
    strategy_map = {
        FusionMode.VP: VoxelProjection,
        FusionMode.RC: RayCasting,
        FusionMode.RCN: NormalRayCasting,
    }
    if config.mode not in strategy_map:
        raise ConfigError(f"Unknown fusion mode: {config.mode}")
    return strategy_map[config.mode](config)


def default_threads() -> int:
    return os.cpu_count() or 1


def _run(executor: Optional[ThreadPoolExecutor], fn, items: List) -> List:
    if executor is None:
        return [fn(item) for item in items]
    return list(executor.map(fn, items))


def fuse_frame(
    block_map: BlockMap,
    frame: DepthFrame,
    normals: Optional[NormalMap],
    config: FusionConfig,
    threads: Optional[int] = None,
    strategy: Optional[FusionStrategy] = None,
) -> FusionStats:
    """
    Integrate one posed depth frame into the volume.

    Phases: preprocess (world-space pixel data and weights), allocate
    (blocks and direction arrays along each pixel's truncation segment),
    fuse (partial sums per chunk, merged into the accumulation slots) and
    finalize (moving-average update of every touched voxel).

    Args:
        block_map: Target volume
        frame: Depth frame with pose
        normals: Camera-frame normals; required for point-to-plane, RCN
            and directional fusion
        config: Fusion configuration
        threads: Worker threads; None uses the CPU count
        strategy: Override of the strategy chosen from ``config``

    Returns:
        FusionStats for this frame

    Raises:
        ConfigError: If normals are required but missing
        InputError: If the frame or its pose is invalid
        VolumeCapacityError: If allocation exceeds the block limit
    """
    stats = FusionStats()
    strategy = strategy or get_fusion_strategy(config)
    if normals is None and strategy.requires_normals:
        raise ConfigError(f"Fusion mode {config.mode_label} requires a normal map")
    threads = threads or default_threads()

    t = time.perf_counter()
    frame.validate()
    if normals is not None and normals.shape != frame.shape:
        raise ConfigError(f"Normal map shape {normals.shape} does not match frame {frame.shape}")
    ctx = build_context(block_map, frame, normals, config)
    ctx.segments = strategy.segments(ctx)
    stats.pixels_processed = ctx.count
    stats.preprocess_s = time.perf_counter() - t

    executor = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        t = time.perf_counter()
        chunks = strategy.pixel_chunks(ctx)
        touched = _run(executor, lambda c: strategy.allocation_blocks(ctx, *c), chunks)
        before = len(block_map)
        for channel in ctx.channels:
            keys = [part[channel] for part in touched if channel in part]
            if keys:
                for coord in unpack_coords(np.unique(np.concatenate(keys))):
                    block_map.allocate(coord, (channel,))
        stats.blocks_allocated = len(block_map) - before
        stats.allocate_s = time.perf_counter() - t

        t = time.perf_counter()
        strategy.prepare(ctx)
        results: List[ChunkResult] = _run(
            executor, lambda item: strategy.integrate(ctx, item), strategy.work_items(ctx)
        )
        merged: Dict[int, List[np.ndarray]] = {}
        for result in results:
            stats.samples_dropped += result.dropped
            for channel, (flat, sum_wd, sum_w) in result.partials.items():
                pool = block_map.pool(channel)
                np.add.at(pool.flat("acc_sdf"), flat, sum_wd)
                np.add.at(pool.flat("acc_weight"), flat, sum_w)
                merged.setdefault(channel, []).append(flat)
        stats.fuse_s = time.perf_counter() - t
    finally:
        if executor is not None:
            executor.shutdown()

    t = time.perf_counter()
    for channel, flats in merged.items():
        stats.voxels_touched += finalize_voxels(
            block_map.pool(channel),
            np.unique(np.concatenate(flats)),
            block_map.truncation,
            config.max_weight,
        )
    stats.finalize_s = time.perf_counter() - t

    if stats.samples_dropped:
        logger.debug(f"Dropped {stats.samples_dropped} samples outside allocated blocks")
    logger.debug(
        f"Fused frame: {stats.pixels_processed} px, {stats.voxels_touched} voxels, "
        f"{stats.blocks_allocated} new blocks, {1000 * stats.total_s:.1f} ms"
    )
    return stats
