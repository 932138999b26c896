"""
Reconstruction session: a volume, its configuration and the frames fused so far.
"""

import logging
import time
from typing import Iterable, List, Optional

from ..config import FusionConfig
from ..meshing import MeshingStats, TriangleMesh, extract_mesh
from ..volume.block_map import BlockMap, voxel_array_stats
from .frame import DepthFrame, NormalMap
from .integrator import FusionStats, default_threads, fuse_frame, get_fusion_strategy
from .normals import estimate_normals


logger = logging.getLogger(__name__)


class Reconstruction:
    """
    Fuses posed depth frames into one volume and extracts meshes from it.

    Example:
        recon = Reconstruction(FusionConfig.from_mode("dir-rcn-p2pl"))
        for frame in frames:
            recon.integrate(frame)
        mesh = recon.extract_mesh()
    """

    def __init__(
        self,
        config: Optional[FusionConfig] = None,
        threads: Optional[int] = None,
        block_map: Optional[BlockMap] = None,
    ):
        self.config = config or FusionConfig()
        self.threads = threads or default_threads()
        self.block_map = block_map or BlockMap(
            self.config.voxel_size,
            self.config.truncation_factor,
            self.config.block_size,
            self.config.max_blocks,
        )
        self.strategy = get_fusion_strategy(self.config)
        self.frame_stats: List[FusionStats] = []
        self.mesh_stats: List[MeshingStats] = []
        self.recycled_blocks = 0

    @property
    def frames_fused(self) -> int:
        return len(self.frame_stats)

    def integrate(self, frame: DepthFrame, normals: Optional[NormalMap] = None) -> FusionStats:
        """
        Fuse one frame, estimating normals when the mode needs them.

        Args:
            frame: Posed depth frame
            normals: Precomputed camera-frame normals

        Returns:
            FusionStats of this frame, with normal estimation in preprocess_s
        """
        t = time.perf_counter()
        if normals is None and self.strategy.requires_normals:
            normals = estimate_normals(frame, self.config)
        normal_s = time.perf_counter() - t

        stats = fuse_frame(
            self.block_map, frame, normals, self.config, self.threads, self.strategy
        )
        stats.preprocess_s += normal_s

        if self.config.recycle_radius is not None:
            self.recycled_blocks += self.block_map.recycle(
                frame.pose.position, self.config.recycle_radius
            )
        self.frame_stats.append(stats)
        return stats

    def integrate_all(self, frames: Iterable[DepthFrame]) -> List[FusionStats]:
        """Fuse a sequence of frames in order."""
        return [self.integrate(frame) for frame in frames]

    def extract_mesh(self) -> TriangleMesh:
        """Mesh the current volume with the extractor matching the configuration."""
        stats = MeshingStats()
        mesh = extract_mesh(self.block_map, self.config, self.threads, stats)
        self.mesh_stats.append(stats)
        logger.info(
            f"Extracted {mesh.triangle_count} triangles after {self.frames_fused} frames"
        )
        return mesh

    def summary(self) -> dict:
        """Totals over all fused frames plus allocation statistics."""
        blocks, arrays_per_block = voxel_array_stats(self.block_map)
        totals = {
            "frames": self.frames_fused,
            "blocks": blocks,
            "arrays_per_block": arrays_per_block,
            "recycled_blocks": self.recycled_blocks,
        }
        for key in ("pixels_processed", "voxels_touched", "blocks_allocated", "samples_dropped"):
            totals[key] = sum(getattr(s, key) for s in self.frame_stats)
        for key in ("preprocess_s", "allocate_s", "fuse_s", "finalize_s", "total_s"):
            totals[key] = sum(getattr(s, key) for s in self.frame_stats)
        return totals
