"""Depth frame fusion into the directional TSDF."""

from .frame import DepthFrame, Intrinsics, NormalMap, Pose
from .normals import bilateral_filter_depth, estimate_normals
from .traversal import traverse_batch, traverse_voxels
from .weighting import angle_weight, depth_weight, dropoff_weight, fusion_weight, point_to_plane
from .base import FusionStrategy
from .ray_casting import NormalRayCasting, RayCasting
from .voxel_projection import VoxelProjection
from .integrator import (
    FusionStats,
    accumulate,
    finalize,
    fuse_frame,
    get_fusion_strategy,
)
from .reconstruction import Reconstruction

__all__ = [
    "DepthFrame",
    "Intrinsics",
    "NormalMap",
    "Pose",
    "bilateral_filter_depth",
    "estimate_normals",
    "traverse_batch",
    "traverse_voxels",
    "angle_weight",
    "depth_weight",
    "dropoff_weight",
    "fusion_weight",
    "point_to_plane",
    "FusionStrategy",
    "NormalRayCasting",
    "RayCasting",
    "VoxelProjection",
    "FusionStats",
    "accumulate",
    "finalize",
    "fuse_frame",
    "get_fusion_strategy",
    "Reconstruction",
]
