"""Depth images, trajectories, datasets, meshes and config files on disk."""

from ..config import load_config, save_config
from .depth import DEFAULT_DEPTH_SCALE, depth_to_raw, load_depth_image, read_raw_depth, save_depth_image
from .trajectory import StampedPose, load_trajectory, save_trajectory
from .mesh_io import MESH_FORMATS, export_mesh, load_mesh, scalar_colormap
from .dataset import DatasetSource, associate, load_dataset, load_intrinsics, save_dataset

__all__ = [
    "load_config",
    "save_config",
    "DEFAULT_DEPTH_SCALE",
    "depth_to_raw",
    "load_depth_image",
    "read_raw_depth",
    "save_depth_image",
    "StampedPose",
    "load_trajectory",
    "save_trajectory",
    "MESH_FORMATS",
    "export_mesh",
    "load_mesh",
    "scalar_colormap",
    "DatasetSource",
    "associate",
    "load_dataset",
    "load_intrinsics",
    "save_dataset",
]
