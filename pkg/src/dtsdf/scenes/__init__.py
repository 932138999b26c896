"""Synthetic scenes, depth rendering and camera trajectories."""

from .primitives import Box, Plane, Primitive, Scene, Slab, Sphere, bounded_slab, scene_sdf
from .renderer import Trajectory, circular_trajectory, look_at, render_depth, render_sequence
from .loader import (
    BUILTIN_SCENES,
    SceneDescription,
    TrajectorySettings,
    builtin_scene,
    load_scene,
    parse_scene,
    resolve_scene,
    sample_scene_sdf,
)

__all__ = [
    "Box",
    "Plane",
    "Primitive",
    "Scene",
    "Slab",
    "Sphere",
    "bounded_slab",
    "scene_sdf",
    "Trajectory",
    "circular_trajectory",
    "look_at",
    "render_depth",
    "render_sequence",
    "BUILTIN_SCENES",
    "SceneDescription",
    "TrajectorySettings",
    "builtin_scene",
    "load_scene",
    "parse_scene",
    "resolve_scene",
    "sample_scene_sdf",
]
