"""
Depth rendering of analytic scenes and camera trajectories.
"""

import logging
import math
from typing import List, Optional, Sequence, Union

import numpy as np

from ..errors import SceneError
from ..fusion.frame import DepthFrame, Intrinsics, Pose, pixel_rays
from .primitives import Scene


logger = logging.getLogger(__name__)

Trajectory = List[Pose]

DEFAULT_RADIUS = 2.0
WORLD_UP = np.array([0.0, 0.0, 1.0])


def look_at(position: Sequence[float], target: Sequence[float], up: Sequence[float] = WORLD_UP) -> Pose:
    """
    World-from-camera pose at ``position`` with the optical axis through ``target``.

    Raises:
        SceneError: If the viewing direction is parallel to ``up``
    """
    position = np.asarray(position, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - position
    norm = np.linalg.norm(forward)
    if norm == 0:
        raise SceneError("Camera position coincides with its target")
    forward /= norm
    right = np.cross(forward, np.asarray(up, dtype=np.float64))
    if np.linalg.norm(right) < 1e-12:
        raise SceneError("Viewing direction is parallel to the up vector")
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    return Pose(np.stack([right, down, forward], axis=1), position)


def circular_trajectory(
    center: Sequence[float] = (0.0, 0.0, 0.0),
    radius: float = DEFAULT_RADIUS,
    n_frames: int = 60,
    height: float = 0.0,
) -> Trajectory:
    """
    Poses evenly spaced on a horizontal circle, all looking at ``center``.

    Frame k sits at azimuth 2 pi k / n_frames, ``height`` above the center.

    Raises:
        SceneError: If n_frames < 1 or radius <= 0
    """
    if n_frames < 1:
        raise SceneError(f"n_frames must be at least 1, got: {n_frames}")
    if not radius > 0:
        raise SceneError(f"radius must be positive, got: {radius}")
    center = np.asarray(center, dtype=np.float64)
    poses = []
    for k in range(n_frames):
        azimuth = 2.0 * math.pi * k / n_frames
        position = center + np.array(
            [radius * math.cos(azimuth), radius * math.sin(azimuth), height]
        )
        poses.append(look_at(position, center))
    return poses


def render_depth(
    scene: Scene,
    pose: Pose,
    intrinsics: Intrinsics,
    width: int,
    height: int,
    noise_sigma: float = 0.0,
    rng: Optional[Union[int, np.random.Generator]] = None,
    timestamp: float = 0.0,
) -> DepthFrame:
    """
    Ray-trace a z-depth image of a scene.

    Args:
        scene: Scene to render
        pose: World-from-camera pose
        intrinsics: Pinhole intrinsics
        width, height: Image size in pixels
        noise_sigma: sigma_0 of additive Gaussian noise sigma_0 * z^2; 0 is noiseless
        rng: Seed or generator for the noise
        timestamp: Timestamp stored on the frame

    Returns:
        DepthFrame with NaN for pixels that hit nothing
    """
    rays = pixel_rays(intrinsics, width, height).reshape(-1, 3)
    directions = pose.rotate_to_world(rays)
    origins = np.broadcast_to(pose.translation, directions.shape)

    # camera rays have unit z, so the hit parameter is the z-depth
    depth = scene.first_hit(origins, directions)
    depth = np.where(np.isfinite(depth), depth, np.nan)

    if noise_sigma > 0:
        generator = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        hit = np.isfinite(depth)
        depth[hit] += generator.normal(0.0, 1.0, int(hit.sum())) * noise_sigma * depth[hit] ** 2

    return DepthFrame(depth.reshape(height, width), intrinsics, pose, timestamp)


def render_sequence(
    scene: Scene,
    trajectory: Trajectory,
    intrinsics: Intrinsics,
    width: int,
    height: int,
    noise_sigma: float = 0.0,
    seed: Optional[int] = None,
    frame_rate: float = 30.0,
) -> List[DepthFrame]:
    """Render every pose of a trajectory with one seeded noise stream."""
    rng = np.random.default_rng(seed)
    frames = [
        render_depth(scene, pose, intrinsics, width, height, noise_sigma, rng, k / frame_rate)
        for k, pose in enumerate(trajectory)
    ]
    logger.debug(f"Rendered {len(frames)} frames of scene '{scene.name}'")
    return frames
