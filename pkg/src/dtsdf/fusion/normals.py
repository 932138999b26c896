"""
Normal estimation on depth images.

Normals come from differences of back-projected neighbor points, computed on
a bilaterally filtered copy of the depth image. Next to creases and small
depth steps the one-sided difference on the smoother side replaces the
central one. The depth used for signed distances is never filtered.
"""

import logging
from typing import Optional

import numpy as np

from ..config import FusionConfig
from .frame import DepthFrame, NormalMap, valid_depth_mask


logger = logging.getLogger(__name__)


MIN_CROSS_NORM = 1e-12

# A side is smooth enough to replace the central difference when its second
# difference is this many times smaller than the other side's
CREASE_RATIO = 2.0
# Second differences below this fraction of the depth count as flat
CURVATURE_FLOOR = 1e-4

NEIGHBOR_PAD = 2


def _shift(padded: np.ndarray, pad: int, dy: int, dx: int, shape) -> np.ndarray:
    """Window of a padded image displaced by (dy, dx)."""
    h, w = shape
    return padded[pad + dy : pad + dy + h, pad + dx : pad + dx + w]


def _axis_difference(
    points: np.ndarray,
    z: np.ndarray,
    valid: np.ndarray,
    limit: np.ndarray,
    dy: int,
    dx: int,
) -> np.ndarray:
    """
    Tangent along one image axis, taken from the smoother side at creases.

    The central difference is used unless the second difference on one side
    is CREASE_RATIO times smaller than on the other, as happens next to a
    crease or a small depth step. Then the one-sided difference away from it
    is used. Sides reaching invalid pixels or depth jumps never win over a
    clean side.

    Args:
        points: (H + 4, W + 4, 3) back-projected points, padded by two
        z: (H + 4, W + 4) depth, padded by two
        valid: (H + 4, W + 4) validity, padded by two
        limit: (H, W) allowed neighbor depth jump
        dy, dx: Unit step along the axis

    Returns:
        (H, W, 3) tangent vectors (scale differs between pixels)
    """
    shape = limit.shape
    pad = NEIGHBOR_PAD

    def at(image, k):
        return _shift(image, pad, k * dy, k * dx, shape)

    center = at(points, 0)
    backward = center - at(points, -1)
    forward = at(points, 1) - center

    def side_curvature(near: int, far: int) -> np.ndarray:
        bend = np.linalg.norm(at(points, far) - 2.0 * at(points, near) + center, axis=2)
        clean = at(valid, far) & (np.abs(at(z, far) - at(z, near)) <= limit)
        return np.where(clean, bend, np.inf)

    bend_back = side_curvature(-1, -2)
    bend_fwd = side_curvature(1, 2)
    floor = CURVATURE_FLOOR * at(z, 0)
    use_back = (bend_back * CREASE_RATIO < bend_fwd) & (bend_fwd > floor)
    use_fwd = (bend_fwd * CREASE_RATIO < bend_back) & (bend_back > floor)

    tangent = 0.5 * (forward + backward)
    tangent = np.where(use_back[..., None], backward, tangent)
    return np.where(use_fwd[..., None], forward, tangent)


def bilateral_filter_depth(
    depth: np.ndarray,
    radius: int = 2,
    sigma_spatial: float = 2.0,
    sigma_range: float = 0.05,
    valid: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    Edge-preserving smoothing of a depth image.

    Invalid pixels neither receive nor contribute values.

    Args:
        depth: (H, W) depth in meters, 0 or NaN for invalid
        radius: Window radius in pixels
        sigma_spatial: Spatial Gaussian sigma in pixels
        sigma_range: Range Gaussian sigma in meters
        valid: Optional precomputed validity mask

    Returns:
        Filtered copy of ``depth``; invalid pixels keep their input value
    """
    depth = np.asarray(depth, dtype=np.float64)
    if valid is None:
        valid = np.isfinite(depth) & (depth > 0)
    if radius <= 0:
        return depth.copy()

    clean = np.where(valid, depth, 0.0)
    padded = np.pad(clean, radius, mode="constant")
    padded_valid = np.pad(valid, radius, mode="constant", constant_values=False)

    numerator = np.zeros_like(clean)
    denominator = np.zeros_like(clean)
    for dy in range(-radius, radius + 1):
        for dx in range(-radius, radius + 1):
            neighbor = _shift(padded, radius, dy, dx, depth.shape)
            neighbor_valid = _shift(padded_valid, radius, dy, dx, depth.shape)
            spatial = np.exp(-(dx * dx + dy * dy) / (2.0 * sigma_spatial ** 2))
            similarity = np.exp(-((neighbor - clean) ** 2) / (2.0 * sigma_range ** 2))
            w = np.where(neighbor_valid, spatial * similarity, 0.0)
            numerator += w * neighbor
            denominator += w

    filtered = depth.copy()
    filtered[valid] = numerator[valid] / denominator[valid]
    return filtered


def estimate_normals(frame: DepthFrame, config: Optional[FusionConfig] = None) -> NormalMap:
    """
    Per-pixel camera-frame normals facing the camera.

    A normal is invalid when its pixel or any of the four direct neighbors
    has invalid depth, or when a neighbor's depth jumps by more than
    ``max_depth_jump_ratio`` times the center depth.

    Args:
        frame: Depth frame (pose not needed)
        config: Filter and range parameters; defaults when None

    Returns:
        NormalMap with unit normals where valid and zeros elsewhere
    """
    config = config or FusionConfig()
    valid = frame.valid_mask(config.depth_min, config.depth_max)
    filtered = bilateral_filter_depth(
        frame.depth,
        config.bilateral_radius,
        config.bilateral_sigma_spatial,
        config.bilateral_sigma_range,
        valid=valid,
    )
    valid &= valid_depth_mask(filtered, config.depth_min, config.depth_max)
    z = np.where(valid, filtered, 0.0)
    points = frame.back_project(z)

    pad = NEIGHBOR_PAD
    padded_points = np.pad(points, ((pad, pad), (pad, pad), (0, 0)), mode="constant")
    padded_z = np.pad(z, pad, mode="constant")
    padded_valid = np.pad(valid, pad, mode="constant", constant_values=False)

    support = valid.copy()
    limit = config.max_depth_jump_ratio * z
    for dy, dx in ((0, -1), (0, 1), (-1, 0), (1, 0)):
        support &= _shift(padded_valid, pad, dy, dx, z.shape)
        support &= np.abs(_shift(padded_z, pad, dy, dx, z.shape) - z) <= limit

    ddx = _axis_difference(padded_points, padded_z, padded_valid, limit, 0, 1)
    ddy = _axis_difference(padded_points, padded_z, padded_valid, limit, 1, 0)
    normals = np.cross(ddx, ddy)

    # orient toward the camera
    facing = np.einsum("ijk,ijk->ij", normals, points)
    normals[facing > 0] *= -1.0

    norm = np.linalg.norm(normals, axis=2)
    support &= norm > MIN_CROSS_NORM
    normals = np.where(support[..., None], normals / np.where(support, norm, 1.0)[..., None], 0.0)

    logger.debug(f"Estimated {int(support.sum())} valid normals of {support.size} pixels")
    return NormalMap(normals, support)
