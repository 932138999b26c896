"""
Signed distances and measurement weights used by fusion.
"""

from typing import Optional

import numpy as np

from ..volume.directions import Direction, direction_weight


# w_depth normalization depth in meters
REFERENCE_DEPTH = 1.0
DEFAULT_MAX_WEIGHT = 255.0


def point_to_plane(p: np.ndarray, n_p: np.ndarray, x: np.ndarray) -> np.ndarray:
    """
    Signed distance (p - x) . n_p from query point(s) x to the plane through p.

    Broadcasts over leading dimensions.
    """
    p = np.asarray(p, dtype=np.float64)
    n_p = np.asarray(n_p, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    return np.sum((p - x) * n_p, axis=-1)


def depth_weight(depth: np.ndarray) -> np.ndarray:
    """Inverse-square depth weight min(1, (1 m / z)^2)."""
    depth = np.asarray(depth, dtype=np.float64)
    return np.minimum(1.0, (REFERENCE_DEPTH / depth) ** 2)


def angle_weight(normals: np.ndarray, view_dirs: np.ndarray) -> np.ndarray:
    """Observation angle weight max(0, <n, -view_dir>)."""
    return np.maximum(0.0, -np.sum(np.asarray(normals) * np.asarray(view_dirs), axis=-1))


def dropoff_weight(d: np.ndarray, truncation: float, epsilon: float) -> np.ndarray:
    """
    Weight factor for samples behind the surface.

    1 for d >= -epsilon, falling linearly to 0 at d = -truncation.

    Args:
        d: Signed distances, positive in front of the surface
        truncation: Truncation distance tau
        epsilon: Depth behind the surface that keeps full weight

    Returns:
        Factors in [0, 1], same shape as ``d``
    """
    d = np.asarray(d, dtype=np.float64)
    if epsilon >= truncation:
        return np.ones_like(d)
    fade = (truncation + d) / (truncation - epsilon)
    return np.where(d < -epsilon, np.clip(fade, 0.0, 1.0), 1.0)


def fusion_weight(
    depth: float,
    n: np.ndarray,
    view_dir: np.ndarray,
    direction: Optional[Direction] = None,
    max_weight: float = DEFAULT_MAX_WEIGHT,
    use_depth: bool = True,
    use_angle: bool = True,
) -> float:
    """
    Combined measurement weight w_depth * w_angle * w_D.

    Args:
        depth: Measured depth in meters
        n: Unit surface normal (outward, facing the camera)
        view_dir: Unit direction from the camera toward the surface
        direction: Direction sector in directional mode; None for undirected
        max_weight: Upper clamp
        use_depth: Apply the depth factor
        use_angle: Apply the angle factor

    Returns:
        Weight clamped to [0, max_weight]
    """
    w = 1.0
    if use_depth:
        w *= float(depth_weight(depth))
    if use_angle:
        w *= float(angle_weight(n, view_dir))
    if direction is not None:
        w *= direction_weight(n, direction)
    return float(np.clip(w, 0.0, max_weight))
