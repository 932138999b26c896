"""
Camera model and posed depth frames.

Camera coordinates follow the usual depth-sensor convention: x right,
y down, z along the optical axis. A pixel (u, v) with depth z back-projects
to z * ((u - cx) / f, (v - cy) / f, 1).
"""

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from ..errors import InputError


ORTHONORMAL_TOLERANCE = 1e-6


@dataclass(frozen=True)
class Intrinsics:
    """Pinhole intrinsics (f, cx, cy) in pixels."""
    f: float
    cx: float
    cy: float

    @classmethod
    def kinect(cls) -> "Intrinsics":
        """Standard Kinect model for 640x480 frames."""
        return cls(525.0, 319.5, 239.5)

    def scaled(self, factor: float) -> "Intrinsics":
        """Intrinsics for an image resampled by ``factor`` (pixel centers kept)."""
        return Intrinsics(
            self.f * factor,
            (self.cx + 0.5) * factor - 0.5,
            (self.cy + 0.5) * factor - 0.5,
        )

    @classmethod
    def for_resolution(cls, width: int, height: int) -> "Intrinsics":
        """Kinect intrinsics scaled to ``width``; 320x240 gives (262.5, 159.5, 119.5)."""
        if width * 3 != height * 4:
            raise InputError(f"Resolution {width}x{height} is not 4:3")
        return cls.kinect().scaled(width / 640.0)


@dataclass
class Pose:
    """Rigid world-from-camera transform."""
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        self.translation = np.asarray(self.translation, dtype=np.float64).reshape(3)

    @classmethod
    def identity(cls) -> "Pose":
        return cls()

    @classmethod
    def from_matrix(cls, matrix: np.ndarray) -> "Pose":
        """Build a pose from a 4x4 homogeneous matrix."""
        matrix = np.asarray(matrix, dtype=np.float64)
        return cls(matrix[:3, :3], matrix[:3, 3])

    @property
    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    @property
    def position(self) -> np.ndarray:
        """Camera center in world coordinates."""
        return self.translation

    def is_orthonormal(self, tolerance: float = ORTHONORMAL_TOLERANCE) -> bool:
        r = self.rotation
        return bool(
            np.all(np.isfinite(r))
            and np.allclose(r.T @ r, np.eye(3), atol=tolerance)
            and np.linalg.det(r) > 0
        )

    def validate(self) -> None:
        """Raise InputError unless the rotation is a proper rotation within 1e-6."""
        if not self.is_orthonormal() or not np.all(np.isfinite(self.translation)):
            raise InputError("Pose rotation is not orthonormal")

    def to_world(self, points: np.ndarray) -> np.ndarray:
        """Transform camera-frame points (..., 3) to world coordinates."""
        return points @ self.rotation.T + self.translation

    def to_camera(self, points: np.ndarray) -> np.ndarray:
        """Transform world points (..., 3) into the camera frame."""
        return (points - self.translation) @ self.rotation

    def rotate_to_world(self, vectors: np.ndarray) -> np.ndarray:
        return vectors @ self.rotation.T


@dataclass
class DepthFrame:
    """Depth image in meters with intrinsics and an optional pose."""
    depth: np.ndarray
    intrinsics: Intrinsics
    pose: Optional[Pose] = None
    timestamp: float = 0.0

    def __post_init__(self):
        self.depth = np.asarray(self.depth, dtype=np.float64)

    @property
    def width(self) -> int:
        return self.depth.shape[1]

    @property
    def height(self) -> int:
        return self.depth.shape[0]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.depth.shape

    def validate(self) -> None:
        """
        Check image shape and pose.

        Raises:
            InputError: If the depth image is not 2-D or the pose is missing/invalid
        """
        if self.depth.ndim != 2 or self.depth.size == 0:
            raise InputError(f"Depth image must be a non-empty 2-D array, got {self.depth.shape}")
        if self.pose is None:
            raise InputError("Depth frame has no pose")
        self.pose.validate()

    def valid_mask(self, depth_min: float = 0.1, depth_max: float = 10.0) -> np.ndarray:
        """Pixels with finite depth inside (depth_min, depth_max)."""
        return valid_depth_mask(self.depth, depth_min, depth_max)

    def pixel_rays(self) -> np.ndarray:
        """Camera-frame rays with unit z for every pixel, shape (H, W, 3)."""
        return pixel_rays(self.intrinsics, self.width, self.height)

    def back_project(self, depth: Optional[np.ndarray] = None) -> np.ndarray:
        """Camera-frame points for every pixel, shape (H, W, 3); invalid depth gives NaN or 0."""
        depth = self.depth if depth is None else depth
        return self.pixel_rays() * depth[..., None]


@dataclass
class NormalMap:
    """Per-pixel unit normals in camera coordinates plus a validity mask."""
    normals: np.ndarray
    valid: np.ndarray

    @property
    def shape(self) -> Tuple[int, int]:
        return self.valid.shape


def valid_depth_mask(depth: np.ndarray, depth_min: float, depth_max: float) -> np.ndarray:
    """Finite depth strictly inside (depth_min, depth_max)."""
    with np.errstate(invalid="ignore"):
        return np.isfinite(depth) & (depth > depth_min) & (depth < depth_max)


def pixel_rays(intrinsics: Intrinsics, width: int, height: int) -> np.ndarray:
    """Rays ((u - cx) / f, (v - cy) / f, 1) for a width x height image."""
    u = (np.arange(width, dtype=np.float64) - intrinsics.cx) / intrinsics.f
    v = (np.arange(height, dtype=np.float64) - intrinsics.cy) / intrinsics.f
    rays = np.empty((height, width, 3))
    rays[..., 0] = u[None, :]
    rays[..., 1] = v[:, None]
    rays[..., 2] = 1.0
    return rays
