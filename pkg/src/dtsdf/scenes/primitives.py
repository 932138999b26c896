"""
Analytic solid primitives and their union.

Every primitive is a convex solid with an exact signed distance (negative
inside) and a ray/solid interval test used by the renderer. ``inverted``
swaps inside and outside, which turns a box into a room seen from within.
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial.transform import Rotation

from ..errors import SceneError


logger = logging.getLogger(__name__)

Bounds = Tuple[np.ndarray, np.ndarray]


def _vector(value, name: str, size: int = 3) -> np.ndarray:
    array = np.asarray(value, dtype=np.float64).reshape(-1)
    if array.shape != (size,) or not np.all(np.isfinite(array)):
        raise SceneError(f"{name} must be {size} finite numbers, got: {value!r}")
    return array


def _unit(value, name: str) -> np.ndarray:
    n = _vector(value, name)
    length = np.linalg.norm(n)
    if length == 0:
        raise SceneError(f"{name} must not be zero")
    return n / length


def _positive(value: float, name: str) -> float:
    value = float(value)
    if not value > 0:
        raise SceneError(f"{name} must be positive, got: {value}")
    return value


def slab_interval(
    origin: np.ndarray, direction: np.ndarray, lo: np.ndarray, hi: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Parameter interval where rays stay between lo and hi on every axis.

    Args:
        origin: (N, K) ray origins in slab coordinates
        direction: (N, K) ray directions in slab coordinates
        lo, hi: (K,) slab bounds

    Returns:
        Tuple of (t_enter, t_exit); empty intervals have t_enter > t_exit
    """
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / direction
        t0 = (lo - origin) * inv
        t1 = (hi - origin) * inv
    parallel = direction == 0
    inside = (origin >= lo) & (origin <= hi)
    near = np.where(parallel, np.where(inside, -np.inf, np.inf), np.minimum(t0, t1))
    far = np.where(parallel, np.where(inside, np.inf, -np.inf), np.maximum(t0, t1))
    return near.max(axis=1), far.min(axis=1)


@dataclass
class Primitive(ABC):
    """Base class for convex solids."""
    inverted: bool = field(default=False, kw_only=True)

    @abstractmethod
    def solid_distance(self, points: np.ndarray) -> np.ndarray:
        """Signed distance of the solid itself, ignoring ``inverted``."""

    @abstractmethod
    def interval(self, origins: np.ndarray, directions: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Ray parameter interval inside the solid, ignoring ``inverted``."""

    def bounds(self) -> Optional[Bounds]:
        """Axis-aligned bounds of the surface, None when unbounded."""
        return None

    def sdf(self, points: np.ndarray) -> np.ndarray:
        """Signed distance, negative inside."""
        d = self.solid_distance(np.asarray(points, dtype=np.float64).reshape(-1, 3))
        return -d if self.inverted else d

    def first_hit(self, origins: np.ndarray, directions: np.ndarray) -> np.ndarray:
        """
        Smallest positive ray parameter where a ray enters this primitive.

        Rays starting inside the primitive's material report no hit.
        """
        near, far = self.interval(origins, directions)
        nonempty = near <= far
        if self.inverted:
            # entering the inverted solid is leaving the original one
            hit = nonempty & (near <= 0) & (far > 0) & np.isfinite(far)
            return np.where(hit, far, np.inf)
        hit = nonempty & (near > 0)
        return np.where(hit, near, np.inf)


@dataclass
class Sphere(Primitive):
    center: np.ndarray
    radius: float

    def __post_init__(self):
        self.center = _vector(self.center, "center")
        self.radius = _positive(self.radius, "radius")

    def solid_distance(self, points: np.ndarray) -> np.ndarray:
        return np.linalg.norm(points - self.center, axis=1) - self.radius

    def interval(self, origins, directions):
        oc = origins - self.center
        a = np.sum(directions * directions, axis=1)
        b = np.sum(oc * directions, axis=1)
        c = np.sum(oc * oc, axis=1) - self.radius ** 2
        disc = b * b - a * c
        root = np.sqrt(np.maximum(disc, 0.0))
        near = np.where(disc >= 0, (-b - root) / a, np.inf)
        far = np.where(disc >= 0, (-b + root) / a, -np.inf)
        return near, far

    def bounds(self) -> Bounds:
        return self.center - self.radius, self.center + self.radius


@dataclass
class Box(Primitive):
    """Oriented box; ``rotation`` maps box axes to world axes."""
    center: np.ndarray
    half_extents: np.ndarray
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        self.center = _vector(self.center, "center")
        self.half_extents = _vector(self.half_extents, "half_extents")
        if np.any(self.half_extents <= 0):
            raise SceneError(f"half_extents must be positive, got: {self.half_extents.tolist()}")
        self.rotation = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)

    @classmethod
    def from_euler(
        cls, center, half_extents, angles_deg: Sequence[float] = (0.0, 0.0, 0.0), **kwargs
    ) -> "Box":
        """Box rotated by extrinsic xyz Euler angles in degrees."""
        rotation = Rotation.from_euler("xyz", angles_deg, degrees=True).as_matrix()
        return cls(center, half_extents, rotation, **kwargs)

    def _local(self, points: np.ndarray) -> np.ndarray:
        return (points - self.center) @ self.rotation

    def solid_distance(self, points: np.ndarray) -> np.ndarray:
        q = np.abs(self._local(points)) - self.half_extents
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=1)
        return outside + np.minimum(q.max(axis=1), 0.0)

    def interval(self, origins, directions):
        return slab_interval(
            self._local(origins), directions @ self.rotation, -self.half_extents, self.half_extents
        )

    def bounds(self) -> Bounds:
        reach = np.abs(self.rotation) @ self.half_extents
        return self.center - reach, self.center + reach


@dataclass
class Slab(Primitive):
    """Infinite slab of given thickness centered on a plane."""
    point: np.ndarray
    normal: np.ndarray
    thickness: float

    def __post_init__(self):
        self.point = _vector(self.point, "point")
        self.normal = _unit(self.normal, "normal")
        self.thickness = _positive(self.thickness, "thickness")

    def solid_distance(self, points: np.ndarray) -> np.ndarray:
        return np.abs((points - self.point) @ self.normal) - 0.5 * self.thickness

    def interval(self, origins, directions):
        h = 0.5 * self.thickness
        return slab_interval(
            ((origins - self.point) @ self.normal)[:, None],
            (directions @ self.normal)[:, None],
            np.array([-h]),
            np.array([h]),
        )


@dataclass
class Plane(Primitive):
    """Half-space behind a plane; the normal points outside."""
    point: np.ndarray
    normal: np.ndarray

    def __post_init__(self):
        self.point = _vector(self.point, "point")
        self.normal = _unit(self.normal, "normal")

    def solid_distance(self, points: np.ndarray) -> np.ndarray:
        return (points - self.point) @ self.normal

    def interval(self, origins, directions):
        return slab_interval(
            ((origins - self.point) @ self.normal)[:, None],
            (directions @ self.normal)[:, None],
            np.array([-np.inf]),
            np.array([0.0]),
        )


def bounded_slab(
    point, normal, thickness: float, half_extents: Sequence[float], inverted: bool = False
) -> Box:
    """
    Slab limited to a rectangle in its plane, built as an oriented box.

    Args:
        point: Center of the slab
        normal: Slab normal
        thickness: Full thickness along the normal
        half_extents: In-plane half sizes (a, b)
    """
    n = _unit(normal, "normal")
    thickness = _positive(thickness, "thickness")
    a, b = _vector(half_extents, "half_extents", size=2)
    helper = np.array([0.0, 0.0, 1.0]) if abs(n[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    u = np.cross(helper, n)
    u /= np.linalg.norm(u)
    v = np.cross(n, u)
    rotation = np.stack([u, v, n], axis=1)
    return Box(point, [a, b, 0.5 * thickness], rotation, inverted=inverted)


@dataclass
class Scene:
    """Union of primitives."""
    primitives: List[Primitive] = field(default_factory=list)
    name: str = "scene"

    def sdf(self, points: np.ndarray) -> np.ndarray:
        """Signed distance of the union, negative inside."""
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        if not self.primitives:
            return np.full(points.shape[0], np.inf)
        return np.min([p.sdf(points) for p in self.primitives], axis=0)

    def normals(self, points: np.ndarray, eps: float = 1e-6) -> np.ndarray:
        """Outward unit normals from central differences of the sdf."""
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        grad = np.empty_like(points)
        for axis in range(3):
            step = np.zeros(3)
            step[axis] = eps
            grad[:, axis] = (self.sdf(points + step) - self.sdf(points - step)) / (2 * eps)
        length = np.linalg.norm(grad, axis=1, keepdims=True)
        return grad / np.where(length > 0, length, 1.0)

    def first_hit(self, origins: np.ndarray, directions: np.ndarray) -> np.ndarray:
        """Ray parameter of the first surface hit, inf for misses."""
        origins = np.asarray(origins, dtype=np.float64).reshape(-1, 3)
        directions = np.asarray(directions, dtype=np.float64).reshape(-1, 3)
        if not self.primitives:
            return np.full(origins.shape[0], np.inf)
        return np.min([p.first_hit(origins, directions) for p in self.primitives], axis=0)

    def bounds(self) -> Bounds:
        """
        Axis-aligned bounds of all primitives.

        Raises:
            SceneError: If the scene has no bounded primitive
        """
        boxes = [b for b in (p.bounds() for p in self.primitives) if b is not None]
        if not boxes:
            raise SceneError(f"Scene '{self.name}' has no bounded primitive")
        return np.min([b[0] for b in boxes], axis=0), np.max([b[1] for b in boxes], axis=0)


def scene_sdf(scene: Scene, point) -> np.ndarray:
    """Exact signed distance of ``point`` (or (N, 3) points) to the scene."""
    points = np.asarray(point, dtype=np.float64)
    values = scene.sdf(points.reshape(-1, 3))
    return values[0] if points.ndim == 1 else values
