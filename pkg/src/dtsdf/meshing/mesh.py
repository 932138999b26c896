"""
Indexed triangle mesh container and shared-vertex keys.
"""

from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np


@dataclass
class TriangleMesh:
    """Vertex positions (m), triangle index triples and optional per-vertex scalars."""
    vertices: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    triangles: np.ndarray = field(default_factory=lambda: np.zeros((0, 3), dtype=np.int64))
    scalars: Optional[np.ndarray] = None

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if self.scalars is not None:
            self.scalars = np.asarray(self.scalars, dtype=np.float64).reshape(-1)

    @property
    def vertex_count(self) -> int:
        return int(self.vertices.shape[0])

    @property
    def triangle_count(self) -> int:
        return int(self.triangles.shape[0])

    def is_empty(self) -> bool:
        return self.triangle_count == 0

    def triangle_normals(self, normalize: bool = True) -> np.ndarray:
        """Per-triangle normals from the (b - a) x (c - a) winding."""
        a, b, c = (self.vertices[self.triangles[:, i]] for i in range(3))
        n = np.cross(b - a, c - a)
        if normalize:
            length = np.linalg.norm(n, axis=1, keepdims=True)
            n = n / np.where(length > 0, length, 1.0)
        return n

    def centroids(self) -> np.ndarray:
        return self.vertices[self.triangles].mean(axis=1)

    def validate(self) -> None:
        """Raise ValueError on out-of-range or repeated triangle indices."""
        if self.triangle_count == 0:
            return
        if self.triangles.min() < 0 or self.triangles.max() >= self.vertex_count:
            raise ValueError("Triangle index out of range")
        t = self.triangles
        if np.any((t[:, 0] == t[:, 1]) | (t[:, 1] == t[:, 2]) | (t[:, 0] == t[:, 2])):
            raise ValueError("Triangle with repeated vertex index")
        if self.scalars is not None and self.scalars.shape[0] != self.vertex_count:
            raise ValueError("Scalar count does not match vertex count")

    def with_scalars(self, scalars: np.ndarray) -> "TriangleMesh":
        return TriangleMesh(self.vertices, self.triangles, scalars)

    @classmethod
    def concatenate(cls, meshes: Iterable["TriangleMesh"]) -> "TriangleMesh":
        vertices, triangles, offset = [], [], 0
        for mesh in meshes:
            vertices.append(mesh.vertices)
            triangles.append(mesh.triangles + offset)
            offset += mesh.vertex_count
        if not vertices:
            return cls()
        return cls(np.concatenate(vertices), np.concatenate(triangles))


# Shared-vertex keys: 18 bits per cell coordinate, 2 bits edge axis, 1 bit side
_KEY_BITS = 18
_KEY_OFFSET = 1 << (_KEY_BITS - 1)
_KEY_MASK = (1 << _KEY_BITS) - 1


def edge_keys(owners: np.ndarray, axes: np.ndarray, sides: np.ndarray) -> np.ndarray:
    """Pack (owner cell, axis, side) triples into int64 keys."""
    c = np.asarray(owners, dtype=np.int64).reshape(-1, 3) + _KEY_OFFSET
    key = (c[:, 0] << (2 * _KEY_BITS)) | (c[:, 1] << _KEY_BITS) | c[:, 2]
    return (key << 3) | (np.asarray(axes, dtype=np.int64) << 1) | np.asarray(sides, dtype=np.int64)


def split_edge_keys(keys: np.ndarray):
    """Inverse of edge_keys: returns (owners (N, 3), axes (N,), sides (N,))."""
    keys = np.asarray(keys, dtype=np.int64)
    sides = keys & 1
    axes = (keys >> 1) & 3
    cell = keys >> 3
    owners = np.stack(
        [
            (cell >> (2 * _KEY_BITS)) & _KEY_MASK,
            (cell >> _KEY_BITS) & _KEY_MASK,
            cell & _KEY_MASK,
        ],
        axis=1,
    ) - _KEY_OFFSET
    return owners, axes, sides
