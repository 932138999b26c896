"""
Mesh-to-reference distances, heatmap scalars and sheet thickness.

Distances are directed: every vertex of the evaluated mesh is measured
against the reference surface, never the other way round.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.spatial import cKDTree

from ..errors import ContractError, InputError
from ..meshing.mesh import TriangleMesh
from ..scenes.primitives import Scene


logger = logging.getLogger(__name__)


CANDIDATES = 8
CHUNK = 4096


@dataclass
class DistanceReport:
    """Per-vertex unsigned distances of a mesh to its reference, in meters."""
    rmse: float
    mean: float
    max: float
    distances: np.ndarray = field(repr=False)
    count: int = 0

    @classmethod
    def from_distances(cls, distances: np.ndarray) -> "DistanceReport":
        d = np.asarray(distances, dtype=np.float64).reshape(-1)
        if d.size == 0:
            raise InputError("No distances to summarize")
        return cls(
            rmse=float(np.sqrt(np.mean(d ** 2))),
            mean=float(d.mean()),
            max=float(d.max()),
            distances=d,
            count=int(d.size),
        )

    def as_dict(self) -> Dict[str, float]:
        return {"rmse": self.rmse, "mean": self.mean, "max": self.max, "count": self.count}


def _safe_ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(den != 0, num / den, 0.0)


def closest_points_on_triangles(
    points: np.ndarray, a: np.ndarray, b: np.ndarray, c: np.ndarray
) -> np.ndarray:
    """
    Closest point on triangle (a, b, c) to each point, row by row.

    Classifies every point into the vertex, edge or face region of its
    triangle from barycentric dot products.

    Args:
        points, a, b, c: (N, 3) arrays

    Returns:
        (N, 3) closest points
    """
    p = np.asarray(points, dtype=np.float64)
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    bp = p - b
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    cp = p - c
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)

    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2

    # face interior
    denom = va + vb + vc
    v = _safe_ratio(vb, denom)
    w = _safe_ratio(vc, denom)
    result = a + ab * v[:, None] + ac * w[:, None]

    # regions are assigned from lowest to highest precedence
    in_bc = (va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0)
    t = _safe_ratio(d4 - d3, (d4 - d3) + (d5 - d6))
    result = np.where(in_bc[:, None], b + (c - b) * t[:, None], result)

    in_ac = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
    t = _safe_ratio(d2, d2 - d6)
    result = np.where(in_ac[:, None], a + ac * t[:, None], result)

    in_c = (d6 >= 0) & (d5 <= d6)
    result = np.where(in_c[:, None], c, result)

    in_ab = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
    t = _safe_ratio(d1, d1 - d3)
    result = np.where(in_ab[:, None], a + ab * t[:, None], result)

    in_b = (d3 >= 0) & (d4 <= d3)
    result = np.where(in_b[:, None], b, result)

    in_a = (d1 <= 0) & (d2 <= 0)
    return np.where(in_a[:, None], a, result)


class TriangleIndex:
    """
    Closest-point queries against a fixed triangle mesh.

    Triangle centroids go into a k-d tree. A query first takes the best of
    the nearest few centroids, then re-checks every triangle whose bounding
    sphere reaches inside that distance, so results are exact.
    """

    def __init__(self, mesh: TriangleMesh):
        if mesh.triangle_count == 0:
            raise InputError("Reference mesh has no triangles")
        tri = mesh.vertices[mesh.triangles]
        self.a, self.b, self.c = tri[:, 0], tri[:, 1], tri[:, 2]
        self.centroids = tri.mean(axis=1)
        self.radii = np.linalg.norm(tri - self.centroids[:, None, :], axis=2).max(axis=1)
        self.max_radius = float(self.radii.max())
        self.tree = cKDTree(self.centroids)

    def __len__(self) -> int:
        return self.centroids.shape[0]

    def _distances_to(self, points: np.ndarray, triangles: np.ndarray) -> np.ndarray:
        closest = closest_points_on_triangles(
            points, self.a[triangles], self.b[triangles], self.c[triangles]
        )
        return np.linalg.norm(points - closest, axis=1)

    def _query_chunk(self, points: np.ndarray, workers: int) -> Tuple[np.ndarray, np.ndarray]:
        n = points.shape[0]
        k = min(CANDIDATES, len(self))
        _, nearest = self.tree.query(points, k=k, workers=workers)
        nearest = nearest.reshape(n, k)
        d = self._distances_to(np.repeat(points, k, axis=0), nearest.reshape(-1)).reshape(n, k)
        best = d.min(axis=1)

        balls = self.tree.query_ball_point(points, best + self.max_radius, workers=workers)
        lengths = np.fromiter((len(ball) for ball in balls), dtype=np.int64, count=n)
        rows = np.repeat(np.arange(n), lengths)
        candidates = np.fromiter(
            (t for ball in balls for t in ball), dtype=np.int64, count=int(lengths.sum())
        )
        reach = np.linalg.norm(points[rows] - self.centroids[candidates], axis=1) - self.radii[candidates]
        keep = reach <= best[rows]
        rows, candidates = rows[keep], candidates[keep]

        exact = self._distances_to(points[rows], candidates)
        order = np.lexsort((exact, rows))
        rows, candidates, exact = rows[order], candidates[order], exact[order]
        first = np.ones(rows.shape[0], dtype=bool)
        first[1:] = rows[1:] != rows[:-1]

        out_d = best.copy()
        out_t = nearest[np.arange(n), d.argmin(axis=1)]
        better = exact[first] < out_d[rows[first]]
        out_d[rows[first][better]] = exact[first][better]
        out_t[rows[first][better]] = candidates[first][better]
        return out_d, out_t

    def query(self, points: np.ndarray, workers: int = 1) -> Tuple[np.ndarray, np.ndarray]:
        """
        Exact distance and nearest triangle for every point.

        Args:
            points: (N, 3) query points
            workers: Threads for the k-d tree queries (-1 for all cores)

        Returns:
            Tuple of (distances (N,), triangle indices (N,))
        """
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        distances = np.empty(points.shape[0])
        triangles = np.empty(points.shape[0], dtype=np.int64)
        for start in range(0, points.shape[0], CHUNK):
            stop = start + CHUNK
            distances[start:stop], triangles[start:stop] = self._query_chunk(points[start:stop], workers)
        return distances, triangles


def brute_force_distances(points: np.ndarray, reference: TriangleMesh) -> np.ndarray:
    """Distance of each point to the closest of all reference triangles."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    tri = reference.vertices[reference.triangles]
    n, t = points.shape[0], tri.shape[0]
    closest = closest_points_on_triangles(
        np.repeat(points, t, axis=0),
        np.tile(tri[:, 0], (n, 1)),
        np.tile(tri[:, 1], (n, 1)),
        np.tile(tri[:, 2], (n, 1)),
    )
    d = np.linalg.norm(np.repeat(points, t, axis=0) - closest, axis=1)
    return d.reshape(n, t).min(axis=1)


def mesh_to_reference_distances(
    mesh: TriangleMesh,
    reference: Union[Scene, TriangleMesh, TriangleIndex],
    workers: int = 1,
) -> DistanceReport:
    """
    Unsigned distance from every mesh vertex to a reference surface.

    Args:
        mesh: Evaluated mesh
        reference: Analytic scene (exact |sdf|), reference mesh, or a prebuilt TriangleIndex
        workers: Threads for spatial index queries

    Returns:
        DistanceReport over all vertices

    Raises:
        InputError: If the mesh has no vertices or the reference mesh no triangles
    """
    if mesh.vertex_count == 0:
        raise InputError("Cannot evaluate an empty mesh")

    match reference:
        case Scene():
            distances = np.abs(reference.sdf(mesh.vertices))
        case TriangleIndex():
            distances, _ = reference.query(mesh.vertices, workers)
        case TriangleMesh():
            distances, _ = TriangleIndex(reference).query(mesh.vertices, workers)
        case _:
            raise ContractError(f"Unsupported reference type: {type(reference).__name__}")

    report = DistanceReport.from_distances(distances)
    logger.debug(f"Distance report over {report.count} vertices: rmse {report.rmse:.6f} m")
    return report


def heatmap_scalars(report: DistanceReport, clamp_max: float) -> np.ndarray:
    """
    Per-vertex heatmap values distance / clamp_max, clipped to [0, 1].

    Raises:
        ContractError: If clamp_max is not positive
    """
    if not clamp_max > 0:
        raise ContractError(f"clamp_max must be positive, got: {clamp_max}")
    return np.clip(report.distances / clamp_max, 0.0, 1.0)


def sheet_thickness(
    mesh: TriangleMesh,
    plane_point: Sequence[float],
    normal: Sequence[float],
    radius: float,
    max_offset: Optional[float] = None,
) -> float:
    """
    Mean separation of the mesh sheets on the two sides of a mid-plane.

    Only vertices whose projection onto the plane lies within ``radius`` of
    ``plane_point`` (and, if given, within ``max_offset`` of the plane) are
    used. The result is the mean offset of the vertices in front of the
    plane minus the mean offset of those behind it.

    Returns:
        Thickness in meters, inf if either side has no vertex
    """
    p = np.asarray(plane_point, dtype=np.float64)
    n = np.asarray(normal, dtype=np.float64)
    n = n / np.linalg.norm(n)
    rel = mesh.vertices - p
    offset = rel @ n
    lateral = np.linalg.norm(rel - offset[:, None] * n, axis=1)
    near = lateral <= radius
    if max_offset is not None:
        near &= np.abs(offset) <= max_offset

    front = offset[near & (offset > 0)]
    back = offset[near & (offset < 0)]
    if front.size == 0 or back.size == 0:
        logger.debug(f"Sheet thickness: {front.size} front and {back.size} back vertices")
        return float("inf")
    return float(front.mean() - back.mean())
