"""
Directional marching cubes over the six direction channels.

Per cell, every direction with all eight corners weighted yields an MC index.
Indices are filtered twice before meshing: within a direction, surface
components whose orientation cannot belong to that direction are removed;
across directions, a weighted vote over all directions with data can veto a
cell's hypotheses. The surviving components are merged into at most two
combined indices per cell, which are regularized against the neighborhood
and triangulated with up to two vertices per owned edge.
"""

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from ..config import FusionConfig
from ..volume.block_map import BlockMap
from ..volume.directions import DIRECTION_VECTORS, Direction
from .classic import classic_mc, corner_cells, edge_offset, emit_triangles, mc_indices
from .mesh import TriangleMesh, split_edge_keys
from .regularize import UNSET, CombinedGrid, regularize
from .tables import AXIS_VECTORS, COMPONENTS, CORNER_OFFSETS, OWNED_EDGE_CORNERS, SIGN_NORMALS


logger = logging.getLogger(__name__)

NUM_DIRECTIONS = 6
BLOCKS_PER_ITEM = 16

ACCEPT = 1
AMBIGUOUS = 0
REJECT = -1

# A direction covers orientations within pi/2 + pi/8 of its axis
CONE_LIMIT = -math.sin(math.pi / 8)

# Central-difference gradient of the trilinear field at the cell center
GRADIENT_WEIGHTS = (2.0 * CORNER_OFFSETS - 1.0) / 4.0

_MIN_ALIGNMENT = 1e-9


def _sphere_normals(count: int) -> np.ndarray:
    i = np.arange(count) + 0.5
    z = 1.0 - 2.0 * i / count
    r = np.sqrt(1.0 - z * z)
    phi = math.pi * (3.0 - math.sqrt(5.0)) * i
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


def _plausibility_table(samples: int = 20000) -> np.ndarray:
    """
    Plausibility of every corner mask per direction.

    A mask is realizable by a plane with outward normal n when its corners
    are exactly the ones with the smallest projections on n. The mask is
    accepted when every realizing normal lies inside the direction's cone,
    rejected when none does, and ambiguous otherwise (including masks no
    plane realizes).
    """
    normals = _sphere_normals(samples)
    order = np.argsort(normals @ CORNER_OFFSETS.T, axis=1, kind="stable")
    prefix = np.cumsum(1 << order, axis=1)[:, :7]
    dots = normals @ DIRECTION_VECTORS.T

    lowest = np.full((256, NUM_DIRECTIONS), np.inf)
    highest = np.full((256, NUM_DIRECTIONS), -np.inf)
    for k in range(7):
        np.minimum.at(lowest, prefix[:, k], dots)
        np.maximum.at(highest, prefix[:, k], dots)

    table = np.full((NUM_DIRECTIONS, 256), AMBIGUOUS, dtype=np.int64)
    seen = np.isfinite(lowest).T
    table[seen & (lowest.T >= CONE_LIMIT)] = ACCEPT
    table[seen & (highest.T < CONE_LIMIT)] = REJECT
    return table


PLAUSIBILITY = _plausibility_table()

# Components of every index, padded with 0 to four per index
COMPONENT_TABLE = np.zeros((256, 4), dtype=np.int64)
for _index, _components in enumerate(COMPONENTS):
    COMPONENT_TABLE[_index, : len(_components)] = _components

# Per direction: union of accepted components, and whether any is ambiguous
_STATUS = np.where(COMPONENT_TABLE[None, :, :] > 0, PLAUSIBILITY[:, COMPONENT_TABLE], REJECT)
FILTER_TABLE = np.where(_STATUS == ACCEPT, COMPONENT_TABLE[None], 0).sum(axis=2)
NEEDS_GRADIENT = np.any(_STATUS == AMBIGUOUS, axis=2)


def _compatibility_table() -> np.ndarray:
    component = np.arange(256)[:, None]
    slot = np.arange(256)[None, :]
    merged = component & slot
    agree = np.einsum("ijk,ik->ij", SIGN_NORMALS[merged], SIGN_NORMALS)
    return (merged != 0) & (merged != 255) & (agree > 0)


# COMPATIBLE[component, slot]: the component may be intersected into the slot
COMPATIBLE = _compatibility_table()


def cell_gradient(sdf: np.ndarray, voxel_size: float = 1.0) -> np.ndarray:
    """Gradient of the trilinear field at the cell center from (..., 8) corners."""
    return np.asarray(sdf, dtype=np.float64) @ GRADIENT_WEIGHTS / voxel_size


def component_plausibility(component: int, direction: Direction) -> int:
    """ACCEPT, REJECT or AMBIGUOUS for one corner mask and direction."""
    return int(PLAUSIBILITY[int(direction), component & 0xFF])


def filter_indices(mc: np.ndarray, sdf: np.ndarray, voxel_size: float = 1.0) -> np.ndarray:
    """
    Vectorized intra-directional filter.

    Args:
        mc: (N, 6) MC index per direction
        sdf: (N, 6, 8) corner values per direction
        voxel_size: Lattice spacing

    Returns:
        (N, 6) filtered indices
    """
    mc = np.asarray(mc, dtype=np.int64)
    dirs = np.broadcast_to(np.arange(NUM_DIRECTIONS), mc.shape)
    filtered = FILTER_TABLE[dirs, mc].copy()
    rows, cols = np.nonzero(NEEDS_GRADIENT[dirs, mc])
    if rows.size == 0:
        return filtered

    corners = sdf[rows, cols]
    vectors = DIRECTION_VECTORS[cols]
    bits = (mc[rows, cols, None] >> np.arange(8)) & 1
    for j in range(4):
        component = COMPONENT_TABLE[mc[rows, cols], j]
        status = np.where(component > 0, PLAUSIBILITY[cols, component], REJECT)
        pending = status == AMBIGUOUS
        if not pending.any():
            continue
        in_component = ((component[:, None] >> np.arange(8)) & 1).astype(bool)
        restricted = np.where(in_component | (bits == 0), corners, np.abs(corners))
        g = cell_gradient(restricted, voxel_size)
        norm = np.linalg.norm(g, axis=1)
        dots = np.einsum("ij,ij->i", g, vectors) / np.where(norm > 0, norm, 1.0)
        keep = pending & ((norm == 0) | (dots >= CONE_LIMIT))
        filtered[rows[keep], cols[keep]] |= component[keep]
    return filtered


def intra_directional_filter(
    mc: int, sdf_corners: Sequence[float], direction: Direction, voxel_size: float = 1.0
) -> int:
    """
    Remove surface components that cannot face along a direction.

    Orientation-unambiguous components are decided by a precomputed table;
    the others by the gradient of the corner field with every other
    component pushed outside.

    Args:
        mc: MC index of the direction
        sdf_corners: The direction's eight corner values
        direction: Direction the index belongs to
        voxel_size: Lattice spacing

    Returns:
        Filtered index, 0 when all components are rejected
    """
    mc_row = np.zeros((1, NUM_DIRECTIONS), dtype=np.int64)
    sdf_row = np.zeros((1, NUM_DIRECTIONS, 8))
    mc_row[0, int(direction)] = int(mc) & 0xFF
    sdf_row[0, int(direction)] = np.asarray(sdf_corners, dtype=np.float64)
    return int(filter_indices(mc_row, sdf_row, voxel_size)[0, int(direction)])


@dataclass
class DirectionData:
    """Per-direction corner data of N cells."""
    sdf: np.ndarray
    weight: np.ndarray
    has_data: np.ndarray
    mc: np.ndarray
    gradient: np.ndarray
    alignment: np.ndarray


def direction_data(sdf: np.ndarray, weight: np.ndarray, voxel_size: float) -> DirectionData:
    """
    Indices, gradients and weighted alignment from (N, 6, 8) corner arrays.

    A direction has data in a cell only when all eight corners carry weight;
    its index reads 0 otherwise.
    """
    has_data = np.all(weight > 0, axis=2)
    mc = np.where(has_data, mc_indices(sdf), 0)
    gradient = cell_gradient(sdf, voxel_size)
    mean_weight = weight.mean(axis=2)
    alignment = np.where(
        has_data, mean_weight * np.einsum("ndk,dk->nd", gradient, DIRECTION_VECTORS), 0.0
    )
    return DirectionData(sdf, weight, has_data, mc, gradient, alignment)


def inter_vote(
    filtered: np.ndarray,
    data: DirectionData,
    truncation: float,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Vectorized inter-directional vote.

    Every direction with data votes with its weighted gradient alignment.
    A direction that sees no surface while all its corners lie more than
    half the truncation in front contradicts the others and votes negated.

    Returns:
        Tuple of (keep (N, 6) bool, vote a (N,))
    """
    hypothesis = filtered != 0
    contradicts = data.has_data & ~hypothesis & (data.sdf.min(axis=2) > 0.5 * truncation)
    sign = np.where(contradicts, -1.0, 1.0)
    votes = np.sum(np.where(data.has_data, data.alignment * sign, 0.0), axis=1)
    keep = hypothesis & (votes >= 0)[:, None]
    return keep, votes


def inter_directional_filter(
    filtered: Mapping[Direction, int],
    sdf: Mapping[Direction, Sequence[float]],
    weights: Mapping[Direction, Sequence[float]],
    truncation: float,
    voxel_size: float = 1.0,
) -> Tuple[Dict[Direction, bool], float]:
    """
    Decide which directions' hypotheses survive the cross-direction vote.

    Args:
        filtered: Filtered index of each direction with data
        sdf: Corner values of each direction with data
        weights: Corner weights of each direction with data
        truncation: Truncation distance
        voxel_size: Lattice spacing

    Returns:
        Tuple of ({direction: kept}, vote a); a < 0 drops every hypothesis
    """
    sdf_row = np.zeros((1, NUM_DIRECTIONS, 8))
    weight_row = np.zeros((1, NUM_DIRECTIONS, 8))
    filtered_row = np.zeros((1, NUM_DIRECTIONS), dtype=np.int64)
    for direction, index in filtered.items():
        d = int(direction)
        filtered_row[0, d] = index
        sdf_row[0, d] = sdf[direction]
        weight_row[0, d] = weights[direction]
    data = direction_data(sdf_row, weight_row, voxel_size)
    keep, votes = inter_vote(filtered_row, data, truncation)
    return {Direction(d): bool(keep[0, d]) for d in filtered}, float(votes[0])


def combine_components(indices: Iterable[int]) -> Tuple[int, int, int]:
    """
    Greedily merge index components into two slots.

    Components are visited in order. An empty slot takes the component; a
    set slot intersects with it when compatible; a component compatible with
    neither slot is dropped.

    Returns:
        Tuple of (slot 0, slot 1, dropped count); empty slots are UNSET
    """
    slots = [UNSET, UNSET]
    dropped = 0
    for index in indices:
        for component in COMPONENTS[int(index) & 0xFF]:
            for k in (0, 1):
                if slots[k] == UNSET:
                    slots[k] = component
                    break
                if COMPATIBLE[component, slots[k]]:
                    slots[k] &= component
                    break
            else:
                dropped += 1
    return slots[0], slots[1], dropped


def combine_mc_indices(indices: Iterable[int]) -> Tuple[int, int]:
    """Combined indices of a cell; an unused slot reads 0."""
    first, second, _ = combine_components(indices)
    return max(first, 0), max(second, 0)


def _combine_rows(kept: np.ndarray) -> Tuple[np.ndarray, int]:
    """Combine (N, 6) kept indices into (N, 2) slots."""
    n = kept.shape[0]
    slots = np.full((n, 2), UNSET, dtype=np.int64)
    nonzero = kept != 0
    counts = nonzero.sum(axis=1)
    single = counts == 1
    if single.any():
        index = kept[single].max(axis=1)
        simple = COMPONENT_TABLE[index, 1] == 0
        rows = np.flatnonzero(single)[simple]
        slots[rows, 0] = index[simple]
        complex_rows = np.concatenate([np.flatnonzero(single)[~simple], np.flatnonzero(counts > 1)])
    else:
        complex_rows = np.flatnonzero(counts > 1)

    dropped = 0
    for row in np.sort(complex_rows):
        first, second, lost = combine_components(kept[row][nonzero[row]])
        slots[row] = (first, second)
        dropped += lost
    return slots, dropped


@dataclass
class MeshingStats:
    """Counters of one directional mesh extraction."""
    cells_processed: int = 0
    triangles: int = 0
    vertices: int = 0
    components_filtered: int = 0
    hypotheses_vetoed: int = 0
    dropped_components: int = 0
    regularize_changes: int = 0
    elapsed_s: float = 0.0

    def as_dict(self) -> Dict[str, float]:
        return asdict(self)


@dataclass
class SurfaceUnits:
    """Filtering results of the surface cells of one or more blocks."""
    cells: np.ndarray
    filtered: np.ndarray
    kept: np.ndarray
    alignment: np.ndarray
    slots: np.ndarray
    dropped: int = 0
    filtered_out: int = 0
    vetoed: int = 0

    @classmethod
    def empty(cls) -> "SurfaceUnits":
        return cls(
            np.zeros((0, 3), dtype=np.int64),
            np.zeros((0, NUM_DIRECTIONS), dtype=np.int64),
            np.zeros((0, NUM_DIRECTIONS), dtype=bool),
            np.zeros((0, NUM_DIRECTIONS)),
            np.zeros((0, 2), dtype=np.int64),
        )

    @classmethod
    def concatenate(cls, parts: Sequence["SurfaceUnits"]) -> "SurfaceUnits":
        parts = [p for p in parts if p is not None]
        if not parts:
            return cls.empty()
        return cls(
            np.concatenate([p.cells for p in parts]),
            np.concatenate([p.filtered for p in parts]),
            np.concatenate([p.kept for p in parts]),
            np.concatenate([p.alignment for p in parts]),
            np.concatenate([p.slots for p in parts]),
            sum(p.dropped for p in parts),
            sum(p.filtered_out for p in parts),
            sum(p.vetoed for p in parts),
        )


def evaluate_cells(
    cells: np.ndarray, sdf: np.ndarray, weight: np.ndarray, voxel_size: float, truncation: float
) -> SurfaceUnits:
    """
    Run filtering and combining on cells with (N, 6, 8) corner data.

    Only cells where some direction hypothesizes a surface are returned.
    """
    data = direction_data(sdf, weight, voxel_size)
    surface = (data.mc != 0) & (data.mc != 255)
    rows = np.flatnonzero(surface.any(axis=1))
    if rows.size == 0:
        return SurfaceUnits.empty()

    data = DirectionData(*(getattr(data, name)[rows] for name in DirectionData.__dataclass_fields__))
    mc = np.where(surface[rows], data.mc, 0)
    filtered = filter_indices(mc, data.sdf, voxel_size)
    keep, _ = inter_vote(filtered, data, truncation)
    slots, dropped = _combine_rows(np.where(keep, filtered, 0))
    return SurfaceUnits(
        cells=np.asarray(cells, dtype=np.int64)[rows],
        filtered=filtered,
        kept=keep,
        alignment=data.alignment,
        slots=slots,
        dropped=dropped,
        filtered_out=int(np.sum((mc != 0) & (filtered == 0))),
        vetoed=int(np.sum((filtered != 0) & ~keep)),
    )


def block_corner_data(block_map: BlockMap, block_coord: Sequence[int]) -> Tuple[np.ndarray, np.ndarray]:
    """(B^3, 6, 8) corner sdf and weight of every cell of a block."""
    b = block_map.block_size
    block = block_map.get_block(block_coord)
    sdf = np.zeros((NUM_DIRECTIONS, b, b, b, 8))
    weight = np.zeros((NUM_DIRECTIONS, b, b, b, 8))
    for d in range(NUM_DIRECTIONS):
        if block is None or not block.has(d):
            continue
        halo_sdf, halo_weight = block_map.halo_arrays(block_coord, d)
        for c, (ox, oy, oz) in enumerate(CORNER_OFFSETS):
            sdf[d, ..., c] = halo_sdf[ox : ox + b, oy : oy + b, oz : oz + b]
            weight[d, ..., c] = halo_weight[ox : ox + b, oy : oy + b, oz : oz + b]
    shape = (NUM_DIRECTIONS, b ** 3, 8)
    return sdf.reshape(shape).transpose(1, 0, 2), weight.reshape(shape).transpose(1, 0, 2)


def gather_corner_data(block_map: BlockMap, cells: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(N, 6, 8) corner sdf and weight of arbitrary cells."""
    corners = corner_cells(cells)
    sdf = np.zeros((corners.shape[0], NUM_DIRECTIONS, 8))
    weight = np.zeros_like(sdf)
    for d in range(NUM_DIRECTIONS):
        sdf[:, d], weight[:, d] = block_map.gather(corners, d)
    return sdf, weight


def edge_offsets(
    block_map: BlockMap,
    units: SurfaceUnits,
    unit_rows: np.ndarray,
    owners: np.ndarray,
    axes: np.ndarray,
    sides: np.ndarray,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Weighted zero-crossing offsets for (owner, axis, side) edge slots.

    Kept directions of the owning unit whose filtered index crosses the edge
    on the requested side contribute with their alignment weight. Without
    any, a direction with a matching raw sign change contributes with its
    mean endpoint weight; otherwise the edge midpoint is used.

    Returns:
        Tuple of (offsets in [0, 1], whether any direction matched)
    """
    owners = np.asarray(owners, dtype=np.int64).reshape(-1, 3)
    n = owners.shape[0]
    upper_cells = owners + AXIS_VECTORS[axes]
    upper_corner = OWNED_EDGE_CORNERS[axes, 1]
    low_inside = sides == 0

    primary_sum = np.zeros(n)
    primary_w = np.zeros(n)
    fallback_sum = np.zeros(n)
    fallback_w = np.zeros(n)
    has_unit = unit_rows >= 0
    safe_rows = np.where(has_unit, unit_rows, 0)

    for d in range(NUM_DIRECTIONS):
        s_low, w_low = block_map.gather(owners, d)
        s_up, w_up = block_map.gather(upper_cells, d)
        valid = (w_low > 0) & (w_up > 0)
        t = edge_offset(s_low, s_up)

        raw_match = valid & ((s_low < 0) == low_inside) & ((s_up < 0) != low_inside)
        endpoint_weight = 0.5 * (w_low + w_up)
        fallback_sum += np.where(raw_match, endpoint_weight * t, 0.0)
        fallback_w += np.where(raw_match, endpoint_weight, 0.0)

        if units.cells.shape[0]:
            index = units.filtered[safe_rows, d]
            lower_bit = (index & 1).astype(bool)
            upper_bit = ((index >> upper_corner) & 1).astype(bool)
            match = (
                has_unit
                & units.kept[safe_rows, d]
                & valid
                & (lower_bit == low_inside)
                & (upper_bit != low_inside)
            )
            weight = np.maximum(units.alignment[safe_rows, d], _MIN_ALIGNMENT)
            primary_sum += np.where(match, weight * t, 0.0)
            primary_w += np.where(match, weight, 0.0)

    offsets = np.full(n, 0.5)
    use_fallback = (primary_w == 0) & (fallback_w > 0)
    offsets = np.where(primary_w > 0, primary_sum / np.where(primary_w > 0, primary_w, 1.0), offsets)
    offsets = np.where(use_fallback, fallback_sum / np.where(fallback_w > 0, fallback_w, 1.0), offsets)
    return np.clip(offsets, 0.0, 1.0), (primary_w > 0) | (fallback_w > 0)


class DirectionalMarchingCubes:
    """
    Mesh extraction from the six direction channels.

    Blocks are evaluated in fixed groups on a thread pool; results are
    concatenated in sorted block order, so output does not depend on the
    number of threads.
    """

    def __init__(self, config: Optional[FusionConfig] = None, threads: int = 1):
        self.config = config or FusionConfig()
        self.threads = max(1, int(threads or 1))
        self.stats = MeshingStats()

    def _evaluate_blocks(self, block_map: BlockMap, coords: List[Tuple[int, int, int]]) -> SurfaceUnits:
        parts = []
        for coord in coords:
            sdf, weight = block_corner_data(block_map, coord)
            parts.append(
                evaluate_cells(
                    block_map.block_cells(coord), sdf, weight,
                    block_map.voxel_size, block_map.truncation,
                )
            )
        return SurfaceUnits.concatenate(parts)

    def surface_units(self, block_map: BlockMap) -> SurfaceUnits:
        """Filtered and combined units of every surface cell, sorted by cell."""
        coords = [
            coord for coord in block_map.block_coords()
            if any(block_map.get_block(coord).has(d) for d in range(NUM_DIRECTIONS))
        ]
        groups = [coords[i : i + BLOCKS_PER_ITEM] for i in range(0, len(coords), BLOCKS_PER_ITEM)]
        if self.threads > 1 and len(groups) > 1:
            with ThreadPoolExecutor(max_workers=self.threads) as executor:
                parts = list(executor.map(lambda g: self._evaluate_blocks(block_map, g), groups))
        else:
            parts = [self._evaluate_blocks(block_map, g) for g in groups]
        return SurfaceUnits.concatenate(parts)

    def extract(self, block_map: BlockMap) -> TriangleMesh:
        """
        Run the full pipeline and return the mesh; counters land in ``stats``.
        """
        start = time.perf_counter()
        self.stats = MeshingStats()
        units = self.surface_units(block_map)
        self.stats.cells_processed = int(units.cells.shape[0])
        self.stats.dropped_components = units.dropped
        self.stats.components_filtered = units.filtered_out
        self.stats.hypotheses_vetoed = units.vetoed
        if units.cells.shape[0] == 0:
            self.stats.elapsed_s = time.perf_counter() - start
            return TriangleMesh()

        grid = CombinedGrid(units.cells, units.slots)
        self.stats.regularize_changes = regularize(grid, self.config.regularization_sweeps)

        # Unit rows follow the grid's sorted order
        order = np.argsort(grid.rows_of(units.cells), kind="stable")
        units = SurfaceUnits(
            units.cells[order], units.filtered[order], units.kept[order],
            units.alignment[order], grid.slots.copy(),
        )

        key_parts, triangle_parts = [], []
        for slot in (0, 1):
            masks = grid.slots[:, slot]
            emit = (masks > 0) & (masks < 255)
            keys, triangles = emit_triangles(grid.cells[emit], masks[emit])
            key_parts.append(keys)
            triangle_parts.append(keys[triangles] if keys.size else np.zeros((0, 3), dtype=np.int64))

        all_keys = np.concatenate(key_parts)
        if all_keys.size == 0:
            self.stats.elapsed_s = time.perf_counter() - start
            return TriangleMesh()
        unique = np.unique(all_keys)
        triangles = np.searchsorted(unique, np.concatenate(triangle_parts).reshape(-1)).reshape(-1, 3)

        owners, axes, sides = split_edge_keys(unique)
        offsets, _ = edge_offsets(block_map, units, grid.rows_of(owners), owners, axes, sides)
        vertices = (owners + offsets[:, None] * AXIS_VECTORS[axes]) * block_map.voxel_size

        mesh = TriangleMesh(vertices, triangles)
        self.stats.triangles = mesh.triangle_count
        self.stats.vertices = mesh.vertex_count
        self.stats.elapsed_s = time.perf_counter() - start
        if self.stats.dropped_components:
            logger.warning(f"Dropped {self.stats.dropped_components} incompatible surface components")
        logger.debug(
            f"Directional MC: {self.stats.cells_processed} cells, {mesh.triangle_count} triangles, "
            f"{self.stats.regularize_changes} regularized bits"
        )
        return mesh


def extract_mesh(
    block_map: BlockMap,
    config: Optional[FusionConfig] = None,
    threads: int = 1,
    stats: Optional[MeshingStats] = None,
) -> TriangleMesh:
    """
    Extract the surface of a fused volume.

    Directional volumes go through the directional pipeline; undirected ones
    through classic marching cubes on the baseline channel.

    Args:
        block_map: Fused volume
        config: Fusion configuration the volume was built with
        threads: Worker threads for block evaluation
        stats: Optional MeshingStats filled in place

    Returns:
        TriangleMesh with outward winding
    """
    config = config or FusionConfig()
    if not config.directional:
        start = time.perf_counter()
        mesh = classic_mc(block_map)
        if stats is not None:
            stats.triangles = mesh.triangle_count
            stats.vertices = mesh.vertex_count
            stats.elapsed_s = time.perf_counter() - start
        return mesh
    extractor = DirectionalMarchingCubes(config, threads)
    mesh = extractor.extract(block_map)
    if stats is not None:
        for name, value in asdict(extractor.stats).items():
            setattr(stats, name, value)
    return mesh


@dataclass
class MeshUnit:
    """
    Everything the directional pipeline decides for one cell.

    Attributes:
        cell: Cell coordinate (lattice point of corner 0)
        indices: {direction: (mc index, corner weights)} for directions with data
        sdf: {direction: corner values}
        filtered: {direction: index after the intra-directional filter}
        kept: {direction: survived the inter-directional vote}
        vote: Vote value a of the cell
        combined: (combined[0], combined[1]), 0 where a slot is unused
        offsets: {(axis, side): offset} of the three owned edges
    """
    cell: Tuple[int, int, int]
    indices: Dict[Direction, Tuple[int, np.ndarray]] = field(default_factory=dict)
    sdf: Dict[Direction, np.ndarray] = field(default_factory=dict)
    filtered: Dict[Direction, int] = field(default_factory=dict)
    kept: Dict[Direction, bool] = field(default_factory=dict)
    vote: float = 0.0
    combined: Tuple[int, int] = (0, 0)
    offsets: Dict[Tuple[int, int], float] = field(default_factory=dict)


def per_direction_indices(
    block_map: BlockMap, cell: Sequence[int]
) -> Dict[Direction, Tuple[int, np.ndarray]]:
    """
    MC index and corner weights of every direction with data in a cell.

    Directions with an unweighted corner are omitted.
    """
    sdf, weight = gather_corner_data(block_map, np.asarray([cell]))
    result = {}
    for d in range(NUM_DIRECTIONS):
        if np.all(weight[0, d] > 0):
            result[Direction(d)] = (int(mc_indices(sdf[0, d])), weight[0, d].copy())
    return result


def surface_offsets(
    block_map: BlockMap,
    cell: Sequence[int],
    kept: Mapping[Direction, int],
    alignment: Optional[Mapping[Direction, float]] = None,
) -> Dict[Tuple[int, int], float]:
    """
    Offsets of the surface crossings on a cell's three owned edges.

    Args:
        block_map: Volume
        cell: Owning cell
        kept: Filtered index of every kept direction
        alignment: Weight of each direction; gradient alignment by default

    Returns:
        {(axis, side): offset}, side 0 when the owner's lattice point is
        inside; at most two entries per edge
    """
    cell = np.asarray(cell, dtype=np.int64).reshape(1, 3)
    filtered = np.zeros((1, NUM_DIRECTIONS), dtype=np.int64)
    keep = np.zeros((1, NUM_DIRECTIONS), dtype=bool)
    align = np.zeros((1, NUM_DIRECTIONS))
    if alignment is None:
        sdf, weight = gather_corner_data(block_map, cell)
        alignment_row = direction_data(sdf, weight, block_map.voxel_size).alignment[0]
        alignment = {Direction(d): alignment_row[d] for d in range(NUM_DIRECTIONS)}
    for direction, index in kept.items():
        filtered[0, int(direction)] = index
        keep[0, int(direction)] = True
        align[0, int(direction)] = alignment[direction]
    units = SurfaceUnits(cell, filtered, keep, align, np.full((1, 2), UNSET))

    axes = np.repeat(np.arange(3), 2)
    sides = np.tile([0, 1], 3)
    owners = np.repeat(cell, 6, axis=0)
    upper_corner = OWNED_EDGE_CORNERS[axes, 1]
    crossing = np.zeros(6, dtype=bool)
    for index in kept.values():
        lower = index & 1
        upper = (index >> upper_corner) & 1
        crossing |= (lower != upper) & (lower == (sides == 0))
    offsets, _ = edge_offsets(block_map, units, np.zeros(6, dtype=np.int64), owners, axes, sides)
    return {(int(a), int(s)): float(t) for a, s, t, c in zip(axes, sides, offsets, crossing) if c}


def mesh_unit(block_map: BlockMap, cell: Sequence[int]) -> MeshUnit:
    """Run the per-cell pipeline on a single cell, for inspection."""
    cell = tuple(int(c) for c in cell)
    sdf, weight = gather_corner_data(block_map, np.asarray([cell]))
    data = direction_data(sdf, weight, block_map.voxel_size)
    unit = MeshUnit(cell=cell)
    for d in np.flatnonzero(data.has_data[0]):
        direction = Direction(int(d))
        unit.indices[direction] = (int(data.mc[0, d]), weight[0, d].copy())
        unit.sdf[direction] = sdf[0, d].copy()
    if not unit.indices:
        return unit

    mc = np.where((data.mc == 255), 0, data.mc)
    filtered = filter_indices(mc, sdf, block_map.voxel_size)
    keep, votes = inter_vote(filtered, data, block_map.truncation)
    unit.filtered = {d: int(filtered[0, int(d)]) for d in unit.indices}
    unit.kept = {d: bool(keep[0, int(d)]) for d in unit.indices}
    unit.vote = float(votes[0])
    kept_indices = [unit.filtered[d] for d in sorted(unit.indices) if unit.kept[d]]
    unit.combined = combine_mc_indices(kept_indices)
    unit.offsets = surface_offsets(
        block_map,
        cell,
        {d: unit.filtered[d] for d in unit.indices if unit.kept[d]},
        {d: float(data.alignment[0, int(d)]) for d in unit.indices},
    )
    return unit
