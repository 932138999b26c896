"""Mesh extraction: classic and directional marching cubes."""

from .mesh import TriangleMesh
from .classic import classic_mc, edge_offset, mc_indices
from .regularize import CombinedGrid, count_disagreements, regularize
from .directional import (
    DirectionalMarchingCubes,
    MeshingStats,
    MeshUnit,
    combine_mc_indices,
    extract_mesh,
    inter_directional_filter,
    intra_directional_filter,
    mesh_unit,
    per_direction_indices,
    surface_offsets,
)
from .tables import COMPONENTS, index_components

__all__ = [
    "TriangleMesh",
    "classic_mc",
    "edge_offset",
    "mc_indices",
    "CombinedGrid",
    "count_disagreements",
    "regularize",
    "DirectionalMarchingCubes",
    "MeshingStats",
    "MeshUnit",
    "combine_mc_indices",
    "extract_mesh",
    "inter_directional_filter",
    "intra_directional_filter",
    "mesh_unit",
    "per_direction_indices",
    "surface_offsets",
    "COMPONENTS",
    "index_components",
]
