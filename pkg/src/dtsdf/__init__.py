"""
dtsdf - Directional truncated signed distance fusion and meshing.

Fuses posed depth frames into a sparse, direction-partitioned TSDF volume
and extracts triangle meshes with a directional marching cubes pipeline.
"""

from .main import main, __version__

__author__ = "dtsdf contributors"

__all__ = ["main", "__version__"]
