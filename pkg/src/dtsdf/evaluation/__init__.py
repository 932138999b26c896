"""Reconstruction accuracy and timing measurements."""

from .distances import (
    DistanceReport,
    TriangleIndex,
    brute_force_distances,
    closest_points_on_triangles,
    heatmap_scalars,
    mesh_to_reference_distances,
    sheet_thickness,
)
from .timing import PHASES, TimingReport, timing_report
from .report import SWEEP_COLUMNS, format_report, read_csv, read_report, write_csv, write_report

__all__ = [
    "DistanceReport",
    "TriangleIndex",
    "brute_force_distances",
    "closest_points_on_triangles",
    "heatmap_scalars",
    "mesh_to_reference_distances",
    "sheet_thickness",
    "PHASES",
    "TimingReport",
    "timing_report",
    "SWEEP_COLUMNS",
    "format_report",
    "read_csv",
    "read_report",
    "write_csv",
    "write_report",
]
