#!/usr/bin/env python
"""
Tests for mesh distances, heatmaps, sheet thickness, timing and reports.
Run with: pytest tests/test_evaluation.py
"""

import sys
from pathlib import Path

# Add src to path
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

import numpy as np
import pytest

from dtsdf.errors import ContractError, InputError
from dtsdf.evaluation import (
    PHASES,
    DistanceReport,
    TriangleIndex,
    brute_force_distances,
    closest_points_on_triangles,
    format_report,
    heatmap_scalars,
    mesh_to_reference_distances,
    read_csv,
    read_report,
    sheet_thickness,
    timing_report,
    write_csv,
    write_report,
)
from dtsdf.fusion.integrator import FusionStats
from dtsdf.meshing import TriangleMesh, classic_mc
from dtsdf.scenes import Scene, Sphere, sample_scene_sdf
from dtsdf.volume import BlockMap


def sphere_points(radius: float, count: int = 500) -> np.ndarray:
    rng = np.random.default_rng(5)
    directions = rng.normal(size=(count, 3))
    return radius * directions / np.linalg.norm(directions, axis=1, keepdims=True)


def reference_sphere() -> TriangleMesh:
    """Marching cubes mesh of a 10 cm sphere."""
    block_map = BlockMap(0.01, 4.0)
    sample_scene_sdf(block_map, Scene([Sphere((0.003, -0.002, 0.001), 0.1)]))
    return classic_mc(block_map)


def sheets(offsets, half_size: float = 0.05) -> TriangleMesh:
    """Square sheets parallel to the xy-plane at the given z offsets."""
    vertices, triangles = [], []
    for z in offsets:
        base = len(vertices)
        vertices += [
            [-half_size, -half_size, z],
            [half_size, -half_size, z],
            [half_size, half_size, z],
            [-half_size, half_size, z],
        ]
        triangles += [[base, base + 1, base + 2], [base, base + 2, base + 3]]
    return TriangleMesh(vertices, triangles)


class TestClosestPoints:
    """Test closest points on single triangles."""

    A = np.array([[0.0, 0.0, 0.0]])
    B = np.array([[1.0, 0.0, 0.0]])
    C = np.array([[0.0, 1.0, 0.0]])

    @pytest.mark.parametrize(
        "point, expected",
        [
            ((0.2, 0.2, 0.5), (0.2, 0.2, 0.0)),
            ((-1.0, -1.0, 0.0), (0.0, 0.0, 0.0)),
            ((2.0, -0.5, 0.0), (1.0, 0.0, 0.0)),
            ((0.0, 3.0, 1.0), (0.0, 1.0, 0.0)),
            ((0.5, -2.0, 0.0), (0.5, 0.0, 0.0)),
            ((-1.0, 0.5, 0.0), (0.0, 0.5, 0.0)),
            ((1.0, 1.0, 0.0), (0.5, 0.5, 0.0)),
        ],
    )
    def test_regions(self, point, expected):
        """Test face, vertex and edge regions."""
        closest = closest_points_on_triangles(np.array([point]), self.A, self.B, self.C)
        np.testing.assert_allclose(closest[0], expected, atol=1e-12)

    def test_degenerate_triangle(self):
        """Test that a zero-area triangle still yields a finite point."""
        closest = closest_points_on_triangles(
            np.array([[0.5, 1.0, 0.0]]), self.A, self.B, np.array([[2.0, 0.0, 0.0]])
        )
        assert np.all(np.isfinite(closest))
        assert closest[0, 1] == pytest.approx(0.0)


class TestDistances:
    """Test mesh-to-reference distances."""

    def test_vertices_on_analytic_sphere(self):
        """Test that vertices sampled on the sphere have zero error."""
        scene = Scene([Sphere((0.0, 0.0, 0.0), 0.5)])
        mesh = TriangleMesh(sphere_points(0.5))
        report = mesh_to_reference_distances(mesh, scene)

        assert report.rmse < 1e-12
        assert report.count == 500

    def test_constant_offset(self):
        """Test that a 2 mm radial offset gives RMSE, mean and max of 2 mm."""
        scene = Scene([Sphere((0.0, 0.0, 0.0), 0.5)])
        report = mesh_to_reference_distances(TriangleMesh(sphere_points(0.502)), scene)

        assert report.rmse == pytest.approx(0.002)
        assert report.mean == pytest.approx(0.002)
        assert report.max == pytest.approx(0.002)

    def test_summary_values(self):
        """Test RMSE, mean and max of known distances."""
        report = DistanceReport.from_distances(np.array([0.0, 3.0, 4.0]))

        assert report.rmse == pytest.approx(np.sqrt(25.0 / 3.0))
        assert report.mean == pytest.approx(7.0 / 3.0)
        assert report.max == 4.0
        assert report.as_dict()["count"] == 3

    def test_index_matches_brute_force(self):
        """Test the k-d tree query against checking every triangle."""
        reference = reference_sphere()
        rng = np.random.default_rng(11)
        points = np.concatenate(
            [sphere_points(0.1, 150) + rng.normal(scale=0.003, size=(150, 3)),
             rng.uniform(-0.3, 0.3, size=(50, 3))]
        )
        distances, triangles = TriangleIndex(reference).query(points)
        expected = brute_force_distances(points, reference)

        np.testing.assert_allclose(distances, expected, atol=1e-12)
        tri = reference.vertices[reference.triangles[triangles]]
        closest = closest_points_on_triangles(points, tri[:, 0], tri[:, 1], tri[:, 2])
        np.testing.assert_allclose(np.linalg.norm(points - closest, axis=1), distances, atol=1e-12)

    def test_index_chunks_and_workers(self, mocker):
        """Test that chunked, multi-threaded queries agree with one pass."""
        import dtsdf.evaluation.distances as distances_module

        reference = reference_sphere()
        points = np.random.default_rng(2).uniform(-0.2, 0.2, size=(300, 3))
        index = TriangleIndex(reference)
        single, _ = index.query(points)
        mocker.patch.object(distances_module, "CHUNK", 64)
        chunked, _ = index.query(points, workers=4)

        np.testing.assert_allclose(single, chunked, atol=1e-15)

    def test_mesh_reference(self):
        """Test that a mesh against itself has zero error."""
        reference = reference_sphere()
        report = mesh_to_reference_distances(reference, reference)
        assert report.max < 1e-12

    def test_empty_mesh(self):
        """Test that an empty evaluated mesh raises InputError."""
        with pytest.raises(InputError):
            mesh_to_reference_distances(TriangleMesh(), Scene([Sphere((0, 0, 0), 1.0)]))

    def test_reference_without_triangles(self):
        """Test that a reference mesh without triangles raises InputError."""
        with pytest.raises(InputError):
            mesh_to_reference_distances(TriangleMesh(sphere_points(1.0, 3)), TriangleMesh())

    def test_unsupported_reference(self):
        """Test that other reference types raise ContractError."""
        with pytest.raises(ContractError):
            mesh_to_reference_distances(TriangleMesh(sphere_points(1.0, 3)), "sphere")


class TestHeatmap:
    """Test heatmap scalars."""

    def test_clamped_scalars(self):
        """Test distance over clamp_max clipped to one."""
        report = DistanceReport.from_distances(np.array([0.0, 0.001, 0.004]))
        np.testing.assert_allclose(heatmap_scalars(report, 0.002), [0.0, 0.5, 1.0])

    @pytest.mark.parametrize("clamp", [0.0, -0.01])
    def test_invalid_clamp(self, clamp):
        """Test that a non-positive clamp raises ContractError."""
        report = DistanceReport.from_distances(np.array([0.0]))
        with pytest.raises(ContractError):
            heatmap_scalars(report, clamp)


class TestSheetThickness:
    """Test separation of the two sheets of a thin object."""

    def test_two_sheets(self):
        """Test that sheets at plus and minus 2.5 mm are 5 mm apart."""
        mesh = sheets([0.0025, -0.0025])
        assert sheet_thickness(mesh, (0, 0, 0), (0, 0, 1), radius=0.1) == pytest.approx(0.005)

    def test_single_sheet(self):
        """Test that a missing sheet gives infinite thickness."""
        mesh = sheets([0.0025])
        assert sheet_thickness(mesh, (0, 0, 0), (0, 0, 1), radius=0.1) == float("inf")

    def test_radius_and_offset_limits(self):
        """Test that far vertices are ignored."""
        mesh = sheets([0.0025, -0.0025, 0.3])
        assert sheet_thickness(mesh, (0, 0, 0), (0, 0, 2), radius=0.1, max_offset=0.01) == pytest.approx(0.005)
        assert sheet_thickness(mesh, (1, 0, 0), (0, 0, 1), radius=0.1) == float("inf")


class TestTiming:
    """Test per-phase timing summaries."""

    def test_means_and_fraction(self):
        """Test averaged phases and the meshing share of total time."""
        stats = [
            FusionStats(preprocess_s=0.1, allocate_s=0.2, fuse_s=0.3, finalize_s=0.4),
            FusionStats(preprocess_s=0.3, allocate_s=0.2, fuse_s=0.1, finalize_s=0.4),
        ]
        report = timing_report(stats, mesh_times=[2.0])

        assert report.frames == 2
        assert report.phases["preprocess_s"] == pytest.approx(0.2)
        assert report.fusion_s == pytest.approx(1.0)
        assert report.mesh_s == pytest.approx(1.0)
        assert report.meshing_fraction == pytest.approx(0.5)
        assert set(PHASES) <= set(report.as_dict())

    def test_zero_time(self):
        """Test that zero total time gives a zero meshing fraction."""
        assert timing_report([FusionStats()]).meshing_fraction == 0.0

    def test_no_frames(self):
        """Test that an empty frame list raises InputError."""
        with pytest.raises(InputError):
            timing_report([])


class TestReports:
    """Test report and CSV files."""

    def test_format(self):
        """Test key = value formatting."""
        text = format_report({"rmse": 0.25, "count": 3, "ok": True, "mode": "dir"}, "accuracy")
        assert text == "# accuracy\nrmse = 0.25\ncount = 3\nok = true\nmode = dir\n"

    def test_report_round_trip(self, tmp_path):
        """Test that written reports read back with their types."""
        values = {"rmse": 0.0012, "count": 42, "mode": "dir-rcn-p2pl", "ok": False}
        path = write_report(values, tmp_path / "out" / "report.txt", "summary")
        assert read_report(path) == values

    def test_values_containing_hash(self, tmp_path):
        """Test that a # inside a value is not taken for a comment."""
        values = {"mesh": "out/run #2/mesh.ply", "scene": "scenes/a#b.yaml", "rmse": 0.5}
        path = write_report(values, tmp_path / "report.txt", "paths")

        assert path.read_text().startswith("# paths\n")
        assert read_report(path) == values

    def test_csv_columns(self, tmp_path):
        """Test fixed column order, empty missing values and ignored extras."""
        path = write_csv(
            [{"mode": "def-vp", "rmse": 0.5, "extra": 1}, {"mode": "dir-rc-p2pl", "error": "boom"}],
            tmp_path / "sweep.csv",
            columns=("mode", "rmse", "error"),
        )
        rows = read_csv(path)

        assert path.read_text().splitlines()[0] == "mode,rmse,error"
        assert rows == [
            {"mode": "def-vp", "rmse": "0.5", "error": ""},
            {"mode": "dir-rc-p2pl", "rmse": "", "error": "boom"},
        ]
