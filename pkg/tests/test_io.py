#!/usr/bin/env python
"""
Tests for depth images, trajectories, meshes and datasets on disk.
Run with: pytest tests/test_io.py
"""

import math
import sys
from pathlib import Path

# Add src to path
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

import numpy as np
import pytest
from PIL import Image

from dtsdf.errors import (
    BitDepthError,
    ChannelCountError,
    ConfigError,
    DepthImageError,
    InputError,
    TrajectoryParseError,
)
from dtsdf.fusion import DepthFrame, Intrinsics, Pose
from dtsdf.io import (
    associate,
    depth_to_raw,
    export_mesh,
    load_dataset,
    load_depth_image,
    load_intrinsics,
    load_mesh,
    load_trajectory,
    read_raw_depth,
    save_dataset,
    save_depth_image,
    save_trajectory,
    scalar_colormap,
)
from dtsdf.io.trajectory import parse_trajectory_line
from dtsdf.meshing import TriangleMesh
from dtsdf.scenes import Scene, Sphere, circular_trajectory, render_sequence


def tetrahedron(scalars=None) -> TriangleMesh:
    vertices = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
    triangles = [[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]]
    return TriangleMesh(vertices, triangles, scalars)


class TestDepthImages:
    """Test 16-bit depth image handling."""

    def test_round_trip(self, tmp_path):
        """Test that quantized depths survive a PNG round trip."""
        depth = np.array([[0.5, 1.0002], [np.nan, 4.25]])
        path = save_depth_image(tmp_path / "d.png", depth)
        frame = load_depth_image(path)

        assert frame.shape == (2, 2)
        assert np.isnan(frame.depth[1, 0])
        np.testing.assert_allclose(frame.depth[~np.isnan(depth)], depth[~np.isnan(depth)], atol=1e-9)

    def test_raw_values(self, tmp_path):
        """Test that raw units are depth times 5000."""
        path = save_depth_image(tmp_path / "d.png", np.array([[1.0, 0.0]]))
        np.testing.assert_array_equal(read_raw_depth(path), [[5000, 0]])

    def test_zero_is_missing(self, tmp_path):
        """Test that raw 0 loads as NaN."""
        path = tmp_path / "z.png"
        Image.fromarray(np.array([[0, 1000]], dtype=np.uint16)).save(path)
        frame = load_depth_image(path)

        assert np.isnan(frame.depth[0, 0])
        assert frame.depth[0, 1] == pytest.approx(0.2)

    def test_custom_scale(self, tmp_path):
        """Test that the depth scale converts raw units to meters."""
        path = tmp_path / "mm.png"
        Image.fromarray(np.array([[1500]], dtype=np.uint16)).save(path)
        assert load_depth_image(path, scale=0.001).depth[0, 0] == pytest.approx(1.5)

    def test_default_intrinsics_scale_with_width(self, tmp_path):
        """Test that default intrinsics are scaled to the image width."""
        path = save_depth_image(tmp_path / "d.png", np.ones((240, 320)))
        intrinsics = load_depth_image(path).intrinsics
        kinect = Intrinsics.kinect()

        assert intrinsics.f == pytest.approx(kinect.f / 2)

    def test_eight_bit_rejected(self, tmp_path):
        """Test that 8-bit images raise BitDepthError."""
        path = tmp_path / "gray.png"
        Image.fromarray(np.zeros((4, 4), dtype=np.uint8)).save(path)

        with pytest.raises(BitDepthError):
            load_depth_image(path)

    def test_rgb_rejected(self, tmp_path):
        """Test that color images raise ChannelCountError."""
        path = tmp_path / "rgb.png"
        Image.fromarray(np.zeros((4, 4, 3), dtype=np.uint8)).save(path)

        with pytest.raises(ChannelCountError):
            load_depth_image(path)

    def test_not_an_image(self, tmp_path):
        """Test that unreadable files raise DepthImageError."""
        path = tmp_path / "text.png"
        path.write_text("not an image")

        with pytest.raises(DepthImageError):
            load_depth_image(path)

    def test_missing_file(self, tmp_path):
        """Test that a missing image raises FileNotFoundError."""
        with pytest.raises(FileNotFoundError):
            load_depth_image(tmp_path / "absent.png")

    def test_overflow_rejected(self):
        """Test that depths beyond the 16-bit range are not silently wrapped."""
        with pytest.raises(DepthImageError):
            depth_to_raw(np.array([[20.0]]))

    def test_invalid_scale(self, tmp_path):
        """Test that a non-positive scale is rejected."""
        with pytest.raises(DepthImageError):
            depth_to_raw(np.ones((1, 1)), scale=0.0)


class TestTrajectory:
    """Test trajectory text files."""

    def test_identity_line(self):
        """Test parsing a pose without rotation."""
        timestamp, pose = parse_trajectory_line("1.5 1 2 3 0 0 0 1", 1)

        assert timestamp == 1.5
        np.testing.assert_allclose(pose.rotation, np.eye(3), atol=1e-12)
        np.testing.assert_allclose(pose.translation, [1.0, 2.0, 3.0])

    def test_quaternion_normalized(self):
        """Test that non-unit quaternions are normalized."""
        _, pose = parse_trajectory_line("0 0 0 0 0 0 0 2", 1)
        np.testing.assert_allclose(pose.rotation, np.eye(3), atol=1e-12)

    def test_quarter_turn(self):
        """Test that a 90 degree turn about z maps x onto y."""
        s = math.sqrt(0.5)
        _, pose = parse_trajectory_line(f"0 0 0 0 0 0 {s} {s}", 1)
        np.testing.assert_allclose(pose.rotation @ [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], atol=1e-12)

    @pytest.mark.parametrize(
        "line",
        ["0 0 0 0 0 0 1", "0 0 0 0 0 0 0 1 9", "0 0 x 0 0 0 0 1", "0 0 0 0 0 0 0 0", "0 nan 0 0 0 0 0 1"],
    )
    def test_malformed_line(self, line):
        """Test that malformed records raise TrajectoryParseError."""
        with pytest.raises(TrajectoryParseError):
            parse_trajectory_line(line, 7)

    def test_error_reports_file_line(self, tmp_path):
        """Test that the reported line number counts comments and blanks."""
        path = tmp_path / "traj.txt"
        path.write_text("# header\n\n0 0 0 0 0 0 0 1\n1 0 0\n")

        with pytest.raises(TrajectoryParseError) as info:
            load_trajectory(path)
        assert info.value.line_number == 4
        assert "line 4" in str(info.value)

    def test_round_trip(self, tmp_path):
        """Test that saved poses load back unchanged."""
        poses = [(0.1 * k, pose) for k, pose in enumerate(circular_trajectory(radius=1.3, n_frames=5))]
        loaded = load_trajectory(save_trajectory(tmp_path / "t.txt", poses))

        assert len(loaded) == 5
        for (t, pose), (t2, pose2) in zip(poses, loaded):
            assert t2 == pytest.approx(t)
            np.testing.assert_allclose(pose2.rotation, pose.rotation, atol=1e-8)
            np.testing.assert_allclose(pose2.translation, pose.translation, atol=1e-8)

    def test_missing_file(self, tmp_path):
        """Test that a missing trajectory raises FileNotFoundError."""
        with pytest.raises(FileNotFoundError):
            load_trajectory(tmp_path / "absent.txt")


class TestMeshFiles:
    """Test PLY and OBJ export and import."""

    @pytest.mark.parametrize("suffix", ["ply", "obj"])
    def test_round_trip(self, tmp_path, suffix):
        """Test that geometry and connectivity survive export."""
        mesh = tetrahedron()
        loaded = load_mesh(export_mesh(mesh, tmp_path / f"tet.{suffix}"))

        np.testing.assert_allclose(loaded.vertices, mesh.vertices, atol=1e-6)
        np.testing.assert_array_equal(loaded.triangles, mesh.triangles)

    def test_scalars_as_quality(self, tmp_path):
        """Test that per-vertex scalars are written as colors and quality."""
        path = export_mesh(tetrahedron([0.0, 0.25, 0.5, 1.0]), tmp_path / "heat.ply")
        header = path.read_bytes().split(b"end_header")[0]
        loaded = load_mesh(path)

        assert b"property uchar red" in header
        assert b"property float quality" in header
        np.testing.assert_allclose(loaded.scalars, [0.0, 0.25, 0.5, 1.0])

    @pytest.mark.parametrize("suffix", ["ply", "obj"])
    def test_empty_mesh(self, tmp_path, suffix):
        """Test that an empty mesh writes a valid file."""
        loaded = load_mesh(export_mesh(TriangleMesh(), tmp_path / f"empty.{suffix}"))
        assert loaded.vertex_count == 0
        assert loaded.is_empty()

    def test_explicit_format(self, tmp_path):
        """Test that an explicit format overrides the suffix."""
        path = export_mesh(tetrahedron(), tmp_path / "mesh.out", format="obj")
        assert path.read_text().startswith("# dtsdf mesh")

    def test_unsupported_format(self, tmp_path):
        """Test that unknown formats raise ConfigError."""
        with pytest.raises(ConfigError):
            export_mesh(tetrahedron(), tmp_path / "mesh.stl")

    def test_ascii_ply(self, tmp_path):
        """Test reading an ASCII PLY file."""
        path = tmp_path / "ascii.ply"
        path.write_text(
            "ply\nformat ascii 1.0\nelement vertex 3\n"
            "property float x\nproperty float y\nproperty float z\n"
            "element face 1\nproperty list uchar int vertex_indices\nend_header\n"
            "0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n"
        )
        mesh = load_mesh(path)

        assert mesh.vertex_count == 3
        np.testing.assert_array_equal(mesh.triangles, [[0, 1, 2]])

    def test_truncated_ply(self, tmp_path):
        """Test that a truncated binary body raises InputError."""
        path = export_mesh(tetrahedron(), tmp_path / "tet.ply")
        path.write_bytes(path.read_bytes()[:-10])

        with pytest.raises(InputError):
            load_mesh(path)

    def test_obj_polygons(self, tmp_path):
        """Test that OBJ quads are fan-triangulated with relative indices."""
        path = tmp_path / "quad.obj"
        path.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvt 0 0\nf 1/1 2/1 3/1 -1/1\n")
        mesh = load_mesh(path)

        np.testing.assert_array_equal(mesh.triangles, [[0, 1, 2], [0, 2, 3]])

    def test_obj_index_out_of_range(self, tmp_path):
        """Test that faces referencing missing vertices raise InputError."""
        path = tmp_path / "bad.obj"
        path.write_text("v 0 0 0\nf 1 2 3\n")

        with pytest.raises(InputError):
            load_mesh(path)

    def test_missing_mesh(self, tmp_path):
        """Test that a missing mesh raises FileNotFoundError."""
        with pytest.raises(FileNotFoundError):
            load_mesh(tmp_path / "absent.ply")

    def test_colormap(self):
        """Test colormap end points, midpoint, clipping and NaN."""
        colors = scalar_colormap([0.0, 0.5, 1.0, 2.0, np.nan])
        np.testing.assert_array_equal(
            colors, [[0, 0, 255], [128, 0, 128], [255, 0, 0], [255, 0, 0], [0, 0, 255]]
        )


class TestDataset:
    """Test dataset directories."""

    @pytest.fixture
    def frames(self):
        """Two rendered frames of a sphere."""
        scene = Scene([Sphere((0.0, 0.0, 0.0), 0.5)])
        poses = circular_trajectory(radius=2.0, n_frames=2)
        return render_sequence(scene, poses, Intrinsics.for_resolution(64, 48), 64, 48)

    def test_associate(self):
        """Test nearest-timestamp pairing with a gap limit."""
        pairs = associate([0.0, 1.0, 2.0], [0.01, 1.5, 2.015], max_difference=0.02)
        assert pairs == [(0, 0), (2, 2)]

    def test_associate_unsorted_poses(self):
        """Test that pose order in the file does not matter."""
        assert associate([1.0, 2.0], [2.001, 0.999]) == [(0, 1), (1, 0)]

    def test_associate_without_poses(self):
        """Test that no poses give no pairs."""
        assert associate([0.0], []) == []

    def test_round_trip(self, tmp_path, frames):
        """Test that saved frames load back with poses and intrinsics."""
        source = save_dataset(tmp_path / "ds", frames)
        loaded = list(load_dataset(tmp_path / "ds"))

        assert len(source) == 2
        assert (source.width, source.height) == (64, 48)
        assert source.intrinsics.f == pytest.approx(frames[0].intrinsics.f)
        for original, frame in zip(frames, loaded):
            valid = np.isfinite(original.depth)
            np.testing.assert_array_equal(np.isfinite(frame.depth), valid)
            np.testing.assert_allclose(frame.depth[valid], original.depth[valid], atol=1.5e-4)
            np.testing.assert_allclose(frame.pose.rotation, original.pose.rotation, atol=1e-8)
            assert frame.timestamp == pytest.approx(original.timestamp, abs=1e-6)

    def test_frame_limit(self, tmp_path, frames):
        """Test that frames(limit) stops early."""
        source = save_dataset(tmp_path / "ds", frames)
        assert len(list(source.frames(limit=1))) == 1

    def test_frame_without_pose(self, tmp_path):
        """Test that frames without poses cannot be saved."""
        frame = DepthFrame(np.ones((4, 4)), Intrinsics.for_resolution(4, 3))
        with pytest.raises(InputError):
            save_dataset(tmp_path / "ds", [frame])

    def test_missing_image(self, tmp_path, frames):
        """Test that a listed but missing image raises InputError."""
        save_dataset(tmp_path / "ds", frames)
        (tmp_path / "ds" / "depth" / "000001.png").unlink()

        with pytest.raises(InputError):
            load_dataset(tmp_path / "ds")

    def test_unmatched_depth_skipped(self, tmp_path, frames):
        """Test that depth images without a close pose are dropped."""
        save_dataset(tmp_path / "ds", frames)
        with open(tmp_path / "ds" / "depth.txt", "a") as f:
            f.write("9.0 depth/000000.png\n")

        assert len(load_dataset(tmp_path / "ds")) == 2

    def test_intrinsics_errors(self, tmp_path):
        """Test missing and unknown intrinsics keys."""
        missing = tmp_path / "missing.txt"
        missing.write_text("f = 500\ncx = 1\nwidth = 4\nheight = 3\n")
        unknown = tmp_path / "unknown.txt"
        unknown.write_text("f = 500\ncx = 1\ncy = 1\nwidth = 4\nheight = 3\nfx = 2\n")

        with pytest.raises(InputError):
            load_intrinsics(missing)
        with pytest.raises(InputError):
            load_intrinsics(unknown)

    def test_missing_directory(self, tmp_path):
        """Test that a missing dataset directory raises FileNotFoundError."""
        with pytest.raises(FileNotFoundError):
            load_dataset(tmp_path / "absent")

    def test_pose_type(self, tmp_path, frames):
        """Test that loaded poses are Pose instances."""
        source = save_dataset(tmp_path / "ds", frames)
        assert isinstance(source.frame(0).pose, Pose)
