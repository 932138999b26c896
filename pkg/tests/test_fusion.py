#!/usr/bin/env python
"""
Tests for normal estimation, weighting, traversal and frame fusion.
Run with: pytest tests/test_fusion.py
"""

import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

# Add src to path
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

import numpy as np
import pytest

from dtsdf.config import FusionConfig
from dtsdf.errors import ConfigError, InputError
from dtsdf.fusion import (
    DepthFrame,
    Intrinsics,
    NormalRayCasting,
    Pose,
    RayCasting,
    Reconstruction,
    VoxelProjection,
    accumulate,
    bilateral_filter_depth,
    dropoff_weight,
    estimate_normals,
    finalize,
    fuse_frame,
    fusion_weight,
    get_fusion_strategy,
    point_to_plane,
    traverse_batch,
    traverse_voxels,
)
from dtsdf.scenes import Box, Plane, Scene, Sphere, circular_trajectory, render_depth
from dtsdf.volume import UNDIRECTED, BlockMap, Direction


WIDTH, HEIGHT = 64, 48
PLANE_DEPTH = 1.5


def plane_frame(normal=(0.0, 0.0, -1.0), width=WIDTH, height=HEIGHT):
    scene = Scene([Plane((0.0, 0.0, PLANE_DEPTH), normal)], "plane")
    intrinsics = Intrinsics.for_resolution(width, height)
    return render_depth(scene, Pose.identity(), intrinsics, width, height)


def sphere_frames(count=3):
    scene = Scene([Sphere((0.0, 0.0, 0.0), 0.3)], "sphere")
    intrinsics = Intrinsics.for_resolution(WIDTH, HEIGHT)
    return [
        render_depth(scene, pose, intrinsics, WIDTH, HEIGHT, timestamp=k / 30.0)
        for k, pose in enumerate(circular_trajectory(radius=1.2, n_frames=count, height=0.2))
    ]


def new_volume(config):
    return BlockMap(config.voxel_size, config.truncation_factor, config.block_size)


def fuse_plane(label, width=WIDTH, height=HEIGHT, repeats=1, **overrides):
    config = FusionConfig.from_mode(label, **overrides)
    block_map = new_volume(config)
    frame = plane_frame(width=width, height=height)
    normals = estimate_normals(frame, config)
    for _ in range(repeats):
        fuse_frame(block_map, frame, normals, config, threads=1)
    return block_map, config


def densest_column(block_map, channel):
    """(x, y) cell column with the most observed voxels."""
    cells, flats = block_map.allocated_voxels(channel)
    weight = block_map.pool(channel).flat("weight")[flats]
    cells = cells[weight > 0]
    columns, counts = np.unique(cells[:, :2], axis=0, return_counts=True)
    return columns[counts.argmax()]


def zero_crossing_depth(block_map, channel, voxel_size):
    """Depth where the sdf along the densest column changes from outside to inside."""
    x, y = densest_column(block_map, channel)
    ks = np.arange(130, 171)
    cells = np.stack([np.full_like(ks, x), np.full_like(ks, y), ks], axis=1)
    sdf, weight = block_map.gather(cells, channel)
    for i in range(len(ks) - 1):
        if weight[i] > 0 and weight[i + 1] > 0 and sdf[i] >= 0 > sdf[i + 1]:
            return (ks[i] + sdf[i] / (sdf[i] - sdf[i + 1])) * voxel_size
    raise AssertionError("no zero crossing found")


def angle_deg(a, b):
    cos = np.clip(np.sum(a * b, axis=-1), -1.0, 1.0)
    return np.degrees(np.arccos(cos))


class TestNormals:
    """Test bilateral filtering and normal estimation."""

    def test_fronto_parallel_plane(self):
        """Test that a fronto-parallel plane gives normals within 1 degree of -z."""
        normals = estimate_normals(plane_frame())

        assert normals.valid.sum() > 0.8 * WIDTH * HEIGHT
        deviation = angle_deg(normals.normals[normals.valid], np.array([0.0, 0.0, -1.0]))
        assert deviation.max() < 1.0

    def test_tilted_plane(self):
        """Test that a plane tilted 45 degrees about x gives normals 45 degrees off axis."""
        expected = np.array([0.0, -1.0, -1.0]) / math.sqrt(2.0)
        normals = estimate_normals(plane_frame(normal=expected))
        # rows and columns whose filter window is cut by the image border are biased
        interior = np.zeros_like(normals.valid)
        interior[4:-4, 4:-4] = True

        assert normals.valid[interior].all()
        valid = normals.normals[normals.valid & interior]
        assert angle_deg(valid, expected).max() < 2.0
        off_axis = angle_deg(valid, np.array([0.0, 0.0, -1.0]))
        assert np.abs(off_axis - 45.0).max() < 2.0

    def test_isolated_pixel_invalid(self):
        """Test that a single valid pixel among invalid ones has no normal."""
        depth = np.full((HEIGHT, WIDTH), np.nan)
        depth[20, 30] = 1.0
        frame = DepthFrame(depth, Intrinsics.for_resolution(WIDTH, HEIGHT), Pose.identity())

        assert not estimate_normals(frame).valid.any()

    def test_normals_stay_on_their_face_at_crease(self):
        """Test that pixels beside a box edge get their own face's normal."""
        box = Box.from_euler((0.0, 0.0, 1.5), (0.3, 0.3, 0.3), (0.0, 45.0, 0.0))
        intrinsics = Intrinsics.for_resolution(WIDTH, HEIGHT)
        frame = render_depth(Scene([box], "box"), Pose.identity(), intrinsics, WIDTH, HEIGHT)
        normals = estimate_normals(frame, FusionConfig(bilateral_radius=0))
        faces = np.array([[-1.0, 0.0, -1.0], [1.0, 0.0, -1.0]]) / math.sqrt(2.0)

        valid = normals.normals[normals.valid]
        deviation = np.minimum(angle_deg(valid, faces[0]), angle_deg(valid, faces[1]))
        # the edge projects between columns 31 and 32
        assert normals.valid[HEIGHT // 2, 30:34].all()
        assert deviation.max() < 0.5

    def test_normals_beside_small_depth_step(self):
        """Test that a 2% depth step below the jump limit does not tilt neighbors."""
        depth = np.full((HEIGHT, WIDTH), 1.5)
        depth[:, WIDTH // 2:] = 1.53
        frame = DepthFrame(depth, Intrinsics.for_resolution(WIDTH, HEIGHT), Pose.identity())
        normals = estimate_normals(frame, FusionConfig(bilateral_radius=0))

        assert normals.valid[HEIGHT // 2, WIDTH // 2 - 2 : WIDTH // 2 + 2].all()
        deviation = angle_deg(normals.normals[normals.valid], np.array([0.0, 0.0, -1.0]))
        assert deviation.max() < 0.5

    def test_bilateral_keeps_constant_image(self):
        """Test that filtering a constant image leaves it unchanged."""
        depth = np.full((10, 12), 2.0)
        np.testing.assert_allclose(bilateral_filter_depth(depth), depth)

    def test_bilateral_ignores_invalid_pixels(self):
        """Test that invalid pixels neither change nor leak into neighbors."""
        depth = np.full((10, 12), 2.0)
        depth[5, 5] = np.nan
        filtered = bilateral_filter_depth(depth)

        assert np.isnan(filtered[5, 5])
        np.testing.assert_allclose(filtered[np.isfinite(depth)], 2.0)

    def test_bilateral_preserves_depth_edges(self):
        """Test that a depth step far beyond sigma_range is not blurred."""
        depth = np.full((10, 12), 1.0)
        depth[:, 6:] = 3.0
        filtered = bilateral_filter_depth(depth, radius=2, sigma_spatial=2.0, sigma_range=0.05)

        np.testing.assert_allclose(filtered, depth, atol=1e-6)


class TestWeighting:
    """Test distances and measurement weights."""

    def test_point_to_plane_examples(self):
        """Test the signed point-to-plane distance on the documented examples."""
        p = np.array([0.0, 0.0, 1.0])
        n = np.array([0.0, 0.0, 1.0])

        assert point_to_plane(p, n, np.zeros(3)) == pytest.approx(1.0)
        assert point_to_plane(p, n, p) == 0.0
        assert point_to_plane(p, n, np.array([0.5, 7.0, 1.0])) == pytest.approx(0.0)

    def test_fusion_weight_examples(self):
        """Test combined weights for head-on, distant and grazing observations."""
        view = np.array([0.0, 0.0, 1.0])
        n = np.array([0.0, 0.0, -1.0])

        assert fusion_weight(1.0, n, view) == pytest.approx(1.0)
        assert fusion_weight(2.0, n, view) == pytest.approx(0.25)
        assert fusion_weight(1.0, np.array([1.0, 0.0, 0.0]), view) == 0.0

    def test_fusion_weight_direction_factor(self):
        """Test that directional weights multiply in the direction agreement."""
        view = np.array([0.0, 0.0, 1.0])
        n = np.array([0.0, 0.0, -1.0])

        assert fusion_weight(1.0, n, view, Direction.Z_NEG) == pytest.approx(1.0)
        assert fusion_weight(1.0, n, view, Direction.Z_POS) == 0.0

    def test_dropoff_weight(self):
        """Test full weight up to one voxel behind, then a linear fade to zero at -tau."""
        d = np.array([0.02, 0.0, -0.01, -0.025, -0.04, -0.05])
        np.testing.assert_allclose(dropoff_weight(d, 0.04, 0.01), [1.0, 1.0, 1.0, 0.5, 0.0, 0.0])

    def test_dropoff_disabled_when_epsilon_reaches_tau(self):
        """Test that epsilon >= tau leaves every weight unchanged."""
        np.testing.assert_allclose(dropoff_weight(np.array([-0.03, 0.01]), 0.02, 0.02), [1.0, 1.0])

    def test_fusion_weight_clamped(self):
        """Test that weights are clamped to max_weight."""
        view = np.array([0.0, 0.0, 1.0])
        n = np.array([0.0, 0.0, -1.0])

        assert fusion_weight(0.5, n, view, max_weight=0.5) == 0.5


def brute_force_cells(origin, direction, t_min, t_max):
    """Cells a segment spends positive length in, ordered by entry time."""
    a = origin + t_min * direction
    b = origin + t_max * direction
    lo = np.floor(np.minimum(a, b)).astype(int) - 1
    hi = np.floor(np.maximum(a, b)).astype(int) + 1
    grid = np.stack(
        np.meshgrid(*(np.arange(lo[i], hi[i] + 1) for i in range(3)), indexing="ij"), -1
    ).reshape(-1, 3)
    with np.errstate(divide="ignore", invalid="ignore"):
        t0 = (grid - origin) / direction
        t1 = (grid + 1 - origin) / direction
    moving = direction != 0
    inside = (origin >= grid) & (origin < grid + 1)
    near = np.where(moving, np.minimum(t0, t1), np.where(inside, -np.inf, np.inf)).max(axis=1)
    far = np.where(moving, np.maximum(t0, t1), np.where(inside, np.inf, -np.inf)).min(axis=1)
    enter = np.maximum(near, t_min)
    leave = np.minimum(far, t_max)
    hit = leave > enter
    order = np.argsort(enter[hit], kind="stable")
    return [tuple(int(v) for v in c) for c in grid[hit][order]]


class TestTraversal:
    """Test the grid walk against a brute-force intersection oracle."""

    def test_axis_walk(self):
        """Test a 2.5 voxel walk along +x from a cell center."""
        cells = traverse_voxels(np.array([0.5, 0.5, 0.5]), np.array([1.0, 0.0, 0.0]), 0.0, 2.5)
        assert cells == [(0, 0, 0), (1, 0, 0), (2, 0, 0)]

    def test_voxel_size_scaling(self):
        """Test that the same walk in 10 mm voxels visits the same cells."""
        cells = traverse_voxels(
            np.array([0.005, 0.005, 0.005]), np.array([1.0, 0.0, 0.0]), 0.0, 0.025, 0.01
        )
        assert cells == [(0, 0, 0), (1, 0, 0), (2, 0, 0)]

    def test_empty_segment(self):
        """Test that t_min == t_max visits nothing."""
        assert traverse_voxels(np.zeros(3) + 0.5, np.array([1.0, 0.0, 0.0]), 1.0, 1.0) == []

    def test_diagonal_alternates(self):
        """Test that a diagonal from a cell center matches the oracle."""
        origin = np.array([0.5, 0.5, 0.5])
        d = np.array([1.0, 1.0 + 1e-9, 0.0])
        d /= np.linalg.norm(d)
        cells = traverse_voxels(origin, d, 0.0, 3.0)

        assert cells == brute_force_cells(origin, d, 0.0, 3.0)
        assert cells[0] == (0, 0, 0)

    def test_random_rays_match_oracle(self):
        """Test 10^4 random segments against brute-force intersection, set and order."""
        rng = np.random.default_rng(7)
        n = 10000
        origins = rng.uniform(-5.0, 5.0, size=(n, 3))
        directions = rng.normal(size=(n, 3))
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
        t_min = rng.uniform(-2.0, 0.0, size=n)
        t_max = t_min + rng.uniform(0.0, 6.0, size=n)

        rays, cells = traverse_batch(origins, directions, t_min, t_max)
        order = np.argsort(rays, kind="stable")
        rays, cells = rays[order], cells[order]
        bounds = np.searchsorted(rays, np.arange(n + 1))

        for i in range(n):
            walked = [tuple(int(v) for v in c) for c in cells[bounds[i]:bounds[i + 1]]]
            assert walked == brute_force_cells(origins[i], directions[i], t_min[i], t_max[i]), i


class TestAccumulation:
    """Test the two-phase accumulate/finalize update."""

    @pytest.fixture
    def voxel(self):
        block_map = BlockMap(0.01, 4.0)
        block_map.allocate((0, 0, 0), (UNDIRECTED,))
        return block_map.voxel_at_cell((1, 2, 3), UNDIRECTED)

    def test_accumulate_sums(self, voxel):
        """Test that accumulation adds w d and w."""
        accumulate(voxel, 0.5, 1.0)
        accumulate(voxel, 0.0, 1.0)

        assert voxel.acc_sdf == pytest.approx(0.5)
        assert voxel.acc_weight == pytest.approx(2.0)

    def test_accumulate_order_independent(self, voxel):
        """Test that reversed accumulation order gives the same sums."""
        accumulate(voxel, 0.0, 1.0)
        accumulate(voxel, 0.5, 1.0)

        assert voxel.acc_sdf == pytest.approx(0.5)
        assert voxel.acc_weight == pytest.approx(2.0)

    def test_finalize_example(self, voxel):
        """Test D = (W D + S_d) / (W + S_w) on W=2, D=1, S_d=0.5, S_w=2."""
        voxel.sdf = 1.0
        voxel.weight = 2.0
        voxel.acc_sdf = 0.5
        voxel.acc_weight = 2.0
        finalize(voxel, truncation=10.0)

        assert voxel.sdf == pytest.approx(0.625)
        assert voxel.weight == pytest.approx(4.0)
        assert voxel.acc_sdf == 0.0
        assert voxel.acc_weight == 0.0

    def test_finalize_without_samples(self, voxel):
        """Test that finalize with S_w = 0 leaves the voxel unchanged."""
        voxel.sdf = 0.01
        voxel.weight = 3.0
        finalize(voxel, truncation=0.04)

        assert voxel.sdf == pytest.approx(0.01)
        assert voxel.weight == 3.0

    def test_finalize_clamps(self, voxel):
        """Test that finalize clamps sdf to tau and weight to max_weight."""
        accumulate(voxel, 5.0, 300.0)
        finalize(voxel, truncation=0.04, max_weight=255.0)

        assert voxel.sdf == pytest.approx(0.04)
        assert voxel.weight == 255.0

    def test_serial_iterations_match_batch_average(self, voxel):
        """Test that 10^4 single-sample iterations give sum(w d) / sum(w)."""
        rng = np.random.default_rng(3)
        d = rng.uniform(-1.0, 1.0, 10000)
        w = rng.uniform(0.1, 2.0, 10000)
        for di, wi in zip(d, w):
            accumulate(voxel, di, wi)
            finalize(voxel, truncation=10.0, max_weight=1e12)

        assert voxel.sdf == pytest.approx(np.sum(w * d) / np.sum(w), abs=1e-9)

    def test_parallel_accumulation_matches(self, voxel):
        """Test that concurrent accumulation then one finalize matches the closed form."""
        rng = np.random.default_rng(4)
        d = rng.uniform(-1.0, 1.0, 10000)
        w = rng.uniform(0.1, 2.0, 10000)

        def work(part):
            for di, wi in zip(d[part::8], w[part::8]):
                accumulate(voxel, di, wi)

        with ThreadPoolExecutor(max_workers=8) as pool:
            list(pool.map(work, range(8)))
        assert voxel.acc_weight == pytest.approx(np.sum(w), rel=1e-9)

        finalize(voxel, truncation=10.0, max_weight=1e12)
        assert voxel.sdf == pytest.approx(np.sum(w * d) / np.sum(w), abs=1e-6)


class TestStrategies:
    """Test strategy selection."""

    @pytest.mark.parametrize(
        "label, expected",
        [("def-vp", VoxelProjection), ("dir-rc-p2pl", RayCasting), ("dir-rcn-p2pl", NormalRayCasting)],
    )
    def test_strategy_for_mode(self, label, expected):
        """Test that each mode maps to its strategy class."""
        assert type(get_fusion_strategy(FusionConfig.from_mode(label))) is expected

    def test_normals_requirement(self):
        """Test which configurations need a normal map."""
        assert not get_fusion_strategy(FusionConfig.from_mode("def-vp")).requires_normals
        assert get_fusion_strategy(FusionConfig.from_mode("dir-vp")).requires_normals
        assert get_fusion_strategy(FusionConfig.from_mode("def-rcn-p2pl")).requires_normals


class TestFuseFrame:
    """Test single-frame fusion on analytic planes."""

    @pytest.mark.parametrize(
        "label, channel",
        [
            ("def-vp", UNDIRECTED),
            ("def-rc-p2pl", UNDIRECTED),
            ("dir-rc-p2pl", Direction.Z_NEG),
            ("dir-rcn-p2pl", Direction.Z_NEG),
        ],
    )
    def test_plane_zero_crossing(self, label, channel):
        """Test that the fused zero crossing lies within half a voxel of the plane."""
        block_map, config = fuse_plane(label)
        depth = zero_crossing_depth(block_map, int(channel), config.voxel_size)

        assert abs(depth - PLANE_DEPTH) < 0.5 * config.voxel_size

    def test_directional_writes_single_direction(self):
        """Test that a plane facing the camera only feeds the -z direction."""
        block_map, _ = fuse_plane("dir-rcn-p2pl")
        assert block_map.channels_in_use() == [int(Direction.Z_NEG)]

    def test_repeated_frame_is_fixed_point(self):
        """Test that fusing the same frame again keeps sdf and grows weights."""
        once, config = fuse_plane("dir-rcn-p2pl")
        thrice, _ = fuse_plane("dir-rcn-p2pl", repeats=3)
        channel = int(Direction.Z_NEG)

        cells, _ = once.allocated_voxels(channel)
        sdf1, w1 = once.gather(cells, channel)
        sdf3, w3 = thrice.gather(cells, channel)
        observed = w1 > 0

        np.testing.assert_allclose(sdf3[observed], sdf1[observed], atol=1e-6)
        assert np.all(w3[observed] > w1[observed])

    @pytest.mark.parametrize("label", ["def-rc-p2pl", "dir-rcn-p2pl"])
    def test_weight_dropoff_behind_surface(self, label):
        """Test that ray casting fades weights behind the plane but keeps the surface."""
        faded, config = fuse_plane(label)
        flat, _ = fuse_plane(label, weight_dropoff=False)
        channel = UNDIRECTED if label.startswith("def") else int(Direction.Z_NEG)

        cells, _ = flat.allocated_voxels(channel)
        sdf_flat, w_flat = flat.gather(cells, channel)
        sdf_faded, w_faded = faded.gather(cells, channel)
        observed = w_flat > 0
        front = observed & (sdf_flat >= 0)
        deep = observed & (sdf_flat < -2.5 * config.voxel_size)

        assert deep.any()
        np.testing.assert_allclose(w_faded[front], w_flat[front])
        assert np.all(w_faded[deep] < w_flat[deep])
        depth = zero_crossing_depth(faded, channel, config.voxel_size)
        assert abs(depth - PLANE_DEPTH) < 0.5 * config.voxel_size

    def test_truncation_bound(self):
        """Test that every observed voxel satisfies |sdf| <= tau."""
        block_map, config = fuse_plane("def-vp")
        cells, _ = block_map.allocated_voxels(UNDIRECTED)
        sdf, weight = block_map.gather(cells, UNDIRECTED)

        assert np.all(np.abs(sdf[weight > 0]) <= config.truncation + 1e-12)

    def test_invalid_pixels_contribute_nothing(self):
        """Test that a frame without valid depth touches no voxel."""
        config = FusionConfig.from_mode("def-vp")
        block_map = new_volume(config)
        frame = DepthFrame(
            np.full((HEIGHT, WIDTH), np.nan), Intrinsics.for_resolution(WIDTH, HEIGHT), Pose()
        )
        stats = fuse_frame(block_map, frame, None, config, threads=1)

        assert stats.voxels_touched == 0
        assert len(block_map) == 0

    def test_missing_normals_rejected(self):
        """Test that RCN without a normal map is a configuration error."""
        config = FusionConfig.from_mode("dir-rcn-p2pl")
        with pytest.raises(ConfigError):
            fuse_frame(new_volume(config), plane_frame(), None, config)

    def test_invalid_pose_rejected(self):
        """Test that a non-orthonormal pose is an input error."""
        config = FusionConfig.from_mode("def-vp")
        frame = plane_frame()
        frame.pose = Pose(2.0 * np.eye(3), np.zeros(3))

        with pytest.raises(InputError):
            fuse_frame(new_volume(config), frame, None, config)

    def test_stats_phases(self):
        """Test that FusionStats phases add up to the total."""
        config = FusionConfig.from_mode("def-vp")
        stats = fuse_frame(new_volume(config), plane_frame(), None, config, threads=1)

        assert stats.pixels_processed == WIDTH * HEIGHT
        assert stats.blocks_allocated > 0
        assert stats.voxels_touched > 0
        phases = stats.preprocess_s + stats.allocate_s + stats.fuse_s + stats.finalize_s
        assert stats.total_s == pytest.approx(phases)


class TestThreadDeterminism:
    """Test that results do not depend on the worker count."""

    @pytest.mark.parametrize("label", ["dir-rcn-p2pl", "def-vp"])
    def test_one_vs_many_threads(self, label):
        """Test per-voxel agreement between 1 and 4 fusion threads."""
        config = FusionConfig.from_mode(label, voxel_size=0.02)
        frames = sphere_frames()
        serial = Reconstruction(config, threads=1)
        parallel = Reconstruction(config, threads=4)
        serial.integrate_all(frames)
        parallel.integrate_all(frames)

        assert serial.block_map.block_coords() == parallel.block_map.block_coords()
        for channel in serial.block_map.channels_in_use():
            cells, _ = serial.block_map.allocated_voxels(channel)
            sdf_a, w_a = serial.block_map.gather(cells, channel)
            sdf_b, w_b = parallel.block_map.gather(cells, channel)
            np.testing.assert_allclose(sdf_a, sdf_b, atol=1e-6)
            np.testing.assert_allclose(w_a, w_b, atol=1e-6)


class TestReconstruction:
    """Test the reconstruction session wrapper."""

    def test_integrate_estimates_normals(self):
        """Test that RCN sessions estimate normals themselves."""
        recon = Reconstruction(FusionConfig.from_mode("dir-rcn-p2pl", voxel_size=0.02), threads=1)
        stats = recon.integrate(plane_frame())

        assert recon.frames_fused == 1
        assert stats.voxels_touched > 0

    def test_summary(self):
        """Test summary totals after two frames."""
        recon = Reconstruction(FusionConfig.from_mode("def-vp", voxel_size=0.02), threads=1)
        recon.integrate_all(sphere_frames(2))
        summary = recon.summary()

        assert summary["frames"] == 2
        assert summary["blocks"] == len(recon.block_map)
        assert summary["arrays_per_block"] == pytest.approx(1.0)
        assert summary["total_s"] == pytest.approx(sum(s.total_s for s in recon.frame_stats))

    def test_extract_mesh_records_stats(self):
        """Test that mesh extraction is recorded with its timing."""
        recon = Reconstruction(FusionConfig.from_mode("def-vp", voxel_size=0.02), threads=1)
        recon.integrate_all(sphere_frames(2))
        mesh = recon.extract_mesh()

        assert mesh.triangle_count > 0
        assert len(recon.mesh_stats) == 1
        assert recon.mesh_stats[0].triangles == mesh.triangle_count
