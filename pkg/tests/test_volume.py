#!/usr/bin/env python
"""
Tests for direction sectors and the sparse voxel volume.
Run with: pytest tests/test_volume.py
"""

import math
import sys
import threading
from pathlib import Path

# Add src to path
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

import numpy as np
import pytest

from dtsdf.errors import ContractError, SnapshotError, VolumeCapacityError
from dtsdf.volume import (
    DIRECTION_THRESHOLD,
    UNDIRECTED,
    BlockMap,
    Direction,
    applicable_directions,
    direction_weight,
    load_volume,
    opposite,
    save_volume,
    voxel_array_stats,
    voxel_at,
)


def random_unit_vectors(count, seed=0):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=(count, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


class TestDirections:
    """Test direction vectors and sector assignment."""

    def test_six_unit_directions(self):
        """Test that there are six unit axis directions in opposite pairs."""
        assert len(Direction) == 6
        for d in Direction:
            assert np.linalg.norm(d.vector) == pytest.approx(1.0)
            np.testing.assert_array_equal(d.vector, -opposite(d).vector)
            assert opposite(opposite(d)) is d

    def test_direction_weight_examples(self):
        """Test direction_weight on axis-aligned and diagonal normals."""
        assert direction_weight(np.array([0.0, 1.0, 0.0]), Direction.Y_POS) == 1.0
        assert direction_weight(np.array([0.0, 1.0, 0.0]), Direction.Y_NEG) == -1.0
        n = np.array([1.0, 1.0, 0.0]) / math.sqrt(2)
        assert direction_weight(n, Direction.X_POS) == pytest.approx(0.70710678)

    def test_direction_weight_rejects_non_unit(self):
        """Test that a non-unit normal is a contract violation."""
        with pytest.raises(ContractError):
            direction_weight(np.array([2.0, 0.0, 0.0]), Direction.X_POS)
        with pytest.raises(ContractError):
            applicable_directions(np.array([0.0, 0.0, 0.0]))

    def test_direction_weight_antisymmetric(self):
        """Test that opposite directions have negated weights."""
        for n in random_unit_vectors(200):
            for d in Direction:
                assert direction_weight(n, d) == -direction_weight(n, opposite(d))

    def test_applicable_directions_examples(self):
        """Test sector assignment on the documented normals."""
        assert applicable_directions(np.array([1.0, 0.0, 0.0])) == {Direction.X_POS}
        n = np.array([1.0, 1.0, 0.0]) / math.sqrt(2)
        assert applicable_directions(n) == {Direction.X_POS, Direction.Y_POS}
        n = np.array([1.0, 1.0, 1.0]) / math.sqrt(3)
        assert applicable_directions(n) == {Direction.X_POS, Direction.Y_POS, Direction.Z_POS}

    def test_applicable_direction_count_property(self):
        """Test that every unit normal maps to one, two or three directions."""
        for n in random_unit_vectors(100_000, seed=1)[::10]:
            assert 1 <= len(applicable_directions(n)) <= 3

    def test_threshold_is_strict(self):
        """Test that a normal exactly at sin(pi/8) is excluded from that sector."""
        s = DIRECTION_THRESHOLD
        n = np.array([s, math.sqrt(1.0 - s * s), 0.0])
        dirs = applicable_directions(n)
        assert dirs == {Direction.Y_POS}

    def test_labels(self):
        """Test human readable direction labels."""
        assert [d.label for d in Direction] == ["X+", "X-", "Y+", "Y-", "Z+", "Z-"]


class TestBlockMap:
    """Test block allocation and voxel lookup."""

    def test_truncation_default(self):
        """Test tau is four voxels by default."""
        volume = BlockMap(0.01)
        assert volume.truncation == pytest.approx(0.04)

    def test_allocate_idempotent(self):
        """Test that allocating twice leaves existing arrays untouched."""
        volume = BlockMap(0.01)
        volume.allocate((0, 0, 0), {Direction.X_POS})
        voxel = volume.voxel_at_cell((1, 2, 3), Direction.X_POS)
        voxel.sdf = 0.02
        voxel.weight = 3.0
        volume.allocate((0, 0, 0), {Direction.X_POS})
        assert volume.voxel_at_cell((1, 2, 3), Direction.X_POS).sdf == 0.02
        assert len(volume) == 1

    def test_allocation_mask_union(self):
        """Test that allocation masks accumulate requested directions."""
        volume = BlockMap(0.01)
        volume.allocate((0, 0, 0), {Direction.X_POS})
        block = volume.allocate((0, 0, 0), {Direction.Y_NEG})
        assert block.directions == [Direction.X_POS, Direction.Y_NEG]
        assert block.allocation_mask == (1 << Direction.X_POS) | (1 << Direction.Y_NEG)

    def test_fresh_allocation_zero(self):
        """Test that new arrays start with zero weight and sdf."""
        volume = BlockMap(0.01)
        volume.allocate((2, -1, 0), {Direction.Z_NEG})
        sdf, weight = volume.block_arrays((2, -1, 0), Direction.Z_NEG)
        assert not sdf.any()
        assert not weight.any()

    def test_voxel_at_floor(self):
        """Test that lookups floor world coordinates."""
        volume = BlockMap(0.01)
        volume.allocate((0, 0, 0), {Direction.X_POS})
        volume.allocate((-1, 0, 0), {Direction.X_POS})
        voxel = voxel_at(volume, (0.0, 0.0, 0.0), Direction.X_POS)
        assert voxel.block_coord == (0, 0, 0)
        assert voxel.index == (0, 0, 0)
        voxel = volume.voxel_at((-0.001, 0.0, 0.0), Direction.X_POS)
        assert voxel.cell == (-1, 0, 0)
        assert voxel.block_coord == (-1, 0, 0)
        assert voxel.index == (7, 0, 0)

    def test_unallocated_is_absent(self):
        """Test that unallocated blocks and channels read as absence."""
        volume = BlockMap(0.01)
        assert volume.voxel_at((1.0, 1.0, 1.0), Direction.X_POS) is None
        assert volume.get_block((5, 5, 5)) is None
        volume.allocate((0, 0, 0), {Direction.X_POS})
        assert volume.voxel_at((0.0, 0.0, 0.0), Direction.X_NEG) is None
        assert (5, 5, 5) not in volume

    def test_position_round_trip(self):
        """Test voxel_at(position_of(v)) == v for every voxel of a block."""
        volume = BlockMap(0.02)
        volume.allocate((1, -2, 0), {UNDIRECTED})
        for cell in volume.block_cells((1, -2, 0)):
            voxel = volume.voxel_at_cell(cell, UNDIRECTED)
            assert volume.voxel_at(volume.position_of(voxel), UNDIRECTED) == voxel

    def test_capacity_error(self):
        """Test that exceeding max_blocks raises an out-of-memory error."""
        volume = BlockMap(0.01, max_blocks=2)
        volume.allocate((0, 0, 0), {Direction.X_POS})
        volume.allocate((1, 0, 0), {Direction.X_POS})
        volume.allocate((1, 0, 0), {Direction.Y_POS})
        with pytest.raises(VolumeCapacityError):
            volume.allocate((2, 0, 0), {Direction.X_POS})
        with pytest.raises(MemoryError):
            volume.allocate((3, 0, 0), {Direction.X_POS})

    def test_concurrent_allocate(self):
        """Test concurrent allocation of shared and distinct blocks."""
        volume = BlockMap(0.01)
        blocks = []

        def worker(i):
            blocks.append(volume.allocate((0, 0, 0), {Direction.X_POS}))
            volume.allocate((i, 1, 0), {Direction.X_POS})

        threads = [threading.Thread(target=worker, args=(i,)) for i in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()

        assert all(b is blocks[0] for b in blocks)
        assert len(volume) == 9

    def test_gather_missing_reads_zero_weight(self):
        """Test that gathers over missing blocks report weight 0."""
        volume = BlockMap(0.01)
        volume.allocate((0, 0, 0), {UNDIRECTED})
        volume.voxel_at_cell((1, 1, 1), UNDIRECTED).sdf = -0.01
        volume.voxel_at_cell((1, 1, 1), UNDIRECTED).weight = 2.0
        sdf, weight = volume.gather(np.array([[1, 1, 1], [100, 0, 0]]), UNDIRECTED)
        np.testing.assert_allclose(sdf, [-0.01, 0.0])
        np.testing.assert_allclose(weight, [2.0, 0.0])

    def test_recycle_reuses_slots(self):
        """Test that recycling evicts far blocks and freed slots are reused."""
        volume = BlockMap(0.01)
        volume.allocate((0, 0, 0), {Direction.X_POS})
        volume.allocate((100, 0, 0), {Direction.X_POS})
        far = volume.voxel_at_cell((800, 0, 0), Direction.X_POS)
        far.sdf = 0.03
        slots_before = volume.pool(Direction.X_POS).capacity

        removed = volume.recycle(center=(0.0, 0.0, 0.0), radius=1.0)
        assert removed == 1
        assert volume.get_block((100, 0, 0)) is None

        block = volume.allocate((50, 0, 0), {Direction.X_POS})
        assert block.slots[Direction.X_POS] == far.slot
        assert volume.voxel_at_cell((400, 0, 0), Direction.X_POS).sdf == 0.0
        assert volume.pool(Direction.X_POS).capacity == slots_before

    def test_lock_shared_by_channel_pool(self):
        """Test that voxels of one channel share its pool lock and channels do not."""
        volume = BlockMap(0.01)
        volume.allocate((0, 0, 0), {Direction.X_POS, Direction.Y_POS})
        volume.allocate((1, 0, 0), {Direction.X_POS})
        a = volume.voxel_at_cell((0, 0, 0), Direction.X_POS)
        b = volume.voxel_at_cell((12, 3, 1), Direction.X_POS)
        other = volume.voxel_at_cell((0, 0, 0), Direction.Y_POS)

        assert a.lock is b.lock
        assert a.lock is volume.pool(Direction.X_POS).accumulate_lock
        assert other.lock is not a.lock


class TestVoxelArrayStats:
    """Test the voxel-array statistic."""

    def test_empty(self):
        """Test that an empty map reports zero."""
        assert voxel_array_stats(BlockMap(0.01)) == (0, 0.0)

    def test_single_block(self):
        """Test one block with one array."""
        volume = BlockMap(0.01)
        volume.allocate((0, 0, 0), {Direction.X_POS})
        assert voxel_array_stats(volume) == (1, 1.0)

    def test_mean(self):
        """Test two blocks with one and three arrays."""
        volume = BlockMap(0.01)
        volume.allocate((0, 0, 0), {Direction.X_POS})
        volume.allocate((1, 0, 0), {Direction.X_POS, Direction.Y_POS, Direction.Z_NEG})
        assert voxel_array_stats(volume) == (2, 2.0)


class TestSnapshot:
    """Test binary volume snapshots."""

    def test_round_trip(self, tmp_path):
        """Test that save/load restores every block and value."""
        volume = BlockMap(0.02, truncation_factor=3.0)
        volume.allocate((0, 0, 0), {Direction.X_POS, Direction.Z_NEG})
        volume.allocate((-3, 2, 1), {UNDIRECTED})
        rng = np.random.default_rng(3)
        for coord in volume.block_coords():
            for channel in range(7):
                arrays = volume.block_arrays(coord, channel)
                if arrays is not None:
                    arrays[0][...] = rng.uniform(-0.06, 0.06, arrays[0].shape)
                    arrays[1][...] = rng.uniform(0, 10, arrays[1].shape)

        path = tmp_path / "volume.dtsdf"
        save_volume(volume, path)
        loaded = load_volume(path)

        assert loaded.voxel_size == 0.02
        assert loaded.truncation == pytest.approx(volume.truncation)
        assert loaded.block_coords() == volume.block_coords()
        for coord in volume.block_coords():
            assert loaded.get_block(coord).allocation_mask == volume.get_block(coord).allocation_mask
            for channel in range(7):
                a = volume.block_arrays(coord, channel)
                b = loaded.block_arrays(coord, channel)
                if a is None:
                    assert b is None
                else:
                    np.testing.assert_array_equal(a[0], b[0])
                    np.testing.assert_array_equal(a[1], b[1])

    def test_empty_round_trip(self, tmp_path):
        """Test that an empty volume survives a round trip."""
        path = tmp_path / "empty.dtsdf"
        save_volume(BlockMap(0.01), path)
        assert len(load_volume(path)) == 0

    def test_foreign_file_rejected(self, tmp_path):
        """Test that files without the magic header are rejected."""
        path = tmp_path / "junk.dtsdf"
        path.write_bytes(b"not a volume at all, just some bytes.....")
        with pytest.raises(SnapshotError):
            load_volume(path)

    def test_truncated_file_rejected(self, tmp_path):
        """Test that truncated block data is rejected."""
        volume = BlockMap(0.01)
        volume.allocate((0, 0, 0), {Direction.X_POS})
        path = tmp_path / "volume.dtsdf"
        save_volume(volume, path)
        path.write_bytes(path.read_bytes()[:-100])
        with pytest.raises(SnapshotError):
            load_volume(path)

    def test_missing_file(self, tmp_path):
        """Test that a missing snapshot raises FileNotFoundError."""
        with pytest.raises(FileNotFoundError):
            load_volume(tmp_path / "absent.dtsdf")
