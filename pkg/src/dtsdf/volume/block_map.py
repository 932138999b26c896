"""
Sparse block-hashed voxel volume.

Blocks are addressed by integer block coordinates through a dict. Voxel
payload lives in one growable pool per channel (six directions plus the
undirected baseline), and a block only records which pool slot holds each
of its allocated channels. Pools make every fusion and meshing step a
vectorized gather or scatter over flat voxel indices.
"""

import logging
import threading
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from ..errors import ConfigError, VolumeCapacityError
from .directions import NUM_CHANNELS, UNDIRECTED, Direction


logger = logging.getLogger(__name__)


BlockCoord = Tuple[int, int, int]

DEFAULT_BLOCK_SIZE = 8
DEFAULT_TRUNCATION_FACTOR = 4.0


class ChannelPool:
    """Slot-allocated storage for the voxel arrays of one channel."""

    FIELDS = ("sdf", "weight", "acc_sdf", "acc_weight")

    def __init__(self, block_size: int, initial_capacity: int = 64):
        self.block_size = block_size
        self.voxels_per_block = block_size ** 3
        self.capacity = 0
        self.sdf = np.zeros((0, self.voxels_per_block))
        self.weight = np.zeros((0, self.voxels_per_block))
        self.acc_sdf = np.zeros((0, self.voxels_per_block))
        self.acc_weight = np.zeros((0, self.voxels_per_block))
        self._free: List[int] = []
        self._next = 0
        # one lock for the pool; accumulate() holds it per sample
        self.accumulate_lock = threading.Lock()
        self._grow(initial_capacity)

    def _grow(self, capacity: int) -> None:
        for name in self.FIELDS:
            old = getattr(self, name)
            new = np.zeros((capacity, self.voxels_per_block))
            new[: old.shape[0]] = old
            setattr(self, name, new)
        self.capacity = capacity

    def acquire(self) -> int:
        """Return a zeroed slot, growing the pool when full."""
        if self._free:
            return self._free.pop()
        if self._next >= self.capacity:
            self._grow(max(2 * self.capacity, 64))
        slot = self._next
        self._next += 1
        return slot

    def release(self, slot: int) -> None:
        """Zero a slot and make it available for reuse."""
        for name in self.FIELDS:
            getattr(self, name)[slot] = 0.0
        self._free.append(slot)

    @property
    def slots_in_use(self) -> int:
        return self._next - len(self._free)

    def flat(self, name: str) -> np.ndarray:
        """1-D view of a field, indexed by slot * B^3 + local index."""
        return getattr(self, name).reshape(-1)


@dataclass
class VoxelBlock:
    """
    Fixed B^3 cube of voxels with lazily allocated channel arrays.

    ``slots[c]`` is the pool slot of channel ``c`` or -1 when that channel's
    array does not exist.
    """
    block_coord: BlockCoord
    slots: List[int] = field(default_factory=lambda: [-1] * NUM_CHANNELS)

    @property
    def allocation_mask(self) -> int:
        """Bit c is set iff channel c is allocated."""
        mask = 0
        for channel, slot in enumerate(self.slots):
            if slot >= 0:
                mask |= 1 << channel
        return mask

    def has(self, channel: int) -> bool:
        return self.slots[int(channel)] >= 0

    @property
    def directions(self) -> List[Direction]:
        """Allocated directions (the undirected channel excluded)."""
        return [Direction(c) for c in range(UNDIRECTED) if self.slots[c] >= 0]

    @property
    def array_count(self) -> int:
        return sum(1 for slot in self.slots if slot >= 0)


class Voxel:
    """
    Reference to one voxel of one channel.

    Field access reads and writes the owning pool, so a reference stays
    valid while its block is allocated.
    """

    __slots__ = ("_pool", "slot", "local", "block_coord", "index", "channel")

    def __init__(
        self,
        pool: ChannelPool,
        slot: int,
        block_coord: BlockCoord,
        index: Tuple[int, int, int],
        channel: int,
    ):
        self._pool = pool
        self.slot = slot
        self.block_coord = block_coord
        self.index = index
        self.channel = channel
        b = pool.block_size
        self.local = (index[0] * b + index[1]) * b + index[2]

    def _get(self, name: str) -> float:
        return float(getattr(self._pool, name)[self.slot, self.local])

    def _set(self, name: str, value: float) -> None:
        getattr(self._pool, name)[self.slot, self.local] = value

    sdf = property(lambda self: self._get("sdf"), lambda self, v: self._set("sdf", v))
    weight = property(lambda self: self._get("weight"), lambda self, v: self._set("weight", v))
    acc_sdf = property(
        lambda self: self._get("acc_sdf"), lambda self, v: self._set("acc_sdf", v)
    )
    acc_weight = property(
        lambda self: self._get("acc_weight"), lambda self, v: self._set("acc_weight", v)
    )

    @property
    def lock(self) -> threading.Lock:
        """Accumulation lock of the whole channel pool, shared by all its voxels."""
        return self._pool.accumulate_lock

    @property
    def cell(self) -> Tuple[int, int, int]:
        """Global lattice cell index."""
        b = self._pool.block_size
        return tuple(int(self.block_coord[a] * b + self.index[a]) for a in range(3))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Voxel):
            return NotImplemented
        return (
            self._pool is other._pool
            and self.slot == other.slot
            and self.local == other.local
        )

    def __hash__(self) -> int:
        return hash((id(self._pool), self.slot, self.local))

    def __repr__(self) -> str:
        return (
            f"Voxel(cell={self.cell}, channel={self.channel}, "
            f"sdf={self.sdf:.6f}, weight={self.weight:.3f})"
        )


class BlockMap:
    """Hash map from block coordinates to VoxelBlocks, plus channel pools."""

    def __init__(
        self,
        voxel_size: float,
        truncation_factor: float = DEFAULT_TRUNCATION_FACTOR,
        block_size: int = DEFAULT_BLOCK_SIZE,
        max_blocks: Optional[int] = None,
    ):
        """
        Create an empty volume.

        Args:
            voxel_size: Edge length of one voxel in meters
            truncation_factor: tau as a multiple of voxel_size
            block_size: Block side length B in voxels
            max_blocks: Allocation limit; None means unlimited

        Raises:
            ConfigError: If sizes are not positive or truncation_factor < 1
        """
        if not voxel_size > 0:
            raise ConfigError(f"voxel_size must be positive, got: {voxel_size}")
        if truncation_factor < 1:
            raise ConfigError(f"truncation_factor must be at least 1, got: {truncation_factor}")
        if block_size < 1:
            raise ConfigError(f"block_size must be positive, got: {block_size}")

        self.voxel_size = float(voxel_size)
        self.truncation_factor = float(truncation_factor)
        self.block_size = int(block_size)
        self.max_blocks = max_blocks
        self._blocks: Dict[BlockCoord, VoxelBlock] = {}
        self._pools = [ChannelPool(self.block_size) for _ in range(NUM_CHANNELS)]
        self._lock = threading.Lock()

    @property
    def truncation(self) -> float:
        """Truncation distance tau in meters."""
        return self.truncation_factor * self.voxel_size

    @property
    def block_extent(self) -> float:
        """Edge length of a block in meters."""
        return self.block_size * self.voxel_size

    def __len__(self) -> int:
        return len(self._blocks)

    def __contains__(self, block_coord: object) -> bool:
        return block_coord in self._blocks

    def __iter__(self) -> Iterator[VoxelBlock]:
        return iter(list(self._blocks.values()))

    def pool(self, channel: int) -> ChannelPool:
        return self._pools[int(channel)]

    def get_block(self, block_coord: Sequence[int]) -> Optional[VoxelBlock]:
        """Return the block at ``block_coord`` or None when unallocated."""
        return self._blocks.get(_as_coord(block_coord))

    def block_coords(self) -> List[BlockCoord]:
        """Allocated block coordinates in sorted order."""
        return sorted(self._blocks)

    def channels_in_use(self) -> List[int]:
        """Channels with at least one allocated array."""
        return [c for c, p in enumerate(self._pools) if p.slots_in_use > 0]

    def allocate(self, block_coord: Sequence[int], channels) -> VoxelBlock:
        """
        Ensure a block and the requested channel arrays exist.

        Args:
            block_coord: Integer block index
            channels: Iterable of Direction values or channel ids

        Returns:
            The (possibly pre-existing) block

        Raises:
            VolumeCapacityError: If a new block would exceed max_blocks
        """
        coord = _as_coord(block_coord)
        with self._lock:
            block = self._blocks.get(coord)
            if block is None:
                if self.max_blocks is not None and len(self._blocks) >= self.max_blocks:
                    raise VolumeCapacityError(
                        f"Block capacity exhausted ({self.max_blocks} blocks)"
                    )
                block = VoxelBlock(coord)
                self._blocks[coord] = block
            for channel in channels:
                channel = int(channel)
                if block.slots[channel] < 0:
                    block.slots[channel] = self._pools[channel].acquire()
            return block

    def allocate_many(self, block_coords: np.ndarray, channel: int) -> int:
        """
        Allocate one channel for every row of an (N, 3) block coordinate array.

        Returns:
            Number of blocks that did not exist before
        """
        block_coords = np.asarray(block_coords, dtype=np.int64).reshape(-1, 3)
        if block_coords.shape[0] == 0:
            return 0
        before = len(self._blocks)
        for coord in unpack_coords(np.unique(pack_coords(block_coords))):
            self.allocate(coord, (channel,))
        return len(self._blocks) - before

    def voxel_at(self, world_point: Sequence[float], channel) -> Optional[Voxel]:
        """
        Voxel whose lattice cell contains ``world_point``.

        Returns:
            Voxel reference, or None when the block or channel is unallocated
        """
        point = np.asarray(world_point, dtype=np.float64)
        cell = np.floor(point / self.voxel_size).astype(np.int64)
        return self.voxel_at_cell(cell, channel)

    def voxel_at_cell(self, cell: Sequence[int], channel) -> Optional[Voxel]:
        """Voxel at a global lattice cell index, or None when unallocated."""
        b = self.block_size
        cell = [int(c) for c in cell]
        block_coord = tuple(c // b for c in cell)
        block = self._blocks.get(block_coord)
        if block is None or block.slots[int(channel)] < 0:
            return None
        index = tuple(c - bc * b for c, bc in zip(cell, block_coord))
        return Voxel(
            self._pools[int(channel)], block.slots[int(channel)], block_coord, index, int(channel)
        )

    def position_of(self, voxel: Voxel) -> np.ndarray:
        """World position of a voxel sample (minimum corner of its cell)."""
        return np.asarray(voxel.cell, dtype=np.float64) * self.voxel_size

    def lookup(self, cells: np.ndarray, channel: int) -> np.ndarray:
        """
        Flat pool indices of global lattice cells.

        Args:
            cells: Integer array of shape (N, 3)
            channel: Storage channel

        Returns:
            int64 array of shape (N,), -1 where the block or channel is missing
        """
        cells = np.asarray(cells, dtype=np.int64).reshape(-1, 3)
        if cells.shape[0] == 0:
            return np.zeros(0, dtype=np.int64)
        b = self.block_size
        block_coords = np.floor_divide(cells, b)
        local = cells - block_coords * b
        unique, inverse = np.unique(pack_coords(block_coords), return_inverse=True)
        slots = np.full(unique.shape[0], -1, dtype=np.int64)
        for i, coord in enumerate(unpack_coords(unique)):
            block = self._blocks.get((int(coord[0]), int(coord[1]), int(coord[2])))
            if block is not None:
                slots[i] = block.slots[channel]
        slot = slots[inverse.reshape(-1)]
        flat = slot * (b ** 3) + (local[:, 0] * b + local[:, 1]) * b + local[:, 2]
        return np.where(slot >= 0, flat, -1)

    def gather(self, cells: np.ndarray, channel: int) -> Tuple[np.ndarray, np.ndarray]:
        """
        Read sdf and weight at lattice cells; missing data reads as weight 0.

        Returns:
            Tuple of (sdf, weight) arrays shaped like ``cells[..., 0]``
        """
        cells = np.asarray(cells, dtype=np.int64)
        shape = cells.shape[:-1]
        flat = self.lookup(cells.reshape(-1, 3), channel)
        pool = self._pools[channel]
        valid = flat >= 0
        sdf = np.zeros(flat.shape[0])
        weight = np.zeros(flat.shape[0])
        sdf[valid] = pool.flat("sdf")[flat[valid]]
        weight[valid] = pool.flat("weight")[flat[valid]]
        return sdf.reshape(shape), weight.reshape(shape)

    def lattice_values(
        self, points: np.ndarray, channel: int
    ) -> Tuple[np.ndarray, np.ndarray]:
        """Gather sdf and weight for the lattice cells containing world points."""
        points = np.asarray(points, dtype=np.float64)
        cells = np.floor(points / self.voxel_size).astype(np.int64)
        return self.gather(cells, channel)

    def block_cells(self, block_coord: Sequence[int]) -> np.ndarray:
        """Global cell indices of all voxels of a block, shape (B^3, 3), pool order."""
        b = self.block_size
        grid = np.stack(np.meshgrid(np.arange(b), np.arange(b), np.arange(b), indexing="ij"), -1)
        return grid.reshape(-1, 3) + np.asarray(block_coord, dtype=np.int64) * b

    def allocated_voxels(self, channel: int) -> Tuple[np.ndarray, np.ndarray]:
        """
        Cells and flat indices of every voxel in allocated arrays of a channel.

        Returns:
            Tuple of (cells (N, 3), flat indices (N,)), blocks in sorted order
        """
        b3 = self.block_size ** 3
        cells, flats = [], []
        for coord in self.block_coords():
            slot = self._blocks[coord].slots[channel]
            if slot < 0:
                continue
            cells.append(self.block_cells(coord))
            flats.append(slot * b3 + np.arange(b3))
        if not cells:
            return np.zeros((0, 3), dtype=np.int64), np.zeros(0, dtype=np.int64)
        return np.concatenate(cells), np.concatenate(flats)

    def block_arrays(
        self, block_coord: Sequence[int], channel: int
    ) -> Optional[Tuple[np.ndarray, np.ndarray]]:
        """(sdf, weight) views shaped (B, B, B) of one block channel, or None."""
        block = self.get_block(block_coord)
        if block is None or block.slots[channel] < 0:
            return None
        b = self.block_size
        pool = self._pools[channel]
        slot = block.slots[channel]
        return pool.sdf[slot].reshape(b, b, b), pool.weight[slot].reshape(b, b, b)

    def halo_arrays(
        self, block_coord: Sequence[int], channel: int
    ) -> Tuple[np.ndarray, np.ndarray]:
        """
        (sdf, weight) of a block extended by one lattice layer on the + sides.

        The extra layer comes from the seven + neighbors; missing data reads
        as weight 0. Shapes are (B + 1, B + 1, B + 1).
        """
        b = self.block_size
        sdf = np.zeros((b + 1, b + 1, b + 1))
        weight = np.zeros((b + 1, b + 1, b + 1))
        bx, by, bz = _as_coord(block_coord)
        for dx in (0, 1):
            for dy in (0, 1):
                for dz in (0, 1):
                    arrays = self.block_arrays((bx + dx, by + dy, bz + dz), channel)
                    if arrays is None:
                        continue
                    src = tuple(slice(0, b if d == 0 else 1) for d in (dx, dy, dz))
                    dst = tuple(slice(0, b) if d == 0 else slice(b, b + 1) for d in (dx, dy, dz))
                    sdf[dst] = arrays[0][src]
                    weight[dst] = arrays[1][src]
        return sdf, weight

    def remove(self, block_coord: Sequence[int]) -> bool:
        """Free a block and all its arrays. Returns False if it was absent."""
        with self._lock:
            block = self._blocks.pop(_as_coord(block_coord), None)
            if block is None:
                return False
            for channel, slot in enumerate(block.slots):
                if slot >= 0:
                    self._pools[channel].release(slot)
            return True

    def recycle(self, center: Sequence[float], radius: float) -> int:
        """
        Evict blocks whose center lies farther than ``radius`` from ``center``.

        Returns:
            Number of removed blocks
        """
        center = np.asarray(center, dtype=np.float64)
        half = 0.5 * self.block_extent
        doomed = [
            coord
            for coord in self.block_coords()
            if np.linalg.norm(np.asarray(coord) * self.block_extent + half - center) > radius
        ]
        for coord in doomed:
            self.remove(coord)
        if doomed:
            logger.debug(f"Recycled {len(doomed)} blocks outside {radius:.2f} m")
        return len(doomed)


def _as_coord(block_coord: Sequence[int]) -> BlockCoord:
    return (int(block_coord[0]), int(block_coord[1]), int(block_coord[2]))


# 21 bits per axis, coordinates in [-2^20, 2^20)
_PACK_BITS = 21
_PACK_OFFSET = 1 << (_PACK_BITS - 1)
_PACK_MASK = (1 << _PACK_BITS) - 1


def pack_coords(coords: np.ndarray) -> np.ndarray:
    """Pack (N, 3) integer coordinates into sortable int64 keys."""
    c = np.asarray(coords, dtype=np.int64).reshape(-1, 3) + _PACK_OFFSET
    return (c[:, 0] << (2 * _PACK_BITS)) | (c[:, 1] << _PACK_BITS) | c[:, 2]


def unpack_coords(keys: np.ndarray) -> np.ndarray:
    """Inverse of pack_coords."""
    keys = np.asarray(keys, dtype=np.int64)
    out = np.empty((keys.shape[0], 3), dtype=np.int64)
    out[:, 0] = (keys >> (2 * _PACK_BITS)) & _PACK_MASK
    out[:, 1] = (keys >> _PACK_BITS) & _PACK_MASK
    out[:, 2] = keys & _PACK_MASK
    return out - _PACK_OFFSET


def voxel_array_stats(block_map: BlockMap) -> Tuple[int, float]:
    """
    Block count and mean number of allocated voxel arrays per block.

    Returns:
        (block_count, mean arrays per block); the mean is 0 for an empty map
    """
    count = len(block_map)
    if count == 0:
        return 0, 0.0
    arrays = sum(block.array_count for block in block_map)
    return count, arrays / count


def allocate(block_map: BlockMap, block_coord: Sequence[int], directions) -> VoxelBlock:
    """Module-level form of BlockMap.allocate."""
    return block_map.allocate(block_coord, directions)


def voxel_at(block_map: BlockMap, world_point: Sequence[float], channel) -> Optional[Voxel]:
    """Module-level form of BlockMap.voxel_at."""
    return block_map.voxel_at(world_point, channel)


def position_of(block_map: BlockMap, voxel: Voxel) -> np.ndarray:
    """Module-level form of BlockMap.position_of."""
    return block_map.position_of(voxel)
