"""
Neighborhood regularization of combined MC indices.

Cells are swept in eight parity classes so that no two cells updated at the
same time are face neighbors. Each corner bit of a slot is replaced by the
strict majority of the slot itself and the linked slots of the three face
neighbors sharing that corner; ties keep the bit. A flip only happens when
most linked neighbors disagree, so the number of disagreeing shared corners
never grows.

Slots of neighboring cells are linked when both are set and their initial
orientations point the same way. Links are fixed for the whole pass.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..volume.block_map import pack_coords
from .tables import CORNER_OFFSETS, SIGN_NORMALS


logger = logging.getLogger(__name__)

UNSET = -1
DEFAULT_SWEEPS = 2


def _corner_flips() -> np.ndarray:
    flips = np.empty((8, 3), dtype=np.int64)
    for c, offset in enumerate(CORNER_OFFSETS):
        for axis in range(3):
            target = offset.copy()
            target[axis] = 1 - target[axis]
            flips[c, axis] = int(np.flatnonzero((CORNER_OFFSETS == target).all(axis=1))[0])
    return flips


# Corner reached by mirroring a corner across the face perpendicular to an axis
CORNER_FLIP = _corner_flips()


@dataclass
class CombinedGrid:
    """
    Combined MC indices of all surface cells.

    Attributes:
        cells: (N, 3) cell coordinates, sorted by packed key
        slots: (N, 2) combined indices, UNSET where a slot is empty
        orientation: (N, 2, 3) slot orientations taken before regularization
    """
    cells: np.ndarray
    slots: np.ndarray
    orientation: Optional[np.ndarray] = None
    keys: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.cells = np.asarray(self.cells, dtype=np.int64).reshape(-1, 3)
        self.slots = np.asarray(self.slots, dtype=np.int64).reshape(-1, 2)
        keys = pack_coords(self.cells)
        order = np.argsort(keys, kind="stable")
        if np.any(order != np.arange(order.shape[0])):
            self.cells = self.cells[order]
            self.slots = self.slots[order]
            if self.orientation is not None:
                self.orientation = np.asarray(self.orientation)[order]
            keys = keys[order]
        self.keys = keys
        if self.orientation is None:
            self.orientation = slot_orientation(self.slots)

    def __len__(self) -> int:
        return int(self.cells.shape[0])

    def rows_of(self, cells: np.ndarray) -> np.ndarray:
        """Row index of each cell, -1 where the cell is not in the grid."""
        query = pack_coords(cells)
        if len(self) == 0:
            return np.full(query.shape[0], -1, dtype=np.int64)
        pos = np.clip(np.searchsorted(self.keys, query), 0, len(self) - 1)
        return np.where(self.keys[pos] == query, pos, -1)

    def neighbor_rows(self, axis: int, step: int) -> np.ndarray:
        offset = np.zeros(3, dtype=np.int64)
        offset[axis] = step
        return self.rows_of(self.cells + offset)


def slot_orientation(slots: np.ndarray) -> np.ndarray:
    """Sign-only orientation of each set slot, zero for empty slots."""
    slots = np.asarray(slots, dtype=np.int64)
    set_ = slots >= 0
    return np.where(set_[..., None], SIGN_NORMALS[np.where(set_, slots, 0)], 0.0)


def _links(grid: CombinedGrid, rows: np.ndarray, slot: int, nbr: np.ndarray, other: int) -> np.ndarray:
    """Whether slot ``slot`` of ``rows`` is linked to slot ``other`` of ``nbr``."""
    ok = (nbr >= 0) & (grid.slots[rows, slot] >= 0)
    safe = np.where(ok, nbr, 0)
    ok &= grid.slots[safe, other] >= 0
    dots = np.einsum("ij,ij->i", grid.orientation[rows, slot], grid.orientation[safe, other])
    return ok & (dots > 0)


def _bit(values: np.ndarray, corner) -> np.ndarray:
    return (values >> corner) & 1


def regularize(grid: CombinedGrid, sweeps: int = DEFAULT_SWEEPS) -> int:
    """
    Make corner signs of face-adjacent cells agree by local majority.

    Args:
        grid: Combined indices, updated in place
        sweeps: Number of passes over all parity classes

    Returns:
        Number of corner bits flipped
    """
    n = len(grid)
    if n == 0 or sweeps <= 0:
        return 0

    neighbors = {
        (axis, side): grid.neighbor_rows(axis, 1 if side else -1)
        for axis in range(3)
        for side in (0, 1)
    }
    parity = (grid.cells % 2) @ np.array([1, 2, 4])
    classes = [np.flatnonzero(parity == p) for p in range(8)]
    changes = 0

    for _ in range(sweeps):
        for rows in classes:
            if rows.size == 0:
                continue
            for slot in (0, 1):
                active = rows[grid.slots[rows, slot] >= 0]
                if active.size == 0:
                    continue
                current = grid.slots[active, slot]
                updated = current.copy()
                for corner in range(8):
                    own = _bit(current, corner)
                    inside = own.copy()
                    total = np.ones_like(own)
                    for axis in range(3):
                        nbr = neighbors[(axis, int(CORNER_OFFSETS[corner, axis]))][active]
                        mirrored = CORNER_FLIP[corner, axis]
                        for other in (0, 1):
                            link = _links(grid, active, slot, nbr, other)
                            values = grid.slots[np.where(link, nbr, 0), other]
                            inside += link * _bit(np.maximum(values, 0), mirrored)
                            total += link
                    flip_in = (2 * inside > total) & (own == 0)
                    flip_out = (2 * inside < total) & (own == 1)
                    updated |= flip_in.astype(np.int64) << corner
                    updated &= ~(flip_out.astype(np.int64) << corner)
                changed = updated != current
                changes += int(np.sum(_popcount(current ^ updated)))
                grid.slots[active[changed], slot] = updated[changed]

    logger.debug(f"Regularization flipped {changes} corner bits in {n} cells")
    return changes


def _popcount(values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=np.int64)
    return sum((values >> c) & 1 for c in range(8))


def count_disagreements(grid: CombinedGrid) -> int:
    """
    Count shared corners where linked slots of face neighbors disagree.

    Each face-adjacent pair is visited once through its + neighbor; every
    pair of linked slots contributes the number of its four shared corners
    with different sign bits.
    """
    if len(grid) == 0:
        return 0
    rows = np.arange(len(grid))
    total = 0
    for axis in range(3):
        nbr = grid.neighbor_rows(axis, 1)
        shared = np.flatnonzero(CORNER_OFFSETS[:, axis] == 1)
        for slot in (0, 1):
            for other in (0, 1):
                link = _links(grid, rows, slot, nbr, other)
                if not link.any():
                    continue
                mine = grid.slots[link, slot]
                theirs = grid.slots[nbr[link], other]
                for corner in shared:
                    total += int(np.sum(_bit(mine, corner) != _bit(theirs, CORNER_FLIP[corner, axis])))
    return total
