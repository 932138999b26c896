"""
Direction sectors of the directional TSDF.

Each of the six directions is one signed coordinate axis. A surface sample
is written into every direction whose axis agrees with its normal by more
than sin(pi/8).
"""

import math
from enum import IntEnum
from typing import FrozenSet

import numpy as np

from ..errors import ContractError


DIRECTION_THRESHOLD = math.sin(math.pi / 8)

# Storage channel of the undirected baseline TSDF, after the six directions
UNDIRECTED = 6
NUM_CHANNELS = 7

UNIT_TOLERANCE = 1e-6


class Direction(IntEnum):
    """Signed coordinate axis; the value doubles as the storage channel."""
    X_POS = 0
    X_NEG = 1
    Y_POS = 2
    Y_NEG = 3
    Z_POS = 4
    Z_NEG = 5

    @property
    def axis(self) -> int:
        """Coordinate axis index (0 = x, 1 = y, 2 = z)."""
        return self.value // 2

    @property
    def sign(self) -> int:
        """+1 for positive directions, -1 for negative ones."""
        return -1 if self.value % 2 else 1

    @property
    def vector(self) -> np.ndarray:
        """Unit axis vector v_D."""
        return DIRECTION_VECTORS[self.value].copy()

    @property
    def label(self) -> str:
        """Short label such as ``X+``."""
        return "XYZ"[self.axis] + ("+" if self.sign > 0 else "-")

    def opposite(self) -> "Direction":
        """Direction along the same axis with the other sign."""
        return Direction(self.value ^ 1)


DIRECTION_VECTORS = np.array(
    [
        [1.0, 0.0, 0.0],
        [-1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, -1.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.0, 0.0, -1.0],
    ]
)


def opposite(direction: Direction) -> Direction:
    """Return the direction opposite to ``direction``."""
    return direction.opposite()


def _check_unit(n: np.ndarray) -> np.ndarray:
    n = np.asarray(n, dtype=np.float64)
    if n.shape != (3,):
        raise ContractError(f"normal must be a 3-vector, got shape {n.shape}")
    norm = float(np.linalg.norm(n))
    if not abs(norm - 1.0) <= UNIT_TOLERANCE:
        raise ContractError(f"normal must be unit length, got norm {norm}")
    return n


def direction_weight(n: np.ndarray, direction: Direction) -> float:
    """
    Direction-correspondence weight <n, v_D>.

    Args:
        n: Unit normal
        direction: Direction sector

    Returns:
        Dot product in [-1, 1]

    Raises:
        ContractError: If ``n`` is not unit length within 1e-6
    """
    n = _check_unit(n)
    return float(n[direction.axis] * direction.sign)


def applicable_directions(
    n: np.ndarray, threshold: float = DIRECTION_THRESHOLD
) -> FrozenSet[Direction]:
    """
    Directions a surface with normal ``n`` is fused into.

    Args:
        n: Unit normal
        threshold: Strict lower bound on <n, v_D>

    Returns:
        Set of one to three directions

    Raises:
        ContractError: If ``n`` is not unit length within 1e-6
    """
    n = _check_unit(n)
    weights = DIRECTION_VECTORS @ n
    return frozenset(Direction(i) for i in np.flatnonzero(weights > threshold))


def direction_weights(normals: np.ndarray) -> np.ndarray:
    """
    Vectorized <n, v_D> for every direction.

    Args:
        normals: Array of shape (N, 3)

    Returns:
        Array of shape (N, 6), column order of Direction values
    """
    normals = np.asarray(normals, dtype=np.float64)
    return normals @ DIRECTION_VECTORS.T


def direction_masks(
    normals: np.ndarray, threshold: float = DIRECTION_THRESHOLD
) -> np.ndarray:
    """Boolean (N, 6) membership of each normal in each direction sector."""
    return direction_weights(normals) > threshold
