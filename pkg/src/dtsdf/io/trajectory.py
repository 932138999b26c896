"""
Trajectory text files: one ``timestamp tx ty tz qx qy qz qw`` record per line.

Poses are world-from-camera. Lines starting with ``#`` and blank lines are
ignored; quaternions are normalized on load.
"""

import logging
from pathlib import Path
from typing import Iterable, List, Tuple, Union

import numpy as np
from scipy.spatial.transform import Rotation

from ..errors import TrajectoryParseError
from ..fusion.frame import Pose


logger = logging.getLogger(__name__)

StampedPose = Tuple[float, Pose]

HEADER = "# timestamp tx ty tz qx qy qz qw"


def parse_trajectory_line(line: str, line_number: int) -> StampedPose:
    """
    Parse one trajectory record.

    Raises:
        TrajectoryParseError: If the line does not hold 8 finite numbers or the quaternion is zero
    """
    fields = line.split()
    if len(fields) != 8:
        raise TrajectoryParseError(f"expected 8 values, got {len(fields)}", line_number)
    try:
        values = np.array([float(v) for v in fields])
    except ValueError as e:
        raise TrajectoryParseError(str(e), line_number) from None
    if not np.all(np.isfinite(values)):
        raise TrajectoryParseError("non-finite value", line_number)

    quat = values[4:]
    norm = np.linalg.norm(quat)
    if norm < 1e-12:
        raise TrajectoryParseError("zero quaternion", line_number)
    rotation = Rotation.from_quat(quat / norm).as_matrix()
    return float(values[0]), Pose(rotation, values[1:4])


def load_trajectory(path: Union[str, Path]) -> List[StampedPose]:
    """
    Load a trajectory file.

    Args:
        path: Text file in timestamp/translation/quaternion format

    Returns:
        List of (timestamp, Pose) in file order

    Raises:
        FileNotFoundError: If the file does not exist
        TrajectoryParseError: On the first malformed line, with its line number
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Trajectory file not found: {path}")

    poses = []
    with open(path, "r", encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            poses.append(parse_trajectory_line(line, line_number))

    logger.debug(f"Loaded {len(poses)} poses from {path}")
    return poses


def format_pose(timestamp: float, pose: Pose) -> str:
    """One trajectory line for a pose."""
    qx, qy, qz, qw = Rotation.from_matrix(pose.rotation).as_quat()
    tx, ty, tz = pose.translation
    return (
        f"{timestamp:.6f} {tx:.9f} {ty:.9f} {tz:.9f} "
        f"{qx:.9f} {qy:.9f} {qz:.9f} {qw:.9f}"
    )


def save_trajectory(path: Union[str, Path], poses: Iterable[StampedPose]) -> Path:
    """
    Write (timestamp, Pose) pairs in trajectory text format.

    Args:
        path: Output file; parent directories are created
        poses: Stamped poses

    Returns:
        Path of the written file
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [HEADER] + [format_pose(t, pose) for t, pose in poses]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path
