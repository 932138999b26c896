"""
RGB-D style datasets on disk.

A dataset directory holds:

    depth.txt         "timestamp relative/path.png" per line, '#' comments
    trajectory.txt    ground-truth poses, see :mod:`dtsdf.io.trajectory`
    intrinsics.txt    key = value lines: f, cx, cy, width, height, depth_scale
    depth/            16-bit depth images

Depth images are paired with the pose whose timestamp is closest, provided
the two differ by at most ``max_time_difference``.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
import yaml

from ..errors import InputError
from ..fusion.frame import DepthFrame, Intrinsics, Pose
from .depth import DEFAULT_DEPTH_SCALE, MAX_RAW, load_depth_image, save_depth_image
from .trajectory import load_trajectory, save_trajectory


logger = logging.getLogger(__name__)


DEPTH_LIST = "depth.txt"
TRAJECTORY_FILE = "trajectory.txt"
INTRINSICS_FILE = "intrinsics.txt"
DEPTH_DIR = "depth"
MAX_TIME_DIFFERENCE = 0.02

INTRINSICS_KEYS = ("f", "cx", "cy", "width", "height", "depth_scale")


@dataclass
class Association:
    timestamp: float
    depth_path: Path
    pose: Pose


@dataclass
class DatasetSource:
    """Posed depth images of one recorded or rendered sequence."""
    root: Path
    intrinsics: Intrinsics
    width: int
    height: int
    depth_scale: float = DEFAULT_DEPTH_SCALE
    associations: List[Association] = field(default_factory=list)

    def __post_init__(self):
        if not self.depth_scale > 0:
            raise InputError(f"depth_scale must be positive, got: {self.depth_scale}")
        missing = [a.depth_path for a in self.associations if not a.depth_path.exists()]
        if missing:
            raise InputError(f"{len(missing)} depth images are missing, first: {missing[0]}")

    def __len__(self) -> int:
        return len(self.associations)

    def frame(self, index: int) -> DepthFrame:
        """Load the index-th frame with its pose."""
        entry = self.associations[index]
        frame = load_depth_image(
            entry.depth_path, self.depth_scale, self.intrinsics, entry.pose, entry.timestamp
        )
        if frame.shape != (self.height, self.width):
            raise InputError(
                f"{entry.depth_path}: image is {frame.width}x{frame.height}, "
                f"dataset declares {self.width}x{self.height}"
            )
        return frame

    def frames(self, limit: Optional[int] = None) -> Iterator[DepthFrame]:
        """Frames in timestamp order, optionally only the first ``limit``."""
        count = len(self) if limit is None else min(limit, len(self))
        for index in range(count):
            yield self.frame(index)

    def __iter__(self) -> Iterator[DepthFrame]:
        return self.frames()


def _read_key_values(path: Path) -> Dict[str, Any]:
    values: Dict[str, Any] = {}
    for line_number, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"{path}:{line_number}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key] = yaml.safe_load(value)
    return values


def load_intrinsics(path: Union[str, Path]) -> Tuple[Intrinsics, int, int, float]:
    """
    Read an intrinsics file.

    Returns:
        Tuple of (intrinsics, width, height, depth_scale)

    Raises:
        FileNotFoundError: If the file does not exist
        InputError: If a key is missing, unknown or not numeric
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Intrinsics file not found: {path}")
    values = _read_key_values(path)
    unknown = sorted(set(values) - set(INTRINSICS_KEYS))
    if unknown:
        raise InputError(f"{path}: unknown keys {unknown}")
    values.setdefault("depth_scale", DEFAULT_DEPTH_SCALE)
    try:
        intrinsics = Intrinsics(float(values["f"]), float(values["cx"]), float(values["cy"]))
        width, height = int(values["width"]), int(values["height"])
        scale = float(values["depth_scale"])
    except KeyError as e:
        raise InputError(f"{path}: missing key {e}") from None
    except (TypeError, ValueError) as e:
        raise InputError(f"{path}: {e}") from None
    if not intrinsics.f > 0 or width < 1 or height < 1:
        raise InputError(f"{path}: focal length and image size must be positive")
    return intrinsics, width, height, scale


def save_intrinsics(
    path: Union[str, Path], intrinsics: Intrinsics, width: int, height: int, depth_scale: float
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [
        f"f = {intrinsics.f!r}",
        f"cx = {intrinsics.cx!r}",
        f"cy = {intrinsics.cy!r}",
        f"width = {width}",
        f"height = {height}",
        f"depth_scale = {depth_scale!r}",
    ]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def load_depth_list(path: Union[str, Path]) -> List[Tuple[float, str]]:
    """
    Read a depth list of ``timestamp filename`` lines.

    Raises:
        FileNotFoundError: If the file does not exist
        InputError: On a malformed line
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Depth list not found: {path}")
    entries = []
    for line_number, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        try:
            entries.append((float(parts[0]), parts[1]))
        except (ValueError, IndexError):
            raise InputError(f"{path}:{line_number}: expected 'timestamp filename'") from None
    return entries


def associate(
    depth_stamps: Sequence[float],
    pose_stamps: Sequence[float],
    max_difference: float = MAX_TIME_DIFFERENCE,
) -> List[Tuple[int, int]]:
    """
    Pair each depth timestamp with the nearest pose timestamp.

    Returns:
        (depth index, pose index) pairs for matches within ``max_difference``,
        in depth order
    """
    if not len(pose_stamps):
        return []
    poses = np.asarray(pose_stamps, dtype=np.float64)
    order = np.argsort(poses, kind="stable")
    sorted_stamps = poses[order]

    pairs = []
    for i, stamp in enumerate(depth_stamps):
        j = int(np.searchsorted(sorted_stamps, stamp))
        candidates = [k for k in (j - 1, j) if 0 <= k < len(sorted_stamps)]
        best = min(candidates, key=lambda k: abs(sorted_stamps[k] - stamp))
        if abs(sorted_stamps[best] - stamp) <= max_difference:
            pairs.append((i, int(order[best])))
    return pairs


def load_dataset(
    root: Union[str, Path], max_time_difference: float = MAX_TIME_DIFFERENCE
) -> DatasetSource:
    """
    Open a dataset directory.

    Args:
        root: Dataset directory
        max_time_difference: Largest accepted depth/pose timestamp gap in seconds

    Returns:
        DatasetSource with associations sorted by timestamp

    Raises:
        FileNotFoundError: If the directory or one of its index files is missing
        InputError: If an index file is malformed or a listed image is missing
    """
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"Dataset directory not found: {root}")

    intrinsics, width, height, scale = load_intrinsics(root / INTRINSICS_FILE)
    depth_entries = sorted(load_depth_list(root / DEPTH_LIST), key=lambda e: e[0])
    trajectory = load_trajectory(root / TRAJECTORY_FILE)

    pairs = associate(
        [t for t, _ in depth_entries], [t for t, _ in trajectory], max_time_difference
    )
    skipped = len(depth_entries) - len(pairs)
    if skipped:
        logger.warning(f"{skipped} depth images have no pose within {max_time_difference} s")

    associations = [
        Association(depth_entries[i][0], root / depth_entries[i][1], trajectory[j][1])
        for i, j in pairs
    ]
    source = DatasetSource(root, intrinsics, width, height, scale, associations)
    logger.info(f"Dataset {root}: {len(source)} posed depth frames")
    return source


def save_dataset(
    root: Union[str, Path],
    frames: Sequence[DepthFrame],
    depth_scale: float = DEFAULT_DEPTH_SCALE,
) -> DatasetSource:
    """
    Write posed depth frames as a dataset directory.

    Args:
        root: Output directory, created if missing
        frames: Frames sharing one intrinsics and image size, each with a pose
        depth_scale: Meters per raw depth unit

    Returns:
        The written dataset, opened again
    """
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    if not frames:
        raise InputError("Cannot write a dataset without frames")
    first = frames[0]

    limit = MAX_RAW * depth_scale
    depth_lines = ["# timestamp filename"]
    stamped = []
    for index, frame in enumerate(frames):
        if frame.pose is None:
            raise InputError(f"Frame {index} has no pose")
        depth = frame.depth
        with np.errstate(invalid="ignore"):
            too_far = depth > limit
        if np.any(too_far):
            logger.warning(
                f"Frame {index}: {int(too_far.sum())} pixels beyond {limit:.2f} m written as missing"
            )
            depth = np.where(too_far, np.nan, depth)
        name = f"{DEPTH_DIR}/{index:06d}.png"
        save_depth_image(root / name, depth, depth_scale)
        depth_lines.append(f"{frame.timestamp:.6f} {name}")
        stamped.append((frame.timestamp, frame.pose))

    (root / DEPTH_LIST).write_text("\n".join(depth_lines) + "\n", encoding="utf-8")
    save_trajectory(root / TRAJECTORY_FILE, stamped)
    save_intrinsics(root / INTRINSICS_FILE, first.intrinsics, first.width, first.height, depth_scale)
    logger.debug(f"Wrote {len(frames)} frames to {root}")
    return load_dataset(root)
