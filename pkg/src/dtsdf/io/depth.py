"""
16-bit depth image reading and writing.

Depth images store integer sensor units; ``depth_m = raw * scale`` with the
common RGB-D convention of 5000 units per meter. Raw 0 marks a pixel
without a measurement.
"""

import logging
from pathlib import Path
from typing import Optional, Union

import numpy as np
from PIL import Image

from ..errors import BitDepthError, ChannelCountError, DepthImageError
from ..fusion.frame import DepthFrame, Intrinsics, Pose


logger = logging.getLogger(__name__)


DEFAULT_DEPTH_SCALE = 1.0 / 5000.0
MAX_RAW = np.iinfo(np.uint16).max

# Pillow modes that carry one 16-bit channel; "I" is what PGM and some PNG decoders produce
SIXTEEN_BIT_MODES = ("I;16", "I;16L", "I;16B", "I;16N", "I")


def read_raw_depth(path: Union[str, Path]) -> np.ndarray:
    """
    Read the raw integer values of a 16-bit single-channel image.

    Args:
        path: PNG or binary PGM file

    Returns:
        (H, W) uint16 array

    Raises:
        FileNotFoundError: If the file does not exist
        ChannelCountError: If the image has more than one channel
        BitDepthError: If the image is not 16 bits per pixel
        DepthImageError: If the file is not a readable image
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Depth image not found: {path}")

    try:
        with Image.open(path) as img:
            bands = img.getbands()
            mode = img.mode
            if len(bands) != 1:
                raise ChannelCountError(f"{path}: expected 1 channel, got {len(bands)} ({mode})")
            if mode not in SIXTEEN_BIT_MODES:
                raise BitDepthError(f"{path}: expected a 16-bit image, got mode {mode}")
            raw = np.array(img)
    except DepthImageError:
        raise
    except OSError as e:
        raise DepthImageError(f"{path}: {e}") from e

    if raw.dtype != np.uint16:
        # mode "I" decodes to int32; accept it only when every value fits 16 bits
        if raw.size and (raw.min() < 0 or raw.max() > MAX_RAW):
            raise BitDepthError(f"{path}: values exceed the 16-bit range")
        raw = raw.astype(np.uint16)
    return raw


def load_depth_image(
    path: Union[str, Path],
    scale: float = DEFAULT_DEPTH_SCALE,
    intrinsics: Optional[Intrinsics] = None,
    pose: Optional[Pose] = None,
    timestamp: float = 0.0,
) -> DepthFrame:
    """
    Load a depth image as a DepthFrame in meters.

    Args:
        path: 16-bit PNG or binary PGM
        scale: Meters per raw unit
        intrinsics: Camera intrinsics; Kinect scaled to the image width by default
        pose: Optional world-from-camera pose
        timestamp: Frame timestamp

    Returns:
        DepthFrame with NaN where raw is 0
    """
    if not scale > 0:
        raise DepthImageError(f"Depth scale must be positive, got: {scale}")
    raw = read_raw_depth(path)
    depth = raw.astype(np.float64) * scale
    depth[raw == 0] = np.nan
    if intrinsics is None:
        intrinsics = Intrinsics.kinect().scaled(raw.shape[1] / 640.0)
    logger.debug(f"Loaded depth image {path} ({raw.shape[1]}x{raw.shape[0]})")
    return DepthFrame(depth, intrinsics, pose, timestamp)


def depth_to_raw(depth: np.ndarray, scale: float = DEFAULT_DEPTH_SCALE) -> np.ndarray:
    """
    Quantize metric depth to raw 16-bit units; invalid pixels become 0.

    Raises:
        DepthImageError: If a depth exceeds the 16-bit range at this scale
    """
    if not scale > 0:
        raise DepthImageError(f"Depth scale must be positive, got: {scale}")
    depth = np.asarray(depth, dtype=np.float64)
    valid = np.isfinite(depth) & (depth > 0)
    raw = np.zeros(depth.shape, dtype=np.float64)
    raw[valid] = np.round(depth[valid] / scale)
    if raw.size and raw.max() > MAX_RAW:
        raise DepthImageError(
            f"Depth {depth[valid].max():.3f} m does not fit 16 bits at scale {scale}"
        )
    return raw.astype(np.uint16)


def save_depth_image(
    path: Union[str, Path],
    depth: np.ndarray,
    scale: float = DEFAULT_DEPTH_SCALE,
) -> Path:
    """
    Write metric depth as a 16-bit PNG (or PGM for a ``.pgm`` suffix).

    Args:
        path: Output file; parent directories are created
        depth: (H, W) depth in meters, NaN or 0 for missing pixels
        scale: Meters per raw unit

    Returns:
        Path of the written file
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    raw = depth_to_raw(depth, scale)
    Image.fromarray(raw).save(path)
    return path
