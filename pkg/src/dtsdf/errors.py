"""
Exception types raised by dtsdf.

The CLI maps these onto exit codes, so every error a user can trigger
through input data or configuration has its own class here.
"""

from typing import Optional


class DtsdfError(Exception):
    """Base class for all dtsdf errors."""


class ConfigError(DtsdfError, ValueError):
    """Invalid or inconsistent configuration."""


class ModeMismatchError(ConfigError):
    """The requested operation does not match the volume's representation."""


class ContractError(DtsdfError, ValueError):
    """A documented precondition was violated by the caller."""


class InputError(DtsdfError, ValueError):
    """Malformed input data (frames, poses, datasets)."""


class DepthImageError(InputError):
    """A depth image could not be interpreted."""


class BitDepthError(DepthImageError):
    """Depth image is not 16 bits per pixel."""


class ChannelCountError(DepthImageError):
    """Depth image has more than one channel."""


class TrajectoryParseError(InputError):
    """A trajectory line could not be parsed."""

    def __init__(self, message: str, line_number: Optional[int] = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class SceneError(InputError):
    """Invalid scene description."""


class SnapshotError(InputError):
    """Volume snapshot is corrupt, truncated or of an unknown version."""


class VolumeCapacityError(DtsdfError, MemoryError):
    """The block map reached its configured block capacity."""
