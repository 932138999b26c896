"""
Configuration handler for dtsdf.
Manages loading, validation and saving of FusionConfig from key = value files.
"""

import logging
import math
from dataclasses import dataclass, fields, replace
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Optional, Union

import yaml

from .errors import ConfigError


logger = logging.getLogger(__name__)


class FusionMode(str, Enum):
    """How depth measurements are associated with voxels."""
    VP = "vp"
    RC = "rc"
    RCN = "rcn"


class DistanceMetric(str, Enum):
    """Signed distance used for voxel updates."""
    POINT_TO_POINT = "p2p"
    POINT_TO_PLANE = "p2pl"


# CLI mode labels, in the column order of the usual comparison tables
MODE_LABELS = (
    "def-vp",
    "def-rc-p2pl",
    "def-rcn-p2pl",
    "dir-vp",
    "dir-rc-p2pl",
    "dir-rcn-p2pl",
)


@dataclass
class FusionConfig:
    """Complete configuration for fusion and mesh extraction."""
    voxel_size: float = 0.01
    truncation_factor: float = 4.0
    mode: FusionMode = FusionMode.RCN
    distance_metric: DistanceMetric = DistanceMetric.POINT_TO_PLANE
    directional: bool = True
    max_weight: float = 255.0
    depth_min: float = 0.1
    depth_max: float = 10.0
    depth_weighting: bool = True
    angle_weighting: bool = True
    weight_dropoff: bool = True
    bilateral_radius: int = 2
    bilateral_sigma_spatial: float = 2.0
    bilateral_sigma_range: float = 0.05
    max_depth_jump_ratio: float = 0.05
    direction_threshold: float = math.sin(math.pi / 8)
    block_size: int = 8
    max_blocks: Optional[int] = None
    recycle_radius: Optional[float] = None
    regularization_sweeps: int = 2

    @property
    def truncation(self) -> float:
        """Truncation distance tau in meters."""
        return self.truncation_factor * self.voxel_size

    @property
    def mode_label(self) -> str:
        """CLI label such as ``dir-rcn-p2pl``."""
        prefix = "dir" if self.directional else "def"
        if self.mode is FusionMode.VP and self.distance_metric is DistanceMetric.POINT_TO_POINT:
            return f"{prefix}-vp"
        return f"{prefix}-{self.mode.value}-{self.distance_metric.value}"

    @classmethod
    def from_mode(cls, label: str, **overrides: Any) -> "FusionConfig":
        """
        Build a config from a CLI mode label.

        Args:
            label: One of MODE_LABELS (also accepts ``*-vp-p2pl`` and ``*-rc-p2p``)
            **overrides: Additional field values

        Returns:
            Validated FusionConfig

        Raises:
            ConfigError: If the label is malformed
        """
        return ConfigLoader().build({**mode_fields(label), **overrides})

    def with_mode(self, label: str) -> "FusionConfig":
        """Return a copy of this config switched to another mode label."""
        return replace(self, **mode_fields(label))


def mode_fields(label: str) -> Dict[str, Any]:
    """
    Translate a mode label into FusionConfig field values.

    Args:
        label: Mode label, e.g. ``def-vp`` or ``dir-rcn-p2pl``

    Returns:
        Dict with directional, mode and distance_metric entries

    Raises:
        ConfigError: If the label is malformed
    """
    parts = label.strip().lower().split("-")
    if len(parts) not in (2, 3) or parts[0] not in ("def", "dir"):
        raise ConfigError(f"Invalid mode: {label}. Must be one of {list(MODE_LABELS)}")
    try:
        mode = FusionMode(parts[1])
    except ValueError:
        raise ConfigError(f"Invalid mode: {label}. Must be one of {list(MODE_LABELS)}") from None

    match parts[2:]:
        case []:
            metric = DistanceMetric.POINT_TO_POINT
        case [name]:
            try:
                metric = DistanceMetric(name)
            except ValueError:
                raise ConfigError(f"Invalid distance metric in mode: {label}") from None
        case _:
            raise ConfigError(f"Invalid mode: {label}")

    if mode is not FusionMode.VP and not parts[2:]:
        # ray casting always reads normals, default it to point-to-plane
        metric = DistanceMetric.POINT_TO_PLANE

    return {"directional": parts[0] == "dir", "mode": mode, "distance_metric": metric}


class ConfigLoader:
    """Handles loading, validation and saving of dtsdf configuration files."""

    VALID_MODES = [m.value for m in FusionMode]
    VALID_METRICS = [m.value for m in DistanceMetric]

    DEFAULT_CONFIG: Dict[str, Any] = {
        f.name: (f.default.value if isinstance(f.default, Enum) else f.default)
        for f in fields(FusionConfig)
    }

    OPTIONAL_KEYS = {"max_blocks", "recycle_radius"}
    FLOAT_KEYS = {
        "voxel_size", "truncation_factor", "max_weight", "depth_min", "depth_max",
        "bilateral_sigma_spatial", "bilateral_sigma_range", "max_depth_jump_ratio",
        "direction_threshold", "recycle_radius",
    }
    INT_KEYS = {"bilateral_radius", "block_size", "max_blocks", "regularization_sweeps"}
    BOOL_KEYS = {"directional", "depth_weighting", "angle_weighting", "weight_dropoff"}

    def __init__(self, config_path: Optional[Union[str, Path]] = None):
        """
        Initialize the config loader.

        Args:
            config_path: key = value file to read; None means defaults only
        """
        self.config_path = Path(config_path) if config_path is not None else None

    def _parse_lines(self, text: str) -> Dict[str, Any]:
        """Parse key = value lines, values as YAML scalars."""
        values: Dict[str, Any] = {}
        for line_number, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{self.config_path}:{line_number}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in self.DEFAULT_CONFIG:
                raise ConfigError(f"{self.config_path}:{line_number}: unknown key '{key}'")
            if key in values:
                raise ConfigError(f"{self.config_path}:{line_number}: duplicate key '{key}'")
            try:
                values[key] = yaml.safe_load(value) if value else None
            except yaml.YAMLError as e:
                raise ConfigError(f"{self.config_path}:{line_number}: {e}") from e
        return values

    def _coerce(self, key: str, value: Any) -> Any:
        """Coerce a parsed scalar to the declared type of ``key``."""
        if value is None:
            if key in self.OPTIONAL_KEYS:
                return None
            raise ConfigError(f"{key} must not be empty")

        if key in self.BOOL_KEYS:
            if not isinstance(value, bool):
                raise ConfigError(f"{key} must be true or false, got: {value!r}")
            return value
        if key in self.INT_KEYS:
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"{key} must be an integer, got: {value!r}")
            return value
        if key in self.FLOAT_KEYS:
            if isinstance(value, bool):
                raise ConfigError(f"{key} must be a number, got: {value!r}")
            if isinstance(value, (int, float)):
                return float(value)
            # YAML 1.1 reads exponent floats without a dot ("1e-05") as strings
            try:
                return float(value)
            except (TypeError, ValueError):
                raise ConfigError(f"{key} must be a number, got: {value!r}") from None
        return value

    def _validate_positive(self, key: str, value: Optional[float]) -> None:
        """Validate that a numeric value is strictly positive (None passes)."""
        if value is not None and not value > 0:
            raise ConfigError(f"{key} must be positive, got: {value}")

    def _validate_mode(self, mode: Any) -> FusionMode:
        """Validate the fusion mode."""
        mode = mode.value if isinstance(mode, Enum) else mode
        if mode not in self.VALID_MODES:
            raise ConfigError(f"Invalid mode: {mode}. Must be one of {self.VALID_MODES}")
        return FusionMode(mode)

    def _validate_metric(self, metric: Any) -> DistanceMetric:
        """Validate the distance metric."""
        metric = metric.value if isinstance(metric, Enum) else metric
        if metric not in self.VALID_METRICS:
            raise ConfigError(
                f"Invalid distance_metric: {metric}. Must be one of {self.VALID_METRICS}"
            )
        return DistanceMetric(metric)

    def build(self, user: Dict[str, Any]) -> FusionConfig:
        """
        Merge user values over the defaults, validate and build a FusionConfig.

        Args:
            user: Field values to override

        Returns:
            Validated FusionConfig

        Raises:
            ConfigError: If any value is missing, mistyped or out of range
        """
        unknown = set(user) - set(self.DEFAULT_CONFIG)
        if unknown:
            raise ConfigError(f"Unknown configuration keys: {sorted(unknown)}")

        config = {**self.DEFAULT_CONFIG, **user}
        config["mode"] = self._validate_mode(config["mode"])
        config["distance_metric"] = self._validate_metric(config["distance_metric"])
        for key in config:
            if key not in ("mode", "distance_metric"):
                config[key] = self._coerce(key, config[key])

        for key in ("voxel_size", "max_weight", "bilateral_sigma_spatial",
                    "bilateral_sigma_range", "max_depth_jump_ratio", "block_size",
                    "max_blocks", "recycle_radius"):
            self._validate_positive(key, config[key])
        if config["truncation_factor"] < 1:
            raise ConfigError(
                f"truncation_factor must be at least 1, got: {config['truncation_factor']}"
            )
        if not 0 <= config["depth_min"] < config["depth_max"]:
            raise ConfigError(
                f"depth range must satisfy 0 <= depth_min < depth_max, "
                f"got: ({config['depth_min']}, {config['depth_max']})"
            )
        if config["bilateral_radius"] < 0:
            raise ConfigError("bilateral_radius must not be negative")
        if config["regularization_sweeps"] < 0:
            raise ConfigError("regularization_sweeps must not be negative")
        if not 0 <= config["direction_threshold"] < 1:
            raise ConfigError("direction_threshold must lie in [0, 1)")
        if (config["mode"] is FusionMode.RCN
                and config["distance_metric"] is not DistanceMetric.POINT_TO_PLANE):
            raise ConfigError("mode rcn measures distances along normals and requires p2pl")

        return FusionConfig(**config)

    def read_values(self) -> Dict[str, Any]:
        """
        Parse the config file without merging or validating it.

        Returns:
            The values set in the file; empty when there is no path

        Raises:
            FileNotFoundError: If the configured path does not exist
            ConfigError: If a line is malformed or names an unknown key
        """
        if self.config_path is None:
            return {}

        if not self.config_path.exists():
            raise FileNotFoundError(f"Config file not found: {self.config_path}")

        logger.debug(f"Reading configuration from {self.config_path}")
        return self._parse_lines(self.config_path.read_text(encoding="utf-8"))

    def load(self, **overrides: Any) -> FusionConfig:
        """
        Load and validate the configuration.

        Args:
            **overrides: Field values that take precedence over the file

        Returns:
            FusionConfig with file values merged over defaults

        Raises:
            FileNotFoundError: If the configured path does not exist
            ConfigError: If the file content is invalid
        """
        return self.build({**self.read_values(), **overrides})

    def save(self, config: FusionConfig) -> None:
        """
        Write a config as key = value lines covering every field.

        Args:
            config: Configuration to write
        """
        if self.config_path is None:
            raise ConfigError("No config path to save to")

        lines = ["# dtsdf fusion configuration"]
        for f in fields(FusionConfig):
            value = getattr(config, f.name)
            match value:
                case None:
                    text = "null"
                case bool():
                    text = "true" if value else "false"
                case Enum():
                    text = value.value
                case float():
                    text = repr(value)
                case _:
                    text = str(value)
            lines.append(f"{f.name} = {text}")

        self.config_path.parent.mkdir(parents=True, exist_ok=True)
        self.config_path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_config(path: Union[str, Path]) -> FusionConfig:
    """Load a FusionConfig from a key = value file."""
    return ConfigLoader(path).load()


def save_config(config: FusionConfig, path: Union[str, Path]) -> None:
    """Save a FusionConfig to a key = value file."""
    ConfigLoader(path).save(config)
