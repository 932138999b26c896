"""
Scene description files, built-in scenes and analytic volume sampling.

Scene files are YAML:

    name: slab
    primitives:
      - type: slab
        point: [0, 0, 0]
        normal: [1, 0, 0]
        thickness: 0.005
        half_extents: [0.25, 0.25]     # optional, bounds the slab
      - type: box
        center: [0, 0.4, 0]
        half_extents: [0.1, 0.1, 0.1]
        rotation: [0, 0, 30]           # extrinsic xyz Euler angles, degrees
        inverted: false
    trajectory:
      center: [0, 0, 0]
      radius: 1.2
      frames: 60
      height: 0.3
    camera:
      width: 320
      height: 240
      noise: 0.0
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import yaml

from ..errors import SceneError
from ..fusion.frame import DepthFrame, Intrinsics
from ..volume.block_map import BlockMap
from ..volume.directions import DIRECTION_VECTORS, UNDIRECTED
from .primitives import Box, Plane, Primitive, Scene, Slab, Sphere, bounded_slab
from .renderer import Trajectory, circular_trajectory, render_sequence


logger = logging.getLogger(__name__)


@dataclass
class TrajectorySettings:
    center: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    radius: float = 1.2
    frames: int = 60
    height: float = 0.3


@dataclass
class SceneDescription:
    """A scene plus the orbit and camera used to observe it."""
    scene: Scene
    trajectory: TrajectorySettings = field(default_factory=TrajectorySettings)
    width: int = 320
    height: int = 240
    noise: float = 0.0

    @property
    def intrinsics(self) -> Intrinsics:
        return Intrinsics.for_resolution(self.width, self.height)

    def poses(self, frames: Optional[int] = None) -> Trajectory:
        t = self.trajectory
        return circular_trajectory(t.center, t.radius, frames or t.frames, t.height)

    def render(self, frames: Optional[int] = None, seed: Optional[int] = None) -> List[DepthFrame]:
        """Render the orbit of this description."""
        return render_sequence(
            self.scene, self.poses(frames), self.intrinsics, self.width, self.height,
            self.noise, seed,
        )


def _build_primitive(entry: Dict[str, Any], index: int) -> Primitive:
    if not isinstance(entry, dict) or "type" not in entry:
        raise SceneError(f"primitive {index}: expected a mapping with a 'type' key")
    params = dict(entry)
    kind = str(params.pop("type")).lower()
    inverted = bool(params.pop("inverted", False))
    try:
        primitive = _make_primitive(kind, params, inverted, index)
    except SceneError:
        raise
    except KeyError as e:
        raise SceneError(f"primitive {index} ({kind}): missing key {e}") from None
    except (TypeError, ValueError) as e:
        raise SceneError(f"primitive {index} ({kind}): {e}") from e
    if params:
        logger.warning(f"primitive {index} ({kind}): ignoring keys {sorted(params)}")
    return primitive


def _make_primitive(kind: str, params: Dict[str, Any], inverted: bool, index: int) -> Primitive:
    match kind:
        case "sphere":
            return Sphere(params.pop("center"), params.pop("radius"), inverted=inverted)
        case "box":
            return Box.from_euler(
                params.pop("center"),
                params.pop("half_extents"),
                params.pop("rotation", (0.0, 0.0, 0.0)),
                inverted=inverted,
            )
        case "slab":
            extents = params.pop("half_extents", None)
            if extents is not None:
                return bounded_slab(
                    params.pop("point"), params.pop("normal"), params.pop("thickness"),
                    extents, inverted=inverted,
                )
            return Slab(
                params.pop("point"), params.pop("normal"), params.pop("thickness"),
                inverted=inverted,
            )
        case "plane":
            return Plane(params.pop("point"), params.pop("normal"), inverted=inverted)
        case _:
            raise SceneError(f"primitive {index}: unknown type '{kind}'")


def parse_scene(data: Dict[str, Any], default_name: str = "scene") -> SceneDescription:
    """
    Build a SceneDescription from parsed YAML.

    Raises:
        SceneError: If the structure or any value is invalid
    """
    if not isinstance(data, dict):
        raise SceneError("Scene file must contain a mapping")
    entries = data.get("primitives")
    if entries is None:
        entries = []
    if not isinstance(entries, list):
        raise SceneError("'primitives' must be a list")
    if not entries:
        logger.warning("Scene has no primitives; every render will be empty")

    scene = Scene(
        [_build_primitive(entry, i) for i, entry in enumerate(entries)],
        str(data.get("name", default_name)),
    )
    orbit = data.get("trajectory") or {}
    camera = data.get("camera") or {}
    try:
        trajectory = TrajectorySettings(
            center=tuple(float(c) for c in orbit.get("center", (0.0, 0.0, 0.0))),
            radius=float(orbit.get("radius", TrajectorySettings.radius)),
            frames=int(orbit.get("frames", TrajectorySettings.frames)),
            height=float(orbit.get("height", TrajectorySettings.height)),
        )
        description = SceneDescription(
            scene,
            trajectory,
            int(camera.get("width", 320)),
            int(camera.get("height", 240)),
            float(camera.get("noise", 0.0)),
        )
    except (TypeError, ValueError, AttributeError) as e:
        raise SceneError(f"Invalid trajectory or camera settings: {e}") from e
    if trajectory.radius <= 0 or trajectory.frames < 1:
        raise SceneError("trajectory radius must be positive and frames at least 1")
    return description


def load_scene(path: Union[str, Path]) -> SceneDescription:
    """
    Load a YAML scene description.

    Raises:
        FileNotFoundError: If the file does not exist
        SceneError: If the file is not a valid scene
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Scene file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as e:
        raise SceneError(f"{path}: {e}") from e
    return parse_scene(data, path.stem)


BUILTIN_SCENES: Dict[str, Dict[str, Any]] = {
    "sphere": {
        "name": "sphere",
        "primitives": [{"type": "sphere", "center": [0, 0, 0], "radius": 0.5}],
        "trajectory": {"radius": 2.0, "frames": 60, "height": 0.5},
    },
    "slab": {
        "name": "slab",
        "primitives": [
            {
                "type": "slab",
                "point": [0, 0, 0],
                "normal": [1, 0, 0],
                "thickness": 0.005,
                "half_extents": [0.25, 0.25],
            }
        ],
        "trajectory": {"radius": 1.2, "frames": 60, "height": 0.3},
    },
    "slab_box": {
        "name": "slab_box",
        "primitives": [
            {
                "type": "slab",
                "point": [0, 0, 0],
                "normal": [1, 0, 0],
                "thickness": 0.005,
                "half_extents": [0.25, 0.25],
            },
            {
                "type": "box",
                "center": [0.0, 0.5, 0.0],
                "half_extents": [0.12, 0.12, 0.12],
                "rotation": [0, 0, 30],
            },
        ],
        "trajectory": {"center": [0, 0.25, 0], "radius": 1.4, "frames": 60, "height": 0.3},
    },
}


def builtin_scene(name: str) -> SceneDescription:
    """
    One of the built-in scenes: ``sphere``, ``slab`` or ``slab_box``.

    Raises:
        SceneError: If the name is unknown
    """
    if name not in BUILTIN_SCENES:
        raise SceneError(f"Unknown scene: {name}. Must be one of {sorted(BUILTIN_SCENES)}")
    return parse_scene(BUILTIN_SCENES[name], name)


def resolve_scene(name_or_path: str) -> SceneDescription:
    """Built-in scene by name, otherwise a scene file path."""
    if name_or_path in BUILTIN_SCENES:
        return builtin_scene(name_or_path)
    return load_scene(name_or_path)


def sample_scene_sdf(
    block_map: BlockMap,
    scene: Scene,
    channel: int = UNDIRECTED,
    bounds: Optional[Tuple[Sequence[float], Sequence[float]]] = None,
    directional: bool = False,
    threshold: float = 0.0,
) -> int:
    """
    Write the analytic truncated SDF of a scene into the volume.

    Blocks near the surface are allocated and every voxel gets the exact
    distance clamped to the truncation band with weight 1. With
    ``directional`` the six direction channels are written instead, each
    voxel only where the analytic normal agrees with the direction by more
    than ``threshold``, weighted by that agreement.

    Args:
        block_map: Target volume
        scene: Scene to sample
        channel: Channel for the undirected case
        bounds: (lo, hi) region to cover; the scene's bounds by default
        directional: Sample into the direction channels
        threshold: Minimum normal/direction agreement for directional sampling

    Returns:
        Number of blocks allocated
    """
    tau = block_map.truncation
    b = block_map.block_size
    extent = block_map.block_extent
    lo, hi = bounds if bounds is not None else scene.bounds()
    lo = np.asarray(lo, dtype=np.float64) - tau
    hi = np.asarray(hi, dtype=np.float64) + tau

    first = np.floor(lo / extent).astype(np.int64)
    last = np.floor(hi / extent).astype(np.int64)
    axes = [np.arange(first[i], last[i] + 1) for i in range(3)]
    coords = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, 3)
    centers = (coords + 0.5) * extent
    reach = tau + 0.5 * np.sqrt(3.0) * extent
    near = np.abs(scene.sdf(centers)) <= reach
    coords = coords[near]

    before = len(block_map)
    channels = range(6) if directional else (channel,)
    for coord in coords:
        cells = block_map.block_cells(coord)
        points = cells * block_map.voxel_size
        sdf = np.clip(scene.sdf(points), -tau, tau).reshape(b, b, b)
        if directional:
            agreement = scene.normals(points) @ DIRECTION_VECTORS.T
        for ch in channels:
            if directional:
                weight = np.where(agreement[:, ch] > threshold, agreement[:, ch], 0.0)
                if not np.any(weight > 0):
                    continue
            else:
                weight = np.ones(points.shape[0])
            block_map.allocate(coord, (ch,))
            arrays = block_map.block_arrays(coord, ch)
            arrays[0][...] = sdf
            arrays[1][...] = weight.reshape(b, b, b)

    allocated = len(block_map) - before
    logger.debug(f"Sampled scene '{scene.name}' into {allocated} blocks")
    return allocated
