"""
Mesh export and import: binary little-endian PLY and ASCII OBJ.

PLY vertices are written as float32 positions. Meshes carrying per-vertex
scalars additionally get ``red``, ``green``, ``blue`` (uchar) from
:func:`scalar_colormap` and the raw scalar as a float ``quality`` property.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np

from ..errors import ConfigError, InputError
from ..meshing.mesh import TriangleMesh


logger = logging.getLogger(__name__)


MESH_FORMATS = ("ply", "obj")

PLY_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}


def scalar_colormap(scalars: np.ndarray) -> np.ndarray:
    """
    Linear blue to red colormap for scalars in [0, 1].

    s maps to (255 s, 0, 255 (1 - s)), rounded; values are clipped to
    [0, 1] first and NaN maps to blue.

    Returns:
        (N, 3) uint8 colors
    """
    s = np.clip(np.nan_to_num(np.asarray(scalars, dtype=np.float64).reshape(-1), nan=0.0), 0.0, 1.0)
    colors = np.zeros((s.shape[0], 3), dtype=np.uint8)
    colors[:, 0] = np.round(255.0 * s)
    colors[:, 2] = np.round(255.0 * (1.0 - s))
    return colors


def _vertex_dtype(with_scalars: bool) -> np.dtype:
    names = [("x", "<f4"), ("y", "<f4"), ("z", "<f4")]
    if with_scalars:
        names += [("red", "u1"), ("green", "u1"), ("blue", "u1"), ("quality", "<f4")]
    return np.dtype(names)


FACE_DTYPE = np.dtype([("count", "u1"), ("indices", "<i4", (3,))])


def write_ply(mesh: TriangleMesh, path: Union[str, Path]) -> None:
    """Write a binary little-endian PLY file."""
    with_scalars = mesh.scalars is not None
    vertices = np.zeros(mesh.vertex_count, dtype=_vertex_dtype(with_scalars))
    for axis, name in enumerate("xyz"):
        vertices[name] = mesh.vertices[:, axis]
    if with_scalars:
        colors = scalar_colormap(mesh.scalars)
        vertices["red"], vertices["green"], vertices["blue"] = colors.T
        vertices["quality"] = mesh.scalars

    faces = np.zeros(mesh.triangle_count, dtype=FACE_DTYPE)
    faces["count"] = 3
    faces["indices"] = mesh.triangles

    header = [
        "ply",
        "format binary_little_endian 1.0",
        "comment dtsdf mesh",
        f"element vertex {mesh.vertex_count}",
        "property float x",
        "property float y",
        "property float z",
    ]
    if with_scalars:
        header += [
            "property uchar red",
            "property uchar green",
            "property uchar blue",
            "property float quality",
        ]
    header += [
        f"element face {mesh.triangle_count}",
        "property list uchar int vertex_indices",
        "end_header",
    ]
    with open(path, "wb") as f:
        f.write(("\n".join(header) + "\n").encode("ascii"))
        f.write(vertices.tobytes())
        f.write(faces.tobytes())


def write_obj(mesh: TriangleMesh, path: Union[str, Path]) -> None:
    """Write an ASCII OBJ file with 1-based face indices."""
    with open(path, "w", encoding="utf-8") as f:
        f.write("# dtsdf mesh\n")
        for x, y, z in mesh.vertices:
            f.write(f"v {x:.9g} {y:.9g} {z:.9g}\n")
        for a, b, c in mesh.triangles + 1:
            f.write(f"f {a} {b} {c}\n")


def mesh_format(path: Union[str, Path], format: Optional[str] = None) -> str:
    """
    Resolve the mesh format from an explicit name or the file suffix.

    Raises:
        ConfigError: If the format is not ply or obj
    """
    name = (format or Path(path).suffix.lstrip(".")).lower()
    if name not in MESH_FORMATS:
        raise ConfigError(f"Unsupported mesh format: {name!r}. Must be one of {MESH_FORMATS}")
    return name


def export_mesh(mesh: TriangleMesh, path: Union[str, Path], format: Optional[str] = None) -> Path:
    """
    Write a mesh as PLY or OBJ.

    Args:
        mesh: Mesh to write; may be empty
        path: Output file; parent directories are created
        format: "ply" or "obj"; taken from the suffix when omitted

    Returns:
        Path of the written file

    Raises:
        ConfigError: If the format is unsupported
        OSError: If the path cannot be written
    """
    path = Path(path)
    kind = mesh_format(path, format)
    mesh.validate()
    path.parent.mkdir(parents=True, exist_ok=True)
    if kind == "ply":
        write_ply(mesh, path)
    else:
        write_obj(mesh, path)
    logger.debug(
        f"Wrote {mesh.vertex_count} vertices and {mesh.triangle_count} triangles to {path}"
    )
    return path


@dataclass
class PlyElement:
    name: str
    count: int
    properties: List[Tuple[str, str]] = field(default_factory=list)
    # (count dtype, index dtype) when the element holds a list property
    list_property: Optional[Tuple[str, str]] = None


def _parse_ply_header(data: bytes, path: Path) -> Tuple[str, List[PlyElement], int]:
    end = data.find(b"end_header")
    if not data.startswith(b"ply") or end < 0:
        raise InputError(f"{path}: not a PLY file")
    body_start = data.index(b"\n", end) + 1
    lines = data[:end].decode("ascii", errors="replace").splitlines()

    fmt = None
    elements: List[PlyElement] = []
    for line in lines[1:]:
        tokens = line.split()
        if not tokens or tokens[0] in ("comment", "obj_info"):
            continue
        match tokens[0]:
            case "format":
                fmt = tokens[1]
            case "element":
                elements.append(PlyElement(tokens[1], int(tokens[2])))
            case "property" if elements:
                if tokens[1] == "list":
                    elements[-1].list_property = (PLY_TYPES[tokens[2]], PLY_TYPES[tokens[3]])
                else:
                    elements[-1].properties.append((tokens[-1], PLY_TYPES[tokens[1]]))
            case _:
                raise InputError(f"{path}: unexpected header line '{line}'")

    if fmt not in ("binary_little_endian", "ascii"):
        raise InputError(f"{path}: unsupported PLY format {fmt}")
    return fmt, elements, body_start


def _mesh_from_elements(
    vertices: Optional[np.ndarray], faces: Optional[np.ndarray], path: Path
) -> TriangleMesh:
    if vertices is None:
        raise InputError(f"{path}: no vertex element")
    positions = np.stack([vertices[c].astype(np.float64) for c in "xyz"], axis=1)
    scalars = None
    if "quality" in vertices.dtype.names:
        scalars = vertices["quality"].astype(np.float64)
    triangles = faces if faces is not None else np.zeros((0, 3), dtype=np.int64)
    mesh = TriangleMesh(positions, triangles, scalars)
    try:
        mesh.validate()
    except ValueError as e:
        raise InputError(f"{path}: {e}") from None
    return mesh


def _read_binary_ply(data: bytes, elements: List[PlyElement], offset: int, path: Path) -> TriangleMesh:
    vertices = faces = None
    for element in elements:
        fields = [(name, "<" + t) for name, t in element.properties]
        if element.list_property is not None:
            count_type, index_type = element.list_property
            fields += [("count", "<" + count_type), ("indices", "<" + index_type, (3,))]
        dtype = np.dtype(fields)
        if offset + dtype.itemsize * element.count > len(data):
            raise InputError(f"{path}: truncated {element.name} data")
        array = np.frombuffer(data, dtype, element.count, offset)
        offset += dtype.itemsize * element.count

        if element.name == "vertex":
            vertices = array
        elif element.name == "face":
            if element.list_property is None:
                raise InputError(f"{path}: face element without an index list")
            if np.any(array["count"] != 3):
                raise InputError(f"{path}: only triangle faces are supported")
            faces = array["indices"].astype(np.int64)
    return _mesh_from_elements(vertices, faces, path)


def _read_ascii_ply(data: bytes, elements: List[PlyElement], offset: int, path: Path) -> TriangleMesh:
    lines = iter(data[offset:].decode("ascii", errors="replace").splitlines())
    vertices = faces = None
    try:
        for element in elements:
            rows = [next(lines).split() for _ in range(element.count)]
            if element.name == "vertex":
                dtype = np.dtype([(name, t) for name, t in element.properties])
                n = len(element.properties)
                values = np.array([[float(v) for v in row[:n]] for row in rows]).reshape(-1, n)
                vertices = np.zeros(element.count, dtype=dtype)
                for i, (name, _) in enumerate(element.properties):
                    vertices[name] = values[:, i]
            elif element.name == "face":
                n = len(element.properties)
                if any(int(row[n]) != 3 for row in rows):
                    raise InputError(f"{path}: only triangle faces are supported")
                faces = np.array([[int(v) for v in row[n + 1:n + 4]] for row in rows], dtype=np.int64)
    except StopIteration:
        raise InputError(f"{path}: truncated ASCII body") from None
    except (ValueError, IndexError) as e:
        raise InputError(f"{path}: malformed ASCII body ({e})") from None
    return _mesh_from_elements(vertices, faces, path)


def read_ply(path: Union[str, Path]) -> TriangleMesh:
    """Read a triangle PLY file, binary little-endian or ASCII."""
    path = Path(path)
    data = path.read_bytes()
    try:
        fmt, elements, offset = _parse_ply_header(data, path)
    except (KeyError, IndexError, ValueError) as e:
        raise InputError(f"{path}: malformed PLY header ({e})") from None
    if fmt == "ascii":
        return _read_ascii_ply(data, elements, offset, path)
    return _read_binary_ply(data, elements, offset, path)


def read_obj(path: Union[str, Path]) -> TriangleMesh:
    """
    Read vertices and faces of an OBJ file.

    Polygons are fan-triangulated; texture and normal indices are ignored
    and negative indices count from the end of the vertex list.
    """
    path = Path(path)
    vertices: List[List[float]] = []
    triangles: List[List[int]] = []
    with open(path, "r", encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            tokens = line.split()
            if not tokens:
                continue
            try:
                if tokens[0] == "v":
                    vertices.append([float(v) for v in tokens[1:4]])
                elif tokens[0] == "f":
                    refs = [int(t.split("/")[0]) for t in tokens[1:]]
                    refs = [r - 1 if r > 0 else len(vertices) + r for r in refs]
                    for i in range(1, len(refs) - 1):
                        triangles.append([refs[0], refs[i], refs[i + 1]])
            except ValueError as e:
                raise InputError(f"{path}:{line_number}: {e}") from None

    mesh = TriangleMesh(np.array(vertices).reshape(-1, 3), np.array(triangles).reshape(-1, 3))
    try:
        mesh.validate()
    except ValueError as e:
        raise InputError(f"{path}: {e}") from None
    return mesh


def load_mesh(path: Union[str, Path]) -> TriangleMesh:
    """
    Load a PLY or OBJ mesh.

    Raises:
        FileNotFoundError: If the file does not exist
        ConfigError: If the suffix is neither .ply nor .obj
        InputError: If the file cannot be parsed
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Mesh file not found: {path}")
    kind = mesh_format(path)
    mesh = read_ply(path) if kind == "ply" else read_obj(path)
    logger.debug(f"Loaded {mesh.triangle_count} triangles from {path}")
    return mesh
