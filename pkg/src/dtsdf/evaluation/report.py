"""
Plain-text reports and sweep CSV tables.
"""

import csv
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Sequence, Union

import yaml


logger = logging.getLogger(__name__)


SWEEP_COLUMNS = (
    "scene",
    "mode",
    "voxel_size",
    "frames",
    "rmse",
    "mean",
    "max",
    "vertices",
    "triangles",
    "blocks",
    "arrays_per_block",
    "fusion_ms",
    "mesh_ms",
    "meshing_fraction",
    "error",
)


def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def format_report(values: Mapping[str, Any], title: str = "") -> str:
    """key = value lines, optionally under a ``# title`` comment."""
    lines = [f"# {title}"] if title else []
    lines += [f"{key} = {_format_value(value)}" for key, value in values.items()]
    return "\n".join(lines) + "\n"


def write_report(values: Mapping[str, Any], path: Union[str, Path], title: str = "") -> Path:
    """
    Write a key = value report file.

    Args:
        values: Report entries in output order
        path: Output file; parent directories are created
        title: Optional heading comment
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_report(values, title), encoding="utf-8")
    logger.debug(f"Wrote report to {path}")
    return path


def _parse_value(value: str) -> Any:
    # YAML would cut "a #b" at the comment, so such values stay strings
    if "#" in value:
        return value
    try:
        return yaml.safe_load(value)
    except yaml.YAMLError:
        return value


def read_report(path: Union[str, Path]) -> Dict[str, Any]:
    """
    Read a key = value report back, values as YAML scalars.

    Only lines starting with ``#`` are comments; a ``#`` inside a value is kept.
    """
    values = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line.startswith("#") or "=" not in line:
            continue
        key, value = (part.strip() for part in line.split("=", 1))
        values[key] = _parse_value(value)
    return values


def write_csv(
    rows: Iterable[Mapping[str, Any]],
    path: Union[str, Path],
    columns: Sequence[str] = SWEEP_COLUMNS,
) -> Path:
    """
    Write rows as CSV with a fixed column order; missing values stay empty.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=list(columns), extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _format_value(v) for k, v in row.items() if v is not None})
    return path


def read_csv(path: Union[str, Path]) -> List[Dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f))
