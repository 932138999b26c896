"""
dtsdf - Directional truncated signed distance fusion and meshing.

Main entry point: render synthetic datasets, fuse them into a volume,
extract meshes, evaluate them and run parameter sweeps.
"""

import argparse
import logging
import os
import sys
import time
from dataclasses import replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from .config import MODE_LABELS, ConfigLoader, FusionConfig, mode_fields
from .errors import ConfigError, InputError, ModeMismatchError
from .evaluation import (
    heatmap_scalars,
    mesh_to_reference_distances,
    timing_report,
    write_csv,
    write_report,
)
from .fusion import Reconstruction
from .fusion.integrator import default_threads
from .io import export_mesh, load_dataset, load_mesh, save_dataset
from .meshing import MeshingStats, extract_mesh
from .scenes import BUILTIN_SCENES, SceneDescription, resolve_scene
from .volume import UNDIRECTED, BlockMap, load_volume, save_volume, voxel_array_stats


# Version information
__version__ = "1.0.0"

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_RUNTIME = 4
EXIT_INTERRUPTED = 130

LOG_LEVELS = {
    "debug": logging.DEBUG,
    "info": logging.INFO,
    "warning": logging.WARNING,
    "error": logging.ERROR,
}

MESH_SUFFIXES = (".ply", ".obj")

logger = logging.getLogger(__name__)


def setup_logging(verbose: bool = False) -> None:
    """
    Set up logging configuration.

    The level is DEBUG with ``verbose``, otherwise taken from the DTSDF_LOG
    environment variable (debug, info, warning, error), INFO by default.

    Args:
        verbose: Enable verbose logging if True
    """
    level = logging.DEBUG if verbose else LOG_LEVELS.get(
        os.environ.get("DTSDF_LOG", "info").strip().lower(), logging.INFO
    )
    detailed = level <= logging.DEBUG
    format_str = "%(asctime)s - %(name)s - %(levelname)s - %(message)s" if detailed else "%(message)s"

    logging.basicConfig(
        level=level,
        format=format_str,
        datefmt="%Y-%m-%d %H:%M:%S",
        force=True,
    )


def positive_float(text: str) -> float:
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got: {text}")
    return value


def positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got: {text}")
    return value


def build_config(args: argparse.Namespace, mode: Optional[str] = None) -> FusionConfig:
    """
    Merge the config file with command line overrides.

    Args:
        args: Parsed arguments carrying config, mode, voxel_size and trunc_factor
        mode: Mode label that takes precedence over ``args.mode``

    Returns:
        Validated FusionConfig

    Raises:
        ConfigError: If the merged values are invalid
    """
    overrides: Dict[str, Any] = {}
    label = mode or getattr(args, "mode", None)
    if label:
        overrides.update(mode_fields(label))
    if getattr(args, "voxel_size", None) is not None:
        overrides["voxel_size"] = args.voxel_size
    if getattr(args, "trunc_factor", None) is not None:
        overrides["truncation_factor"] = args.trunc_factor
    return ConfigLoader(getattr(args, "config", None)).load(**overrides)


def is_directional_volume(block_map: BlockMap) -> bool:
    """True if any direction channel holds data."""
    return any(channel != UNDIRECTED for channel in block_map.channels_in_use())


def load_reference(reference: str):
    """A reference mesh for .ply/.obj paths, otherwise a built-in or YAML scene."""
    if Path(reference).suffix.lower() in MESH_SUFFIXES:
        return load_mesh(reference)
    return resolve_scene(reference).scene


def apply_render_overrides(description: SceneDescription, args: argparse.Namespace) -> SceneDescription:
    if args.width is not None:
        description.width = args.width
    if args.height is not None:
        description.height = args.height
    if args.noise is not None:
        description.noise = args.noise
    return description


def cmd_render(args: argparse.Namespace) -> int:
    """Render a scene along its orbit into a dataset directory."""
    description = apply_render_overrides(resolve_scene(args.scene), args)
    logger.info(
        f"Rendering scene '{description.scene.name}' at {description.width}x{description.height}"
    )
    frames = description.render(args.frames, args.seed)
    source = save_dataset(args.out, frames)

    print(f"\n✅ Rendered {len(source)} frames of '{description.scene.name}'")
    print(f"📍 Dataset location: {Path(args.out)}")
    return EXIT_OK


def cmd_fuse(args: argparse.Namespace) -> int:
    """Fuse a dataset into a volume snapshot."""
    config = build_config(args)
    source = load_dataset(args.dataset)
    logger.info(f"Fusing with mode {config.mode_label} at voxel size {config.voxel_size} m")

    recon = Reconstruction(config, args.threads)
    mesh_times: List[float] = []
    for index, frame in enumerate(source.frames(args.frames), start=1):
        stats = recon.integrate(frame)
        logger.debug(f"Frame {index}: {stats.as_dict()}")
        if args.mesh_every and index % args.mesh_every == 0:
            recon.extract_mesh()
            mesh_times.append(recon.mesh_stats[-1].elapsed_s)

    if recon.frames_fused == 0:
        logger.warning("No frames fused; writing an empty volume")

    save_volume(recon.block_map, args.out)
    summary = recon.summary()
    if recon.frames_fused:
        timing = timing_report(recon.frame_stats, mesh_times)
        summary.update({f"mean_{k}": v for k, v in timing.as_dict().items() if k != "frames"})
    summary["mode"] = config.mode_label
    summary["voxel_size"] = config.voxel_size
    write_report(summary, Path(args.out).with_suffix(".stats.txt"), "fusion statistics")

    print(f"\n✅ Fused {recon.frames_fused} frames into {summary['blocks']} blocks")
    for phase in ("preprocess_s", "allocate_s", "fuse_s", "finalize_s"):
        print(f"   {phase[:-2]:<12}{1000.0 * summary[phase]:10.1f} ms")
    print(f"📍 Volume location: {Path(args.out)}")
    return EXIT_OK


def cmd_mesh(args: argparse.Namespace) -> int:
    """Extract a mesh from a volume snapshot."""
    block_map = load_volume(args.volume)
    directional = is_directional_volume(block_map)
    if args.baseline and directional:
        raise ModeMismatchError(
            "--baseline meshes the undirected channel, but this volume is directional"
        )

    # the volume decides geometry and representation, the config the meshing options
    config = replace(
        build_config(args),
        voxel_size=block_map.voxel_size,
        truncation_factor=block_map.truncation_factor,
        block_size=block_map.block_size,
        directional=directional,
    )
    stats = MeshingStats()
    mesh = extract_mesh(block_map, config, args.threads or default_threads(), stats)
    if mesh.is_empty():
        logger.warning("Volume produced an empty mesh")
    export_mesh(mesh, args.out)

    kind = "directional" if directional else "classic"
    print(f"\n✅ Extracted {mesh.triangle_count} triangles ({kind} marching cubes)")
    print(f"📍 Mesh location: {Path(args.out)}")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    """Measure a mesh against a reference and write a report plus heatmap."""
    mesh = load_mesh(args.mesh)
    reference = load_reference(args.reference)
    report = mesh_to_reference_distances(mesh, reference, workers=args.threads or -1)

    clamp_max = args.heatmap_max
    if clamp_max is None:
        clamp_max = 4.0 * build_config(args).voxel_size
    heatmap = Path(args.heatmap) if args.heatmap else Path(args.out).with_suffix(".heatmap.ply")
    export_mesh(mesh.with_scalars(heatmap_scalars(report, clamp_max)), heatmap)

    values = {"mesh": str(args.mesh), "reference": str(args.reference), **report.as_dict()}
    values["heatmap_max"] = clamp_max
    write_report(values, args.out, "distance report")

    print(f"\n✅ RMSE {1000.0 * report.rmse:.3f} mm over {report.count} vertices")
    print(f"   mean {1000.0 * report.mean:.3f} mm, max {1000.0 * report.max:.3f} mm")
    print(f"📍 Report: {Path(args.out)}")
    print(f"📍 Heatmap: {heatmap}")
    return EXIT_OK


def sweep_run(
    description: SceneDescription,
    frames: Sequence,
    config: FusionConfig,
    threads: int,
) -> Dict[str, Any]:
    """Fuse, mesh and evaluate one sweep configuration."""
    recon = Reconstruction(config, threads)
    recon.integrate_all(frames)
    start = time.perf_counter()
    mesh = recon.extract_mesh()
    mesh_s = time.perf_counter() - start

    report = mesh_to_reference_distances(mesh, description.scene)
    timing = timing_report(recon.frame_stats, [mesh_s])
    blocks, arrays_per_block = voxel_array_stats(recon.block_map)
    return {
        "rmse": report.rmse,
        "mean": report.mean,
        "max": report.max,
        "vertices": mesh.vertex_count,
        "triangles": mesh.triangle_count,
        "blocks": blocks,
        "arrays_per_block": arrays_per_block,
        "fusion_ms": 1000.0 * timing.fusion_s,
        "mesh_ms": 1000.0 * timing.mesh_s,
        "meshing_fraction": timing.meshing_fraction,
    }


def cmd_sweep(args: argparse.Namespace) -> int:
    """Cross product of scenes, modes and voxel sizes into one CSV table."""
    rows = []
    failures = 0
    for scene_name in args.scenes:
        try:
            description = apply_render_overrides(resolve_scene(scene_name), args)
            frames = description.render(args.frames, args.seed)
        except Exception as e:
            # every run of this scene fails the same way
            logger.warning(f"{scene_name}: {e}")
            for mode in args.modes:
                for voxel_size in args.voxel_sizes:
                    failures += 1
                    rows.append(
                        {"scene": scene_name, "mode": mode, "voxel_size": voxel_size, "error": str(e)}
                    )
            continue

        for mode in args.modes:
            for voxel_size in args.voxel_sizes:
                row: Dict[str, Any] = {
                    "scene": description.scene.name,
                    "mode": mode,
                    "voxel_size": voxel_size,
                    "frames": len(frames),
                }
                try:
                    config = replace(build_config(args, mode), voxel_size=voxel_size)
                    row.update(sweep_run(description, frames, config, args.threads))
                except Exception as e:
                    failures += 1
                    logger.warning(f"{scene_name} {mode} {voxel_size}: {e}")
                    row["error"] = str(e)
                logger.info(
                    f"{row['scene']:<10} {mode:<14} {voxel_size:<7} rmse={row.get('rmse', float('nan')):.6f}"
                )
                rows.append(row)

    write_csv(rows, args.out)
    print(f"\n✅ Sweep finished: {len(rows)} runs, {failures} failed")
    print(f"📍 Table: {Path(args.out)}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    """
    Build the command line parser.

    Returns:
        Parser with render, fuse, mesh, eval and sweep subcommands
    """
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "-v", "--verbose",
        action="store_true",
        help="Enable verbose logging (DTSDF_LOG sets the level otherwise)"
    )
    common.add_argument("--config", help="key = value configuration file")
    common.add_argument(
        "--threads",
        type=positive_int,
        default=None,
        help="Worker threads (default: hardware parallelism)"
    )

    fusion = argparse.ArgumentParser(add_help=False)
    fusion.add_argument("--mode", choices=MODE_LABELS, help="Fusion mode (default from config)")
    fusion.add_argument("--voxel-size", type=positive_float, help="Voxel size in meters")
    fusion.add_argument("--trunc-factor", type=float, help="Truncation distance in voxels")

    render = argparse.ArgumentParser(add_help=False)
    render.add_argument("--frames", type=positive_int, help="Number of orbit frames")
    render.add_argument("--width", type=positive_int, help="Image width in pixels")
    render.add_argument("--height", type=positive_int, help="Image height in pixels")
    render.add_argument("--noise", type=float, help="Depth noise sigma_0 (noise = sigma_0 z^2)")
    render.add_argument("--seed", type=int, default=0, help="Noise seed (default: 0)")

    parser = argparse.ArgumentParser(
        prog="dtsdf",
        description="Directional TSDF fusion, meshing and evaluation",
        epilog=f"dtsdf v{__version__}"
    )
    parser.add_argument(
        "--version",
        action="version",
        version=f"dtsdf v{__version__}"
    )
    commands = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = commands.add_parser("render", parents=[common, render], help="Render a synthetic dataset")
    p.add_argument("scene", help=f"Built-in scene ({', '.join(BUILTIN_SCENES)}) or YAML file")
    p.add_argument("--out", required=True, help="Dataset output directory")
    p.set_defaults(handler=cmd_render)

    p = commands.add_parser("fuse", parents=[common, fusion], help="Fuse a dataset into a volume")
    p.add_argument("dataset", help="Dataset directory")
    p.add_argument("--out", required=True, help="Volume snapshot file")
    p.add_argument("--frames", type=positive_int, help="Fuse only the first N frames")
    p.add_argument(
        "--mesh-every",
        type=positive_int,
        default=None,
        help="Also extract a mesh every N frames to time incremental updates"
    )
    p.set_defaults(handler=cmd_fuse)

    p = commands.add_parser("mesh", parents=[common], help="Extract a mesh from a volume")
    p.add_argument("volume", help="Volume snapshot file")
    p.add_argument("--out", required=True, help="Mesh file (.ply or .obj)")
    p.add_argument(
        "--baseline",
        action="store_true",
        help="Require an undirected volume and mesh it with classic marching cubes"
    )
    p.set_defaults(handler=cmd_mesh)

    p = commands.add_parser("eval", parents=[common, fusion], help="Measure a mesh against a reference")
    p.add_argument("mesh", help="Mesh file (.ply or .obj)")
    p.add_argument("reference", help="Built-in scene, YAML scene or reference mesh")
    p.add_argument("--out", required=True, help="Report file (key = value)")
    p.add_argument("--heatmap", help="Heatmap PLY (default: next to the report)")
    p.add_argument(
        "--heatmap-max",
        type=positive_float,
        help="Distance mapped to red (default: 4 voxels)"
    )
    p.set_defaults(handler=cmd_eval)

    p = commands.add_parser("sweep", parents=[common, render], help="Run scene x mode x voxel size")
    p.add_argument("--scenes", nargs="+", default=list(BUILTIN_SCENES), help="Scenes to run")
    p.add_argument("--modes", nargs="+", choices=MODE_LABELS, required=True, help="Fusion modes")
    p.add_argument(
        "--voxel-sizes",
        nargs="+",
        type=positive_float,
        required=True,
        help="Voxel sizes in meters"
    )
    p.add_argument("--trunc-factor", type=float, help="Truncation distance in voxels")
    p.add_argument("--out", required=True, help="CSV output file")
    p.set_defaults(handler=cmd_sweep)

    return parser


def parse_arguments(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    """
    Parse command line arguments.

    Returns:
        Parsed arguments namespace
    """
    return build_parser().parse_args(argv)


def run(argv: Optional[Sequence[str]] = None) -> int:
    """
    Run one command and map failures to exit codes.

    Returns:
        0 on success, 2 for usage and configuration errors, 3 for bad input,
        4 for other failures, 130 when interrupted
    """
    try:
        args = parse_arguments(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE

    setup_logging(args.verbose)

    try:
        return args.handler(args)
    except KeyboardInterrupt:
        print("\n\nOperation cancelled by user", file=sys.stderr)
        return EXIT_INTERRUPTED
    except ConfigError as e:
        logger.error(f"Error: {e}", exc_info=args.verbose)
        print(f"\n❌ Configuration error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (InputError, FileNotFoundError) as e:
        logger.error(f"Error: {e}", exc_info=args.verbose)
        print(f"\n❌ Input error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as e:
        logger.error(f"Error: {e}", exc_info=args.verbose)
        print(f"\n❌ Error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


def main() -> None:
    """Main entry point for dtsdf."""
    sys.exit(run())


if __name__ == "__main__":
    main()
