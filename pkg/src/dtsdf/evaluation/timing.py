"""
Per-phase timing summaries of fusion and meshing.
"""

from dataclasses import dataclass, field
from typing import Dict, Sequence

import numpy as np

from ..errors import InputError
from ..fusion.integrator import FusionStats


PHASES = ("preprocess_s", "allocate_s", "fuse_s", "finalize_s")


@dataclass
class TimingReport:
    """Mean seconds per frame for each phase, plus meshing."""
    frames: int
    phases: Dict[str, float] = field(default_factory=dict)
    fusion_s: float = 0.0
    mesh_s: float = 0.0
    total_s: float = 0.0
    meshing_fraction: float = 0.0

    def as_dict(self) -> Dict[str, float]:
        values: Dict[str, float] = {"frames": self.frames}
        values.update(self.phases)
        values.update(
            fusion_s=self.fusion_s,
            mesh_s=self.mesh_s,
            total_s=self.total_s,
            meshing_fraction=self.meshing_fraction,
        )
        return values


def timing_report(stats: Sequence[FusionStats], mesh_times: Sequence[float] = ()) -> TimingReport:
    """
    Average fusion phases over frames and spread meshing time over them.

    Meshing time is the sum of ``mesh_times`` divided by the number of
    frames, so a single final extraction and per-frame extractions are
    comparable. The meshing fraction is mesh time over total time.

    Args:
        stats: FusionStats of every fused frame
        mesh_times: Seconds of each mesh extraction

    Returns:
        TimingReport

    Raises:
        InputError: If there are no frames
    """
    if not stats:
        raise InputError("Timing report needs at least one frame")
    frames = len(stats)
    phases = {name: float(np.mean([getattr(s, name) for s in stats])) for name in PHASES}
    fusion_s = sum(phases.values())
    mesh_s = float(np.sum(mesh_times)) / frames
    total_s = fusion_s + mesh_s
    return TimingReport(
        frames=frames,
        phases=phases,
        fusion_s=fusion_s,
        mesh_s=mesh_s,
        total_s=total_s,
        meshing_fraction=mesh_s / total_s if total_s > 0 else 0.0,
    )
