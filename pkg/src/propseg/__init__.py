"""Guided mask refinement for video instance segmentation post-processing.

Score maps are refined by a learned-affinity linear 2D propagation operator
(four directional scans merged by a per-pixel max) and filtered by a
connected-region stage that enforces temporal consistency across frames.
"""

from .craf import CrafParams, Region, apply_craf, connected_components
from .learning import (
    DivergenceError,
    FitConfig,
    GradcheckReport,
    GradientBundle,
    backward,
    finite_diff_check,
    fit_guidance,
    loss_gradient,
    weighted_loss,
)
from .pipeline import (
    FrameBundle,
    FrameResult,
    PipelineParams,
    assemble_labels,
    process_frame,
    process_sequence,
)
from .propagation import (
    AffinityField,
    Direction,
    integrate_directions,
    project_stable,
    propagate_direction,
    refine,
)
from .raster import (
    BinaryMask,
    LabelMap,
    ScoreMap,
    SequenceState,
    coverage,
    gate_foreground,
    jaccard,
    threshold,
)

__version__ = "0.1.0"

__all__ = [
    "AffinityField",
    "BinaryMask",
    "CrafParams",
    "Direction",
    "DivergenceError",
    "FitConfig",
    "FrameBundle",
    "FrameResult",
    "GradcheckReport",
    "GradientBundle",
    "LabelMap",
    "PipelineParams",
    "Region",
    "ScoreMap",
    "SequenceState",
    "apply_craf",
    "assemble_labels",
    "backward",
    "connected_components",
    "coverage",
    "finite_diff_check",
    "fit_guidance",
    "gate_foreground",
    "integrate_directions",
    "jaccard",
    "loss_gradient",
    "process_frame",
    "process_sequence",
    "project_stable",
    "propagate_direction",
    "refine",
    "threshold",
    "weighted_loss",
]
