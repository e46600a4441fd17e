"""Per-sequence orchestration: gate, propagate, filter, assemble labels.

Frames are strictly sequential because the region filter compares against
the previous frame's emitted regions; everything within a frame is a pure
function of the frame bundle and the carried state.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .craf import CrafParams, apply_craf
from .propagation import AffinityField, refine
from .raster import BinaryMask, LabelMap, ScoreMap, SequenceState, gate_foreground


@dataclass(frozen=True, eq=False)
class FrameBundle:
    """All per-frame inputs: foreground mask, per-instance scores, affinities."""

    index: int
    foreground: BinaryMask
    scores: tuple[ScoreMap, ...]
    affinity: AffinityField

    def __post_init__(self):
        if self.index < 0:
            raise ValueError("frame index must be non-negative")
        scores = tuple(self.scores)
        if not scores:
            raise ValueError("frame bundle needs at least one instance score map")
        shape = self.foreground.shape
        for s in scores:
            if s.shape != shape:
                raise ValueError(f"frame bundle: score map shape {s.shape} vs {shape}")
        if self.affinity.shape != shape:
            raise ValueError(f"frame bundle: affinity shape {self.affinity.shape} vs {shape}")
        object.__setattr__(self, "scores", scores)

    @property
    def instance_count(self) -> int:
        return len(self.scores)


@dataclass(frozen=True)
class PipelineParams:
    """Stage toggles plus the tunables forwarded to the region filter."""

    craf: CrafParams = CrafParams()
    bg_threshold: float = 0.5
    use_spn: bool = True
    use_craf: bool = True

    def __post_init__(self):
        if not (0.0 <= self.bg_threshold <= 1.0):
            raise ValueError("bg_threshold must lie in [0, 1]")


@dataclass(frozen=True, eq=False)
class FrameResult:
    labels: LabelMap
    scores: tuple[ScoreMap, ...]
    state: SequenceState


def assemble_labels(score_maps: Sequence[ScoreMap], bg_threshold: float = 0.5) -> LabelMap:
    """Per-pixel argmax over instances; below-threshold maxima are background.

    Ties go to the lowest instance id.
    """
    if not score_maps:
        raise ValueError("assemble_labels: no score maps")
    shape = score_maps[0].shape
    for s in score_maps[1:]:
        if s.shape != shape:
            raise ValueError("assemble_labels: dimension mismatch between score maps")
    stack = np.stack([s.values for s in score_maps], axis=0)
    best = stack.max(axis=0)
    winner = stack.argmax(axis=0).astype(np.int32) + 1
    return LabelMap(np.where(best < bg_threshold, 0, winner))


def process_frame(
    bundle: FrameBundle, state: SequenceState, params: PipelineParams = PipelineParams()
) -> FrameResult:
    """Refine one frame and advance the temporal state.

    Scores are gated to the foreground, propagated under the frame's
    affinities, and gated again: propagation diffuses mass spatially, and the
    second gate keeps every score (hence every label) inside the foreground
    mask exactly. The region filter is skipped on frame 0, which has no
    previous frame to compare against.
    """
    if bundle.instance_count != state.instance_count:
        raise ValueError(
            f"process_frame: bundle has {bundle.instance_count} instances, "
            f"state has {state.instance_count}"
        )
    if bundle.foreground.shape != state.shape:
        raise ValueError(
            f"process_frame: frame shape {bundle.foreground.shape} vs state {state.shape}"
        )
    refined: list[ScoreMap] = []
    for scores in bundle.scores:
        gated = gate_foreground(scores, bundle.foreground)
        if params.use_spn:
            gated = gate_foreground(refine(gated, bundle.affinity), bundle.foreground)
        refined.append(gated)
    if params.use_craf and bundle.index != 0:
        refined = apply_craf(refined, state, params.craf)
    labels = assemble_labels(refined, params.bg_threshold)
    return FrameResult(labels=labels, scores=tuple(refined), state=state.advance(labels))


def process_sequence(
    frames: Sequence[FrameBundle],
    first_frame_annotation: LabelMap,
    params: PipelineParams = PipelineParams(),
) -> list[LabelMap]:
    """Run the per-frame pipeline over an ordered sequence.

    Frame 0's output is the given annotation (the semi-supervised
    convention); it also seeds the temporal state. Later frames are
    processed in order.
    """
    frames = list(frames)
    if not frames:
        raise ValueError("process_sequence: empty sequence")
    state = SequenceState.from_labels(first_frame_annotation)
    if frames[0].index != 0:
        raise ValueError("process_sequence: first bundle must be frame 0")
    last = -1
    for bundle in frames:
        if bundle.index <= last:
            raise ValueError("process_sequence: frame indices must be strictly increasing")
        last = bundle.index
        if bundle.instance_count != state.instance_count:
            raise ValueError(
                f"process_sequence: frame {bundle.index} has {bundle.instance_count} "
                f"instances, annotation has {state.instance_count}"
            )
        if bundle.foreground.shape != first_frame_annotation.shape:
            raise ValueError(
                f"process_sequence: frame {bundle.index} shape {bundle.foreground.shape} "
                f"vs annotation {first_frame_annotation.shape}"
            )
    outputs = [first_frame_annotation]
    for bundle in frames[1:]:
        result = process_frame(bundle, state, params)
        state = result.state
        outputs.append(result.labels)
    return outputs
