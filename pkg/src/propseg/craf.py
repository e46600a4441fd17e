"""Connected region-aware filtering of per-object score maps.

Per frame, each object keeps one best connected region of its thresholded
score map, chosen by overlap with the object's previous-frame region
(step 1); regions that almost entirely cover another object's selection are
trimmed (step 2); an object whose selection collapsed relative to its
previous area may be rescued by one of its unselected regions (step 3).
Scores outside the final selections are zeroed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import ndimage

from .raster import BinaryMask, ScoreMap, SequenceState, jaccard, threshold

# Score maps are binarized at the same level that separates foreground from
# background during label assembly.
SCORE_THRESHOLD = 0.5

_STRUCTURE = {
    4: np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool),
    8: np.ones((3, 3), dtype=bool),
}


@dataclass(frozen=True)
class CrafParams:
    """Filter thresholds; the defaults are the empirically effective values."""

    alpha: float = 0.2   # floor on selected-region area relative to the largest region
    beta: float = 0.9    # coverage above which an enclosing selection is trimmed
    gamma: float = 0.1   # fraction of the previous area below which rescue triggers
    delta: float = 0.4   # overlap a rescue candidate must exceed
    connectivity: int = 8

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma", "delta"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.connectivity not in (4, 8):
            raise ValueError(f"connectivity must be 4 or 8, got {self.connectivity}")


@dataclass(eq=False)
class Region:
    """One connected region of a thresholded score map."""

    mask: BinaryMask
    area: int
    jaccard_to_previous: float | None = field(default=None)


RegionSet = list[Region]


def connected_components(m: BinaryMask, connectivity: int = 8) -> RegionSet:
    """Maximal connected regions of a mask, in deterministic order.

    Regions are sorted by the smallest row-major pixel index they contain.
    An empty mask yields an empty list.
    """
    if connectivity not in (4, 8):
        raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")
    labels, count = ndimage.label(m.values, structure=_STRUCTURE[connectivity])
    if count == 0:
        return []
    flat = labels.ravel()
    ids, first_index = np.unique(flat, return_index=True)
    order = sorted(
        (int(first_index[i]), int(ids[i])) for i in range(len(ids)) if ids[i] != 0
    )
    regions: RegionSet = []
    for _, label_id in order:
        mask = labels == label_id
        regions.append(Region(mask=BinaryMask(mask), area=int(mask.sum())))
    return regions


def _select_index(regions: RegionSet, prev: BinaryMask, params: CrafParams) -> int:
    """Step 1 selection: best previous-frame overlap, guarded by area ratio."""
    jaccards = []
    for region in regions:
        j = jaccard(region.mask, prev)
        region.jaccard_to_previous = j
        jaccards.append(j)
    best = 0
    for i in range(1, len(regions)):
        if jaccards[i] > jaccards[best] or (
            jaccards[i] == jaccards[best] and regions[i].area > regions[best].area
        ):
            best = i
    largest = max(range(len(regions)), key=lambda i: regions[i].area)
    if regions[best].area / regions[largest].area > params.alpha:
        return best
    # The overlap winner is a sliver; keep the dominant region instead.
    return largest


def select_best_region(
    regions: RegionSet,
    prev: BinaryMask,
    params: CrafParams,
    *,
    first_refinement: bool = False,
) -> BinaryMask:
    """Pick one region as the object's selection for this frame.

    ``prev`` may only be empty on an explicitly flagged first refinement, in
    which case all overlaps tie at zero and the largest region wins.
    """
    if not regions:
        raise ValueError("select_best_region: empty region set")
    if prev.area == 0 and not first_refinement:
        raise ValueError("select_best_region: previous region is empty")
    for region in regions:
        if region.mask.shape != prev.shape:
            raise ValueError("select_best_region: dimension mismatch against previous region")
    return regions[_select_index(regions, prev, params)].mask


def resolve_overlaps(selected: Sequence[BinaryMask], params: CrafParams) -> list[BinaryMask]:
    """Step 2: trim selections that almost entirely cover another object's.

    Ordered pairs (i, j) are visited in ascending object-id order; when the
    fraction of selection j lying inside selection i exceeds beta, those
    pixels are removed from i. Empty reference selections are skipped.
    """
    masks = [np.array(m.values, copy=True) for m in selected]
    for m in masks[1:]:
        if m.shape != masks[0].shape:
            raise ValueError("resolve_overlaps: dimension mismatch between selections")
    n = len(masks)
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            size_j = int(np.count_nonzero(masks[j]))
            if size_j == 0:
                continue
            inter = int(np.count_nonzero(masks[i] & masks[j]))
            if inter / size_j > params.beta:
                masks[i] &= ~masks[j]
    return [BinaryMask(m) for m in masks]


def rescue_small_regions(
    selected: Sequence[BinaryMask],
    regions_per_object: Sequence[RegionSet],
    selected_indices: Sequence[int | None],
    prev_regions: Sequence[BinaryMask],
    params: CrafParams,
) -> list[BinaryMask]:
    """Step 3: re-select for objects whose selection collapsed.

    An object whose current selection is smaller than gamma times its
    previous-frame area may switch to its best unselected region, provided
    that region's overlap with the previous frame exceeds delta. Each switch
    re-runs the overlap resolution once; at most one rescue per object.
    """
    masks = list(selected)
    for i in range(len(masks)):
        prev = prev_regions[i]
        if masks[i].area >= params.gamma * prev.area:
            continue
        candidates = [
            region
            for idx, region in enumerate(regions_per_object[i])
            if idx != selected_indices[i]
        ]
        if not candidates:
            continue
        best = candidates[0]
        best_j = jaccard(best.mask, prev)
        for region in candidates[1:]:
            j = jaccard(region.mask, prev)
            if j > best_j or (j == best_j and region.area > best.area):
                best, best_j = region, j
        if best_j > params.delta:
            masks[i] = best.mask
            masks = resolve_overlaps(masks, params)
    return masks


def apply_craf(
    score_maps: Sequence[ScoreMap], state: SequenceState, params: CrafParams = CrafParams()
) -> list[ScoreMap]:
    """Run steps 1-3 over all objects and zero scores outside the selections.

    The caller owns the temporal state; it is advanced from the labels
    assembled downstream, not here (see SequenceState.advance). An object
    with an empty previous region is treated as a first refinement so a lost
    track can re-acquire its largest region.
    """
    if len(score_maps) != state.instance_count:
        raise ValueError(
            f"apply_craf: {len(score_maps)} score maps for {state.instance_count} instances"
        )
    shape = state.shape
    for s in score_maps:
        if s.shape != shape:
            raise ValueError(f"apply_craf: dimension mismatch {s.shape} vs {shape}")

    regions_per_object: list[RegionSet] = []
    selected_indices: list[int | None] = []
    selections: list[BinaryMask] = []
    for i, scores in enumerate(score_maps):
        regions = connected_components(threshold(scores, SCORE_THRESHOLD), params.connectivity)
        regions_per_object.append(regions)
        if not regions:
            selected_indices.append(None)
            selections.append(BinaryMask.empty(*shape))
            continue
        idx = _select_index(regions, state.regions[i], params)
        selected_indices.append(idx)
        selections.append(regions[idx].mask)

    selections = resolve_overlaps(selections, params)
    selections = rescue_small_regions(
        selections, regions_per_object, selected_indices, state.regions, params
    )
    return [
        ScoreMap(np.where(selections[i].values, score_maps[i].values, 0.0))
        for i in range(len(score_maps))
    ]
