"""Independent reference implementations used as test oracles.

Everything here is written as a straight-line transcription of the intended
behavior, with explicit loops and no imports from the package under test.
Slow and simple on purpose.
"""

from __future__ import annotations

import numpy as np

DIRECTION_NAMES = ("ltr", "rtl", "ttb", "btt")


# ---------------------------------------------------------------------------
# propagation
# ---------------------------------------------------------------------------

def project_reference(weights: np.ndarray) -> np.ndarray:
    """Rescale each (pixel, direction) triple with |sum| > 1 by 1/sum."""
    out = weights.copy()
    height, width = weights.shape[:2]
    for r in range(height):
        for c in range(width):
            for d in range(4):
                s = abs(out[r, c, d, 0]) + abs(out[r, c, d, 1]) + abs(out[r, c, d, 2])
                if s > 1.0:
                    out[r, c, d, :] = out[r, c, d, :] * (1.0 / s)
    return out


def propagate_reference(x: np.ndarray, w3: np.ndarray, direction: str) -> np.ndarray:
    """Nested-loop directional recurrence; w3 is the (H, W, 3) slice."""
    height, width = x.shape
    h = np.zeros((height, width))
    if direction == "ltr":
        for c in range(width):
            for r in range(height):
                if c == 0:
                    h[r, c] = x[r, c]
                    continue
                retained = 1.0
                for k, dr in enumerate((-1, 0, 1)):
                    rr = r + dr
                    if 0 <= rr < height:
                        retained -= w3[r, c, k]
                value = retained * x[r, c]
                for k, dr in enumerate((-1, 0, 1)):
                    rr = r + dr
                    if 0 <= rr < height:
                        value += w3[r, c, k] * h[rr, c - 1]
                h[r, c] = value
    elif direction == "rtl":
        for c in range(width - 1, -1, -1):
            for r in range(height):
                if c == width - 1:
                    h[r, c] = x[r, c]
                    continue
                retained = 1.0
                for k, dr in enumerate((-1, 0, 1)):
                    rr = r + dr
                    if 0 <= rr < height:
                        retained -= w3[r, c, k]
                value = retained * x[r, c]
                for k, dr in enumerate((-1, 0, 1)):
                    rr = r + dr
                    if 0 <= rr < height:
                        value += w3[r, c, k] * h[rr, c + 1]
                h[r, c] = value
    elif direction == "ttb":
        for r in range(height):
            for c in range(width):
                if r == 0:
                    h[r, c] = x[r, c]
                    continue
                retained = 1.0
                for k, dc in enumerate((-1, 0, 1)):
                    cc = c + dc
                    if 0 <= cc < width:
                        retained -= w3[r, c, k]
                value = retained * x[r, c]
                for k, dc in enumerate((-1, 0, 1)):
                    cc = c + dc
                    if 0 <= cc < width:
                        value += w3[r, c, k] * h[r - 1, cc]
                h[r, c] = value
    elif direction == "btt":
        for r in range(height - 1, -1, -1):
            for c in range(width):
                if r == height - 1:
                    h[r, c] = x[r, c]
                    continue
                retained = 1.0
                for k, dc in enumerate((-1, 0, 1)):
                    cc = c + dc
                    if 0 <= cc < width:
                        retained -= w3[r, c, k]
                value = retained * x[r, c]
                for k, dc in enumerate((-1, 0, 1)):
                    cc = c + dc
                    if 0 <= cc < width:
                        value += w3[r, c, k] * h[r + 1, cc]
                h[r, c] = value
    else:
        raise ValueError(direction)
    return h


def refine_reference(x: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Project, run all four directions, take the per-pixel max, clamp."""
    projected = project_reference(weights)
    hidden = [
        propagate_reference(x, projected[:, :, d, :], name)
        for d, name in enumerate(DIRECTION_NAMES)
    ]
    height, width = x.shape
    out = np.zeros((height, width))
    for r in range(height):
        for c in range(width):
            best = hidden[0][r, c]
            for d in range(1, 4):
                if hidden[d][r, c] > best:
                    best = hidden[d][r, c]
            out[r, c] = min(1.0, max(0.0, best))
    return out


# ---------------------------------------------------------------------------
# connected components (union-find)
# ---------------------------------------------------------------------------

def union_find_components(mask: np.ndarray, connectivity: int) -> list[set[tuple[int, int]]]:
    """Connected regions as pixel sets, ordered by smallest row-major index."""
    height, width = mask.shape
    parent = list(range(height * width))

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    def union(a: int, b: int) -> None:
        ra, rb = find(a), find(b)
        if ra != rb:
            # Keep the smaller index as root, so the root is the region's
            # smallest row-major pixel.
            parent[max(ra, rb)] = min(ra, rb)

    if connectivity == 8:
        offsets = ((0, 1), (1, -1), (1, 0), (1, 1))
    elif connectivity == 4:
        offsets = ((0, 1), (1, 0))
    else:
        raise ValueError(connectivity)
    for r in range(height):
        for c in range(width):
            if not mask[r, c]:
                continue
            for dr, dc in offsets:
                rr, cc = r + dr, c + dc
                if 0 <= rr < height and 0 <= cc < width and mask[rr, cc]:
                    union(r * width + c, rr * width + cc)
    groups: dict[int, set[tuple[int, int]]] = {}
    for r in range(height):
        for c in range(width):
            if mask[r, c]:
                groups.setdefault(find(r * width + c), set()).add((r, c))
    return [groups[root] for root in sorted(groups)]


# ---------------------------------------------------------------------------
# region filtering (steps 1-3)
# ---------------------------------------------------------------------------

def _jaccard(a: np.ndarray, b: np.ndarray) -> float:
    union = int(np.count_nonzero(a | b))
    if union == 0:
        return 0.0
    return int(np.count_nonzero(a & b)) / union


def craf_reference(
    score_values: list[np.ndarray],
    prev_values: list[np.ndarray],
    alpha: float,
    beta: float,
    gamma: float,
    delta: float,
    connectivity: int,
) -> list[np.ndarray]:
    """Straight-line transcription of the three-step region filter."""
    n = len(score_values)
    height, width = score_values[0].shape

    # Step 1: per object, pick the connected region with the best overlap
    # against the previous frame, unless it is an alpha-sliver of the largest.
    region_masks: list[list[np.ndarray]] = []
    chosen_index: list[int | None] = []
    selections: list[np.ndarray] = []
    for i in range(n):
        support = score_values[i] >= 0.5
        masks = []
        for component in union_find_components(support, connectivity):
            m = np.zeros((height, width), dtype=bool)
            for r, c in component:
                m[r, c] = True
            masks.append(m)
        region_masks.append(masks)
        if not masks:
            chosen_index.append(None)
            selections.append(np.zeros((height, width), dtype=bool))
            continue
        prev = prev_values[i]
        overlaps = [_jaccard(m, prev) for m in masks]
        areas = [int(np.count_nonzero(m)) for m in masks]
        best = 0
        for k in range(1, len(masks)):
            if overlaps[k] > overlaps[best] or (
                overlaps[k] == overlaps[best] and areas[k] > areas[best]
            ):
                best = k
        largest = 0
        for k in range(1, len(masks)):
            if areas[k] > areas[largest]:
                largest = k
        pick = best if areas[best] / areas[largest] > alpha else largest
        chosen_index.append(pick)
        selections.append(masks[pick].copy())

    # Step 2: ordered pairs (i, j); if selection j is almost entirely inside
    # selection i, remove the shared pixels from i.
    def run_step2(sel: list[np.ndarray]) -> list[np.ndarray]:
        sel = [m.copy() for m in sel]
        for i in range(n):
            for j in range(n):
                if i == j:
                    continue
                size_j = int(np.count_nonzero(sel[j]))
                if size_j == 0:
                    continue
                inter = int(np.count_nonzero(sel[i] & sel[j]))
                if inter / size_j > beta:
                    sel[i] = sel[i] & ~sel[j]
        return sel

    selections = run_step2(selections)

    # Step 3: an object whose selection collapsed may switch to its best
    # unselected region, then step 2 runs once more.
    for i in range(n):
        prev = prev_values[i]
        prev_area = int(np.count_nonzero(prev))
        if int(np.count_nonzero(selections[i])) >= gamma * prev_area:
            continue
        best_k = None
        best_overlap = -1.0
        best_area = -1
        for k, m in enumerate(region_masks[i]):
            if k == chosen_index[i]:
                continue
            overlap = _jaccard(m, prev)
            area = int(np.count_nonzero(m))
            if best_k is None or overlap > best_overlap or (
                overlap == best_overlap and area > best_area
            ):
                best_k, best_overlap, best_area = k, overlap, area
        if best_k is not None and best_overlap > delta:
            selections[i] = region_masks[i][best_k].copy()
            selections = run_step2(selections)

    return [np.where(selections[i], score_values[i], 0.0) for i in range(n)]


# ---------------------------------------------------------------------------
# label assembly and sequence driving
# ---------------------------------------------------------------------------

def assemble_labels_reference(score_values: list[np.ndarray], bg_threshold: float) -> np.ndarray:
    height, width = score_values[0].shape
    labels = np.zeros((height, width), dtype=np.int32)
    for r in range(height):
        for c in range(width):
            best = score_values[0][r, c]
            best_i = 0
            for i in range(1, len(score_values)):
                if score_values[i][r, c] > best:
                    best = score_values[i][r, c]
                    best_i = i
            labels[r, c] = 0 if best < bg_threshold else best_i + 1
    return labels


def advance_reference(
    prev_regions: list[np.ndarray], labels: np.ndarray
) -> list[np.ndarray]:
    updated = []
    for k, old in enumerate(prev_regions, start=1):
        region = labels == k
        updated.append(region if int(np.count_nonzero(region)) > 0 else old)
    return updated


def pipeline_reference(
    frames: list[tuple[np.ndarray, list[np.ndarray], np.ndarray]],
    annotation: np.ndarray,
    *,
    alpha: float = 0.2,
    beta: float = 0.9,
    gamma: float = 0.1,
    delta: float = 0.4,
    connectivity: int = 8,
    bg_threshold: float = 0.5,
    use_spn: bool = True,
    use_craf: bool = True,
) -> list[np.ndarray]:
    """End-to-end transcription: gate, propagate, re-gate, filter, label.

    ``frames`` holds (foreground bool array, per-object score arrays, weight
    array of shape (H, W, 4, 3)) per frame; frame 0's entries are unused
    because its output is the annotation itself.
    """
    n = int(annotation.max())
    state = [annotation == k for k in range(1, n + 1)]
    outputs = [annotation.copy()]
    for t in range(1, len(frames)):
        foreground, scores, weights = frames[t]
        refined = []
        for s in scores:
            gated = np.where(foreground, s, 0.0)
            if use_spn:
                gated = np.where(foreground, refine_reference(gated, weights), 0.0)
            refined.append(gated)
        if use_craf:
            refined = craf_reference(
                refined, state, alpha, beta, gamma, delta, connectivity
            )
        labels = assemble_labels_reference(refined, bg_threshold)
        state = advance_reference(state, labels)
        outputs.append(labels)
    return outputs
