"""Four-direction linear 2D propagation under per-pixel three-neighbor affinities.

One directional pass sweeps the grid scanline by scanline (columns for the
horizontal directions, rows for the vertical ones). The first scanline is
copied from the input; every later pixel is the affine combination

    h = (1 - sum_k p_k) * x + sum_k p_k * h_k

where h_k are the three adjacent pixels of the previous scanline (offsets
-1, 0, +1 along the scanline) and p_k the pixel's weights for the current
direction. Out-of-range neighbors are dropped from both sums, so every
in-range update stays a proper affine combination.

Stability follows from keeping each |p_-1| + |p_0| + |p_+1| <= 1: the
scanline-to-scanline transition is then a tridiagonal operator whose row
absolute sums are bounded by 1, so signals cannot blow up along the sweep.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .raster import ScoreMap, _frozen

# Projection leaves each triple's absolute sum at most 1 up to rounding of
# the rescaled weights; the validation tolerance absorbs those last ulps.
STABILITY_TOL = 1e-9


class Direction(IntEnum):
    """Scan directions in canonical tie-break order."""

    LEFT_TO_RIGHT = 0
    RIGHT_TO_LEFT = 1
    TOP_TO_BOTTOM = 2
    BOTTOM_TO_TOP = 3


@dataclass(frozen=True, eq=False)
class AffinityField:
    """Per-pixel propagation weights, shape (H, W, 4 directions, 3 neighbors).

    The direction axis follows the canonical ``Direction`` order; the
    neighbor axis holds the weights for offsets -1, 0, +1 along the previous
    scanline. Weights may be signed; stability is a separate projection step.
    """

    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64, copy=True)
        if w.ndim != 4 or w.shape[2:] != (4, 3):
            raise ValueError(f"affinity weights must have shape (H, W, 4, 3), got {w.shape}")
        if w.shape[0] < 1 or w.shape[1] < 1:
            raise ValueError("affinity field must cover a non-empty grid")
        if not np.isfinite(w).all():
            raise ValueError("affinity weights must be finite")
        object.__setattr__(self, "weights", _frozen(w))

    @property
    def height(self) -> int:
        return self.weights.shape[0]

    @property
    def width(self) -> int:
        return self.weights.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.weights.shape[:2]

    @classmethod
    def zeros(cls, height: int, width: int) -> AffinityField:
        """The identity operator: no propagation at all."""
        return cls(np.zeros((height, width, 4, 3)))

    def triple_sums(self) -> np.ndarray:
        """Absolute weight sum per pixel and direction, shape (H, W, 4)."""
        return np.abs(self.weights).sum(axis=3)


@dataclass(frozen=True, eq=False)
class PropagationResult:
    """Forward-pass artifacts kept around for the backward recursion."""

    hidden: np.ndarray      # (4, H, W) directional hidden maps
    values: np.ndarray      # (H, W) integrated output, before any clamping
    directions: np.ndarray  # (H, W) winning Direction per pixel


def project_stable(field: AffinityField) -> AffinityField:
    """Rescale each over-budget weight triple so its absolute sum is <= 1.

    Triples already within budget are returned unchanged, preserving the
    direction of every weight vector.
    """
    sums = field.triple_sums()
    scale = np.ones_like(sums)
    np.divide(1.0, sums, out=scale, where=sums > 1.0)
    return AffinityField(field.weights * scale[..., None])


def _require_stable(field: AffinityField) -> None:
    worst = field.triple_sums().max()
    if worst > 1.0 + STABILITY_TOL:
        raise ValueError(
            f"affinity field is not stability-projected: max |p-1|+|p0|+|p+1| = {worst:.6g} > 1"
        )


def _to_ltr(a: np.ndarray, d: Direction) -> np.ndarray:
    """Reorient an (H, W) or (H, W, 3) array so direction d scans left-to-right."""
    if d == Direction.LEFT_TO_RIGHT:
        return a
    if d == Direction.RIGHT_TO_LEFT:
        return a[:, ::-1]
    if d == Direction.TOP_TO_BOTTOM:
        return np.swapaxes(a, 0, 1)
    return np.swapaxes(a[::-1], 0, 1)


def _from_ltr(a: np.ndarray, d: Direction) -> np.ndarray:
    if d == Direction.LEFT_TO_RIGHT:
        return a
    if d == Direction.RIGHT_TO_LEFT:
        return a[:, ::-1]
    if d == Direction.TOP_TO_BOTTOM:
        return np.swapaxes(a, 0, 1)
    return np.swapaxes(a, 0, 1)[::-1]


def _effective_weights(w3: np.ndarray):
    """Per-pixel weights with out-of-range neighbor entries zeroed.

    Row 0 has no -1 neighbor and the last row no +1 neighbor; dropping their
    weights here removes them from both the neighbor sum and the retention
    coefficient at once.
    """
    h = w3.shape[0]
    w0 = w3[..., 0].copy()
    w0[0, :] = 0.0
    w2 = w3[..., 2].copy()
    w2[h - 1, :] = 0.0
    return w0, w3[..., 1], w2


def _scan_forward(x: np.ndarray, w3: np.ndarray) -> np.ndarray:
    """Left-to-right recurrence over columns; x is (H, W), w3 is (H, W, 3)."""
    height, width = x.shape
    w0, w1, w2 = _effective_weights(w3)
    retain = 1.0 - (w0 + w1 + w2)
    h = np.empty_like(x)
    h[:, 0] = x[:, 0]
    up = np.zeros(height)
    down = np.zeros(height)
    for j in range(1, width):
        prev = h[:, j - 1]
        up[1:] = prev[:-1]
        down[:-1] = prev[1:]
        h[:, j] = retain[:, j] * x[:, j] + w0[:, j] * up + w1[:, j] * prev + w2[:, j] * down
    return h


def _scan_backward(
    x: np.ndarray, w3: np.ndarray, hidden: np.ndarray, seed_error: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Reverse-mode sweep of ``_scan_forward``.

    Walks columns right-to-left, accumulating the error theta each pixel
    receives, then splits it into the input gradient (via the retention
    coefficient), the weight gradients (error times neighbor-minus-input),
    and the error flowing to the previous column through the weights.
    """
    height, width = x.shape
    w0, w1, w2 = _effective_weights(w3)
    retain = 1.0 - (w0 + w1 + w2)
    theta = np.array(seed_error, dtype=np.float64, copy=True)
    d_x = np.zeros_like(x)
    d_w = np.zeros((height, width, 3))
    up = np.zeros(height)
    down = np.zeros(height)
    for j in range(width - 1, 0, -1):
        t = theta[:, j]
        prev = hidden[:, j - 1]
        up[1:] = prev[:-1]
        down[:-1] = prev[1:]
        d_x[:, j] = t * retain[:, j]
        g0 = t * (up - x[:, j])
        g0[0] = 0.0
        g2 = t * (down - x[:, j])
        g2[-1] = 0.0
        d_w[:, j, 0] = g0
        d_w[:, j, 1] = t * (prev - x[:, j])
        d_w[:, j, 2] = g2
        flow = t * w1[:, j]
        flow = flow.copy()
        flow[:-1] += (t * w0[:, j])[1:]
        flow[1:] += (t * w2[:, j])[:-1]
        theta[:, j - 1] += flow
    d_x[:, 0] = theta[:, 0]
    return d_x, d_w


def _direction_pass(x: np.ndarray, w3: np.ndarray, d: Direction) -> np.ndarray:
    out = _scan_forward(
        np.ascontiguousarray(_to_ltr(x, d)), np.ascontiguousarray(_to_ltr(w3, d))
    )
    return np.ascontiguousarray(_from_ltr(out, d))


def _direction_backward(
    x: np.ndarray, w3: np.ndarray, hidden: np.ndarray, seed_error: np.ndarray, d: Direction
) -> tuple[np.ndarray, np.ndarray]:
    d_x, d_w = _scan_backward(
        np.ascontiguousarray(_to_ltr(x, d)),
        np.ascontiguousarray(_to_ltr(w3, d)),
        np.ascontiguousarray(_to_ltr(hidden, d)),
        np.ascontiguousarray(_to_ltr(seed_error, d)),
    )
    return np.ascontiguousarray(_from_ltr(d_x, d)), np.ascontiguousarray(_from_ltr(d_w, d))


def _score_values(x) -> np.ndarray:
    if isinstance(x, ScoreMap):
        return x.values
    a = np.asarray(x, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"expected a 2D grid, got shape {a.shape}")
    return a


def propagate_direction(x, field: AffinityField, d: Direction) -> np.ndarray:
    """Run one directional pass; returns the raw hidden map (unclamped).

    The field must already satisfy the stability budget (see project_stable).
    """
    xv = _score_values(x)
    if xv.shape != field.shape:
        raise ValueError(f"propagate_direction: dimension mismatch {xv.shape} vs {field.shape}")
    _require_stable(field)
    return _direction_pass(xv, field.weights[:, :, d, :], Direction(d))


def integrate_directions(
    h_ltr: np.ndarray, h_rtl: np.ndarray, h_ttb: np.ndarray, h_btt: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Pixelwise maximum of the four hidden maps.

    Also returns the winning direction per pixel (ties go to the earliest
    direction in canonical order), which the backward pass routes errors
    through.
    """
    maps = (h_ltr, h_rtl, h_ttb, h_btt)
    shape = np.asarray(maps[0]).shape
    for m in maps[1:]:
        if np.asarray(m).shape != shape:
            raise ValueError("integrate_directions: dimension mismatch between hidden maps")
    stack = np.stack(maps, axis=0)
    return stack.max(axis=0), stack.argmax(axis=0).astype(np.int8)


def forward(x, field: AffinityField, *, validate: bool = True) -> PropagationResult:
    """All four directional passes plus max integration, before clamping."""
    xv = _score_values(x)
    if xv.shape != field.shape:
        raise ValueError(f"forward: dimension mismatch {xv.shape} vs {field.shape}")
    if validate:
        _require_stable(field)
    hidden = np.stack(
        [_direction_pass(xv, field.weights[:, :, d, :], d) for d in Direction], axis=0
    )
    values, directions = integrate_directions(*hidden)
    return PropagationResult(hidden=hidden, values=values, directions=directions)


def refine(x: ScoreMap, field: AffinityField) -> ScoreMap:
    """Project the field, propagate in all four directions, integrate, clamp.

    Signed weights can overshoot [0, 1]; the final clamp restores the score
    map contract. The unclamped value is available through ``forward``.
    """
    if x.shape != field.shape:
        raise ValueError(f"refine: dimension mismatch {x.shape} vs {field.shape}")
    projected = project_stable(field)
    result = forward(x.values, projected, validate=False)
    return ScoreMap(np.clip(result.values, 0.0, 1.0))
