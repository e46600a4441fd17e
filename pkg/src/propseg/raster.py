"""Grid primitives and elementary mask algebra shared by all stages.

Grids are row-major with the origin at the top-left: row index r in [0, H),
column index c in [0, W). All types copy their input buffer and freeze it,
so every operation in this package is a pure function of immutable values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def _as_grid(values, dtype) -> np.ndarray:
    a = np.array(values, dtype=dtype, copy=True)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise ValueError(f"expected a non-empty 2D grid, got shape {a.shape}")
    return a


def _require_same_shape(a, b, op: str) -> None:
    if a.shape != b.shape:
        raise ValueError(f"{op}: dimension mismatch {a.shape} vs {b.shape}")


@dataclass(frozen=True, eq=False)
class ScoreMap:
    """Per-instance objectness likelihoods, finite values in [0, 1]."""

    values: np.ndarray

    def __post_init__(self):
        v = _as_grid(self.values, np.float64)
        if not np.isfinite(v).all():
            raise ValueError("score map contains non-finite values")
        if v.min() < 0.0 or v.max() > 1.0:
            raise ValueError("score map values must lie in [0, 1]")
        object.__setattr__(self, "values", _frozen(v))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """A {0, 1} grid, stored as booleans."""

    values: np.ndarray

    def __post_init__(self):
        a = np.array(self.values, copy=True)
        if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
            raise ValueError(f"expected a non-empty 2D grid, got shape {a.shape}")
        if a.dtype != np.bool_:
            if not np.isin(a, (0, 1)).all():
                raise ValueError("mask values must be exactly 0 or 1")
            a = a.astype(np.bool_)
        object.__setattr__(self, "values", _frozen(a))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def area(self) -> int:
        """Number of set pixels."""
        return int(np.count_nonzero(self.values))

    @classmethod
    def empty(cls, height: int, width: int) -> BinaryMask:
        return cls(np.zeros((height, width), dtype=np.bool_))


@dataclass(frozen=True, eq=False)
class LabelMap:
    """Instance labels per pixel: 0 is background, k >= 1 is instance k."""

    labels: np.ndarray

    def __post_init__(self):
        a = _as_grid(self.labels, np.int32)
        if a.min() < 0:
            raise ValueError("labels must be non-negative")
        object.__setattr__(self, "labels", _frozen(a))

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape

    @property
    def max_label(self) -> int:
        return int(self.labels.max())

    def instance_region(self, instance: int) -> BinaryMask:
        """Mask of pixels carrying the given instance label."""
        if instance < 1:
            raise ValueError("instance ids start at 1")
        return BinaryMask(self.labels == instance)


@dataclass(frozen=True, eq=False)
class SequenceState:
    """Previously selected region per instance, carried frame to frame.

    Instance k (1-based) is held at ``regions[k - 1]``.
    """

    regions: tuple[BinaryMask, ...]

    def __post_init__(self):
        regions = tuple(self.regions)
        if not regions:
            raise ValueError("sequence state needs at least one instance")
        shape = regions[0].shape
        for r in regions[1:]:
            _require_same_shape(regions[0].values, r.values, "sequence state")
        object.__setattr__(self, "regions", regions)

    @property
    def instance_count(self) -> int:
        return len(self.regions)

    @property
    def shape(self) -> tuple[int, int]:
        return self.regions[0].shape

    @property
    def areas(self) -> tuple[int, ...]:
        return tuple(r.area for r in self.regions)

    @classmethod
    def from_labels(cls, labels: LabelMap, instance_count: int | None = None) -> SequenceState:
        """Build per-instance regions from an annotation label map.

        Non-zero labels must be exactly 1..N; N defaults to the largest label.
        """
        present = set(np.unique(labels.labels)) - {0}
        n = instance_count if instance_count is not None else labels.max_label
        if n < 1:
            raise ValueError("label map contains no instances")
        if present != set(range(1, n + 1)):
            raise ValueError(f"instance labels must be contiguous 1..{n}, found {sorted(present)}")
        return cls(tuple(labels.instance_region(k) for k in range(1, n + 1)))

    def advance(self, labels: LabelMap) -> SequenceState:
        """New state taking each instance's region from the label map.

        An instance absent from the label map keeps its previous region, so a
        temporarily lost track can still be matched in later frames.
        """
        _require_same_shape(self.regions[0].values, labels.labels, "state advance")
        if labels.max_label > self.instance_count:
            raise ValueError(
                f"label map references instance {labels.max_label}, "
                f"state has {self.instance_count}"
            )
        updated = []
        for k, old in enumerate(self.regions, start=1):
            region = labels.instance_region(k)
            updated.append(region if region.area > 0 else old)
        return SequenceState(tuple(updated))


def jaccard(a: BinaryMask, b: BinaryMask) -> float:
    """Intersection over union of two masks; 0.0 when both are empty."""
    _require_same_shape(a.values, b.values, "jaccard")
    union = int(np.count_nonzero(a.values | b.values))
    if union == 0:
        return 0.0
    inter = int(np.count_nonzero(a.values & b.values))
    return inter / union


def coverage(a: BinaryMask, b: BinaryMask) -> float:
    """|a & b| / |b|: the fraction of b lying inside a."""
    _require_same_shape(a.values, b.values, "coverage")
    denom = b.area
    if denom == 0:
        raise ValueError("coverage undefined for an empty reference mask")
    return int(np.count_nonzero(a.values & b.values)) / denom


def gate_foreground(s: ScoreMap, fg: BinaryMask) -> ScoreMap:
    """Zero every score outside the foreground mask."""
    _require_same_shape(s.values, fg.values, "gate_foreground")
    return ScoreMap(np.where(fg.values, s.values, 0.0))


def threshold(s: ScoreMap, t: float) -> BinaryMask:
    """Binarize at t, inclusive: a score exactly equal to t counts as set."""
    if not np.isfinite(t):
        raise ValueError("threshold must be finite")
    return BinaryMask(s.values >= t)
