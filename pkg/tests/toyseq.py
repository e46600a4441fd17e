"""The bundled 3-frame, 2-object synthetic sequence.

Object 1 is a block on the left, object 2 a block on the right. From frame 1
on, object 2's score map leaks a small disconnected blob into object 1's
territory; the region filter should drop it, leaving the blob unlabeled.

All float arrays are pre-rounded through binary32 so that in-memory runs
match runs that go through .f32r files bit for bit.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

HEIGHT, WIDTH = 20, 24
FRAME_COUNT = 3

OBJ1_SLICE = (slice(6, 14), slice(2, 10))
OBJ2_SLICE = (slice(5, 15), slice(15, 22))
BLOB_SLICE = (slice(2, 5), slice(3, 6))

OBJ1_LEVEL = 0.9
OBJ2_LEVEL = 0.9
BLOB_LEVEL = 0.85
AFFINITY_LEVEL = 0.1


def _f32(a: np.ndarray) -> np.ndarray:
    return a.astype("<f4").astype(np.float64)


def region_masks() -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    obj1 = np.zeros((HEIGHT, WIDTH), dtype=bool)
    obj1[OBJ1_SLICE] = True
    obj2 = np.zeros((HEIGHT, WIDTH), dtype=bool)
    obj2[OBJ2_SLICE] = True
    blob = np.zeros((HEIGHT, WIDTH), dtype=bool)
    blob[BLOB_SLICE] = True
    return obj1, obj2, blob


def build() -> tuple[list[tuple[np.ndarray, list[np.ndarray], np.ndarray]], np.ndarray]:
    """Frames as (foreground, [score arrays], weights) plus the annotation."""
    obj1, obj2, blob = region_masks()
    foreground = obj1 | obj2 | blob
    weights = _f32(np.full((HEIGHT, WIDTH, 4, 3), AFFINITY_LEVEL))
    annotation = np.zeros((HEIGHT, WIDTH), dtype=np.int32)
    annotation[obj1] = 1
    annotation[obj2] = 2
    frames = []
    for t in range(FRAME_COUNT):
        s1 = np.where(obj1, OBJ1_LEVEL, 0.0)
        s2 = np.where(obj2, OBJ2_LEVEL, 0.0)
        if t >= 1:
            s2 = np.where(blob, BLOB_LEVEL, s2)
        frames.append((foreground.copy(), [_f32(s1), _f32(s2)], weights.copy()))
    return frames, annotation


def write_sequence(seq_dir: Path) -> Path:
    """Write the sequence in the CLI directory layout; returns the annotation path."""
    from propseg import AffinityField, BinaryMask, LabelMap, ScoreMap
    from propseg.formats import write_labels, write_mask, write_raster

    seq_dir.mkdir(parents=True, exist_ok=True)
    frames, annotation = build()
    write_raster(seq_dir / "affinity.f32r", AffinityField(frames[0][2]))
    for t, (foreground, scores, _) in enumerate(frames):
        write_mask(seq_dir / f"frame{t:05d}.fg.pgm", BinaryMask(foreground))
        for k, s in enumerate(scores, start=1):
            write_raster(seq_dir / f"frame{t:05d}.obj{k:02d}.f32r", ScoreMap(s))
    annotation_path = seq_dir / "frame00000.pgm"
    write_labels(annotation_path, LabelMap(annotation))
    return annotation_path
