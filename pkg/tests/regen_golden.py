"""Regenerate the committed golden label maps for the toy sequence.

The goldens come from the straight-line reference pipeline in oracles.py,
not from the package, and are encoded by hand so no package code touches
them. Run as ``python3 -m tests.regen_golden`` from the repository root.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from tests.oracles import pipeline_reference
from tests.toyseq import build

GOLDEN_DIR = Path(__file__).parent / "golden"


def encode_pgm(labels: np.ndarray) -> bytes:
    height, width = labels.shape
    return f"P5 {width} {height} 255\n".encode("ascii") + labels.astype(np.uint8).tobytes()


def regenerate() -> list[Path]:
    frames, annotation = build()
    outputs = pipeline_reference(frames, annotation)
    GOLDEN_DIR.mkdir(exist_ok=True)
    written = []
    for t, labels in enumerate(outputs):
        path = GOLDEN_DIR / f"frame{t:05d}.labels.pgm"
        path.write_bytes(encode_pgm(labels))
        written.append(path)
    return written


if __name__ == "__main__":
    for path in regenerate():
        print(f"wrote {path}")
