"""Bit-exact file formats and run configuration.

Float rasters use a 16-byte header (magic "F32R", then width, height and
channel count as little-endian uint32) followed by channel-planar IEEE-754
binary32 little-endian payload, each plane row-major. Affinity rasters carry
12 channels ordered direction-major (left-to-right, right-to-left,
top-to-bottom, bottom-to-top) and neighbor-minor (offsets -1, 0, +1), i.e.
channel = 3 * direction + neighbor.

Masks and label maps are binary PGM ("P5", maxval 255): masks store 1 as
255, label maps store label k as pixel value k.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .propagation import AffinityField
from .raster import BinaryMask, LabelMap, ScoreMap

RASTER_MAGIC = b"F32R"
# 2**28 float32 elements is a 1 GiB payload; anything larger is far outside
# this tool's working range and treated as a corrupt header.
MAX_RASTER_ELEMENTS = 1 << 28


class FormatError(ValueError):
    """A file does not conform to one of the declared byte layouts."""


def write_raster(path, data: ScoreMap | AffinityField) -> None:
    """Serialize a score map (1 channel) or affinity field (12 channels)."""
    if isinstance(data, ScoreMap):
        planes = data.values[np.newaxis, :, :]
    elif isinstance(data, AffinityField):
        planes = data.weights.transpose(2, 3, 0, 1).reshape(12, data.height, data.width)
    else:
        raise TypeError(f"write_raster expects a ScoreMap or AffinityField, got {type(data)}")
    payload = planes.astype("<f4")
    if not np.isfinite(payload).all():
        raise FormatError("raster values do not fit binary32 finitely")
    channels, height, width = payload.shape
    header = RASTER_MAGIC + struct.pack("<III", width, height, channels)
    Path(path).write_bytes(header + payload.tobytes())


def read_raster(path) -> ScoreMap | AffinityField:
    """Parse a float raster; 1 channel yields a ScoreMap, 12 an AffinityField."""
    data = Path(path).read_bytes()
    if len(data) < 16:
        raise FormatError(f"truncated header: file is {len(data)} bytes, need 16")
    if data[:4] != RASTER_MAGIC:
        raise FormatError(f"bad magic {data[:4]!r}, expected {RASTER_MAGIC!r}")
    width, height, channels = struct.unpack("<III", data[4:16])
    if width == 0 or height == 0 or channels == 0:
        raise FormatError(f"dimensions must be positive, got {channels}x{height}x{width}")
    if width * height * channels > MAX_RASTER_ELEMENTS:
        raise FormatError(f"dimension overflow: {channels}x{height}x{width} elements")
    expected = 4 * channels * height * width
    payload = data[16:]
    if len(payload) < expected:
        raise FormatError(f"truncated payload: expected {expected} bytes, got {len(payload)}")
    if len(payload) > expected:
        raise FormatError(f"trailing bytes: expected {expected} bytes, got {len(payload)}")
    values = (
        np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(channels, height, width)
    )
    if not np.isfinite(values).all():
        raise FormatError("non-finite values in payload")
    if channels == 1:
        if values.min() < 0.0 or values.max() > 1.0:
            raise FormatError("score raster values must lie in [0, 1]")
        return ScoreMap(values[0])
    if channels == 12:
        return AffinityField(values.reshape(4, 3, height, width).transpose(2, 3, 0, 1))
    raise FormatError(f"unsupported channel count {channels}, expected 1 or 12")


def _encode_pgm(pixels: np.ndarray) -> bytes:
    height, width = pixels.shape
    return f"P5 {width} {height} 255\n".encode("ascii") + pixels.astype(np.uint8).tobytes()


def _decode_pgm(data: bytes, path) -> np.ndarray:
    pos = 0

    def token() -> bytes:
        nonlocal pos
        while pos < len(data):
            ch = data[pos : pos + 1]
            if ch == b"#":
                while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                    pos += 1
            elif ch.isspace():
                pos += 1
            else:
                break
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError(f"{path}: truncated header")
        return data[start:pos]

    magic = token()
    if magic != b"P5":
        raise FormatError(f"{path}: bad magic {magic!r}, expected b'P5'")
    try:
        width, height, maxval = int(token()), int(token()), int(token())
    except ValueError as exc:
        raise FormatError(f"{path}: malformed header field") from exc
    if width < 1 or height < 1:
        raise FormatError(f"{path}: dimensions must be positive, got {width}x{height}")
    if maxval != 255:
        raise FormatError(f"{path}: unsupported maxval {maxval}, expected 255")
    pos += 1  # exactly one whitespace byte separates the header from the pixels
    payload = data[pos:]
    if len(payload) != width * height:
        raise FormatError(
            f"{path}: size mismatch, expected {width * height} pixel bytes, got {len(payload)}"
        )
    return np.frombuffer(payload, dtype=np.uint8).reshape(height, width)


def write_mask(path, mask: BinaryMask) -> None:
    Path(path).write_bytes(_encode_pgm(np.where(mask.values, 255, 0)))


def read_mask(path) -> BinaryMask:
    pixels = _decode_pgm(Path(path).read_bytes(), path)
    if not np.isin(pixels, (0, 255)).all():
        raise FormatError(f"{path}: mask pixels must be 0 or 255")
    return BinaryMask(pixels == 255)


def write_labels(path, labels: LabelMap) -> None:
    if labels.max_label > 255:
        raise FormatError(f"label {labels.max_label} exceeds the 8-bit PGM range")
    Path(path).write_bytes(_encode_pgm(labels.labels))


def read_labels(path) -> LabelMap:
    return LabelMap(_decode_pgm(Path(path).read_bytes(), path))


@dataclass(frozen=True)
class RunConfig:
    """Key=value run configuration; missing keys take these defaults."""

    alpha: float = 0.2
    beta: float = 0.9
    gamma: float = 0.1
    delta: float = 0.4
    connectivity: int = 8
    bg_threshold: float = 0.5
    eps: float = 1e-7
    learning_rate: float = 0.1
    iterations: int = 200
    craf: bool = True
    spn: bool = True

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma", "delta", "bg_threshold"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise FormatError(f"config: {name} must lie in [0, 1], got {v}")
        if self.connectivity not in (4, 8):
            raise FormatError(f"config: connectivity must be 4 or 8, got {self.connectivity}")
        if not (0 < self.eps < 0.5):
            raise FormatError(f"config: eps must lie in (0, 0.5), got {self.eps}")
        if not (self.learning_rate > 0):
            raise FormatError(f"config: learning_rate must be positive, got {self.learning_rate}")
        if self.iterations < 1:
            raise FormatError(f"config: iterations must be at least 1, got {self.iterations}")


_CONFIG_PARSERS = {
    "alpha": float,
    "beta": float,
    "gamma": float,
    "delta": float,
    "connectivity": int,
    "bg_threshold": float,
    "eps": float,
    "learning_rate": float,
    "iterations": int,
    "craf": None,  # on/off
    "spn": None,
}


def parse_config(path) -> RunConfig:
    """Parse a key=value config file; blank lines and # comments are ignored."""
    values: dict[str, object] = {}
    text = Path(path).read_text(encoding="ascii")
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, _, value = (part.strip() for part in line.partition("="))
        if key not in _CONFIG_PARSERS:
            raise FormatError(f"{path}:{lineno}: unknown key {key!r}")
        if key in values:
            raise FormatError(f"{path}:{lineno}: duplicate key {key!r}")
        parser = _CONFIG_PARSERS[key]
        if parser is None:
            if value not in ("on", "off"):
                raise FormatError(f"{path}:{lineno}: {key} must be 'on' or 'off', got {value!r}")
            values[key] = value == "on"
        else:
            try:
                values[key] = parser(value)
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: bad value for {key}: {value!r}") from exc
    return RunConfig(**values)


def config_field_names() -> tuple[str, ...]:
    return tuple(f.name for f in fields(RunConfig))
