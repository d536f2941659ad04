"""SMSK: a tiny fixed-endian binary container for soft masks.

Layout: magic ``SMSK``, one version byte (0x01), little-endian u32 width and
height, then width*height little-endian float32 values in row-major order.
Soft masks store confidences in [0, 1]; weight maps reuse the container with
whatever range the weighting config produces.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .masks import SoftMask

MAGIC = b"SMSK"
VERSION = 1

_HEADER = struct.Struct("<4sBII")


class SmskFormatError(ValueError):
    """Raised when a file is not a well-formed SMSK container."""


def write_smsk(path: str | Path, width: int, height: int, values) -> None:
    arr = np.asarray(values, dtype=np.float64).reshape(-1)
    if width < 1 or height < 1 or arr.size != width * height:
        raise ValueError(
            f"values length {arr.size} != width*height = {width * height}"
        )
    if not np.all(np.isfinite(arr)):
        raise ValueError("SMSK values must be finite")
    payload = arr.astype("<f4").tobytes()
    Path(path).write_bytes(_HEADER.pack(MAGIC, VERSION, width, height) + payload)


def read_smsk(path: str | Path) -> tuple[int, int, np.ndarray]:
    """Return (width, height, float64 values) or raise SmskFormatError."""
    blob = Path(path).read_bytes()
    if len(blob) < _HEADER.size:
        raise SmskFormatError(f"{path}: truncated header ({len(blob)} bytes)")
    magic, version, width, height = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise SmskFormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise SmskFormatError(f"{path}: unsupported version {version}")
    if width < 1 or height < 1:
        raise SmskFormatError(f"{path}: invalid dimensions {width}x{height}")
    expected = _HEADER.size + 4 * width * height
    if len(blob) != expected:
        raise SmskFormatError(
            f"{path}: expected {expected} bytes for {width}x{height}, got {len(blob)}"
        )
    values = np.frombuffer(blob, dtype="<f4", offset=_HEADER.size).astype(np.float64)
    return width, height, values


def write_soft_mask(path: str | Path, mask: SoftMask) -> None:
    write_smsk(path, mask.width, mask.height, mask.probs)


def read_soft_mask(path: str | Path) -> SoftMask:
    """Read a soft mask; values outside [0, 1] are a format error."""
    width, height, values = read_smsk(path)
    if np.any(values < 0.0) or np.any(values > 1.0):
        raise SmskFormatError(f"{path}: soft mask values outside [0, 1]")
    return SoftMask(width, height, values)
