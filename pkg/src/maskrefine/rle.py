"""Bit-exact run-length codec for binary masks.

Runs follow the row-major pixel order and alternate background/foreground
starting with background, so a mask beginning with foreground gets a leading
zero count.  This canonical form makes the encoding unique: two adjacent runs
never share a value, and every count after the first is at least 1.

Note: COCO tooling runs column-major; interop with it requires a transpose.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .masks import BinaryMask


@dataclass(frozen=True)
class RleMask:
    width: int
    height: int
    counts: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))
        validate_counts(self.width, self.height, self.counts)

    def foreground_area(self) -> int:
        """Pixel count of the encoded foreground (odd-position runs)."""
        return sum(self.counts[1::2])


def validate_counts(width: int, height: int, counts: tuple[int, ...]) -> None:
    if width < 1 or height < 1:
        raise ValueError(f"mask dimensions must be >= 1, got {width}x{height}")
    if not counts:
        raise ValueError("counts must be non-empty")
    if any(c < 0 for c in counts):
        raise ValueError("counts must be non-negative")
    if any(c == 0 for c in counts[1:]):
        raise ValueError("only the leading count may be zero (canonical form)")
    total = sum(counts)
    if total != width * height:
        raise ValueError(
            f"counts sum {total} != width*height = {width * height}"
        )


def encode(mask: BinaryMask) -> RleMask:
    """Encode a mask into canonical run counts."""
    bits = mask.bits
    boundaries = np.flatnonzero(bits[1:] != bits[:-1]) + 1
    edges = np.concatenate(([0], boundaries, [bits.size]))
    counts = np.diff(edges).tolist()
    if bits[0] == 1:
        counts = [0] + counts
    return RleMask(mask.width, mask.height, tuple(counts))


def decode(rle: RleMask) -> BinaryMask:
    """Exact inverse of :func:`encode`."""
    values = np.zeros(len(rle.counts), dtype=np.uint8)
    values[1::2] = 1
    bits = np.repeat(values, np.asarray(rle.counts, dtype=np.int64))
    return BinaryMask(rle.width, rle.height, bits)
