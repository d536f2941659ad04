"""Binary and soft pixel masks with the set algebra the matcher is built on.

A :class:`BinaryMask` is a hard pixel set, a :class:`SoftMask` a per-pixel
confidence field.  Both store their payload as a flat row-major numpy array
and are treated as immutable after construction.  All scores are computed
from exact integer pixel counts with a single float division at the end, so
they agree bit-for-bit with a brute-force per-pixel loop.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

#: Similarity/overlap score in [0, 1].
MaskScore = float


class DimensionMismatchError(ValueError):
    """Two masks that must share a shape do not."""


class BinaryMask:
    """Hard mask: width x height pixels, each 0 or 1, row-major."""

    __slots__ = ("width", "height", "bits")

    def __init__(self, width: int, height: int, bits):
        if width < 1 or height < 1:
            raise ValueError(f"mask dimensions must be >= 1, got {width}x{height}")
        arr = np.array(bits, dtype=np.uint8).reshape(-1)
        if arr.size != width * height:
            raise ValueError(
                f"bits length {arr.size} != width*height = {width * height}"
            )
        if arr.size and arr.max() > 1:
            raise ValueError("bits must contain only 0 and 1")
        arr.setflags(write=False)
        object.__setattr__(self, "width", width)
        object.__setattr__(self, "height", height)
        object.__setattr__(self, "bits", arr)

    def __setattr__(self, name, value):
        raise AttributeError("BinaryMask is immutable")

    @classmethod
    def from_array(cls, grid: np.ndarray) -> "BinaryMask":
        """Build from an (height, width) array; nonzero means foreground."""
        grid = np.asarray(grid)
        if grid.ndim != 2:
            raise ValueError("expected a 2-D array")
        h, w = grid.shape
        return cls(w, h, (grid != 0).astype(np.uint8).reshape(-1))

    def to_array(self) -> np.ndarray:
        return self.bits.reshape(self.height, self.width).copy()

    def area(self) -> int:
        return int(np.count_nonzero(self.bits))

    def __eq__(self, other) -> bool:
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and bool(np.array_equal(self.bits, other.bits))
        )

    __hash__ = None

    def __repr__(self) -> str:
        return f"BinaryMask({self.width}x{self.height}, area={self.area()})"


class SoftMask:
    """Confidence mask: per-pixel probabilities in [0, 1], row-major."""

    __slots__ = ("width", "height", "probs")

    def __init__(self, width: int, height: int, probs):
        if width < 1 or height < 1:
            raise ValueError(f"mask dimensions must be >= 1, got {width}x{height}")
        arr = np.array(probs, dtype=np.float64).reshape(-1)
        if arr.size != width * height:
            raise ValueError(
                f"probs length {arr.size} != width*height = {width * height}"
            )
        if arr.size and (not np.all(np.isfinite(arr)) or arr.min() < 0.0 or arr.max() > 1.0):
            raise ValueError("probabilities must lie in [0, 1]")
        arr.setflags(write=False)
        object.__setattr__(self, "width", width)
        object.__setattr__(self, "height", height)
        object.__setattr__(self, "probs", arr)

    def __setattr__(self, name, value):
        raise AttributeError("SoftMask is immutable")

    @classmethod
    def from_array(cls, grid: np.ndarray) -> "SoftMask":
        grid = np.asarray(grid, dtype=np.float64)
        if grid.ndim != 2:
            raise ValueError("expected a 2-D array")
        h, w = grid.shape
        return cls(w, h, grid.reshape(-1))

    def to_array(self) -> np.ndarray:
        return self.probs.reshape(self.height, self.width).copy()

    def __eq__(self, other) -> bool:
        if not isinstance(other, SoftMask):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and bool(np.array_equal(self.probs, other.probs))
        )

    __hash__ = None

    def __repr__(self) -> str:
        return f"SoftMask({self.width}x{self.height})"


def _require_same_shape(a, b) -> None:
    if a.width != b.width or a.height != b.height:
        raise DimensionMismatchError(
            f"mask shapes differ: {a.width}x{a.height} vs {b.width}x{b.height}"
        )


def binarize(soft: SoftMask, threshold: float) -> BinaryMask:
    """Threshold a soft mask: a pixel is foreground iff p >= threshold."""
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    return BinaryMask(soft.width, soft.height, (soft.probs >= threshold).astype(np.uint8))


def intersection_count(a: BinaryMask, b: BinaryMask) -> int:
    """Number of pixels set in both masks."""
    _require_same_shape(a, b)
    return int(np.count_nonzero(a.bits & b.bits))


def union_count(a: BinaryMask, b: BinaryMask) -> int:
    """Number of pixels set in either mask."""
    _require_same_shape(a, b)
    return int(np.count_nonzero(a.bits | b.bits))


def iou(a: BinaryMask, b: BinaryMask) -> MaskScore:
    """Intersection over union.  Two empty masks score 0, so an empty
    pseudo-label can never match a candidate."""
    _require_same_shape(a, b)
    inter = int(np.count_nonzero(a.bits & b.bits))
    union = int(np.count_nonzero(a.bits | b.bits))
    if union == 0:
        return 0.0
    return inter / union


def overlap_pseudo(pseudo: BinaryMask, candidate: BinaryMask, epsilon: float) -> MaskScore:
    """Fraction of the pseudo-label covered by the candidate:
    |pseudo & candidate| / (|pseudo| + epsilon).

    The smoothing term keeps the ratio defined for an empty pseudo-label and
    makes the score strictly less than 1.
    """
    if epsilon <= 0.0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    _require_same_shape(pseudo, candidate)
    inter = int(np.count_nonzero(pseudo.bits & candidate.bits))
    return inter / (pseudo.area() + epsilon)


def overlap_candidate(pseudo: BinaryMask, candidate: BinaryMask) -> MaskScore:
    """Fraction of the candidate covered by the pseudo-label:
    |pseudo & candidate| / |candidate|.

    Candidates are validated to be non-empty before they reach the matcher,
    so an empty candidate here is a caller error.
    """
    _require_same_shape(pseudo, candidate)
    denom = candidate.area()
    if denom == 0:
        raise ValueError("candidate mask is empty")
    inter = int(np.count_nonzero(pseudo.bits & candidate.bits))
    return inter / denom


def union_merge(masks: Sequence[BinaryMask] | Iterable[BinaryMask]) -> BinaryMask:
    """Pixelwise OR of one or more same-shaped masks."""
    masks = list(masks)
    if not masks:
        raise ValueError("union_merge needs at least one mask")
    first = masks[0]
    acc = first.bits.copy()
    for m in masks[1:]:
        _require_same_shape(first, m)
        acc |= m.bits
    return BinaryMask(first.width, first.height, acc)
