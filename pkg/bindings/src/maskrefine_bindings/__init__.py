"""In-process bindings for the mask refinement engine.

Training loops usually hold teacher predictions and proposal masks as
plain numpy buffers. This package adapts those buffers to the engine's
mask types and back, so refinement, confidence weighting, the RLE codec,
and the pooled IoU metric can be called directly without writing files
or shelling out to the command line tool.

Guarantees:

* Parity: results are bit-identical to the core API on the same inputs,
  and the mask files the ``maskrefine refine`` command writes contain
  exactly the runs this package returns.
* Pure compute boundary: inputs are converted up front and never called
  back into during refinement. The heavy work happens inside numpy
  kernels, which release the interpreter lock; the module keeps no
  mutable state, so every call is reentrant and thread-safe.
* Validation happens at the boundary and failures raise
  :class:`BindingError` whose message carries the core diagnostic.
"""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass, fields
from typing import Any

import numpy as np

from maskrefine import __version__ as _core_version
from maskrefine import (
    BinaryMask,
    DimensionMismatchError,
    MatchConfig,
    LibraryError,
    ProposalSet,
    PwaConfig,
    RleMask,
    SoftMask,
    Strategy,
)
from maskrefine import decode as _core_decode
from maskrefine import encode as _core_encode
from maskrefine import oiou as _core_oiou
from maskrefine import refine as _core_refine
from maskrefine import rle_from_json_obj as _rle_from_json_obj
from maskrefine import rle_json_obj as _rle_json_obj
from maskrefine import validate as _validate_pset
from maskrefine import weight_map as _core_weight_map

__version__ = "0.1.0"

# The binding is release-locked to the engine: a drifted core could
# change bytes on disk and silently break the parity guarantee.
if _core_version != __version__:
    raise ImportError(
        f"maskrefine-bindings {__version__} is versioned to maskrefine "
        f"{__version__}, found maskrefine {_core_version}"
    )

__all__ = [
    "BindingError",
    "BoundMask",
    "bind_refine",
    "bind_weight_map",
    "oiou",
    "refine",
    "rle_decode",
    "rle_encode",
    "weight_map",
]


class BindingError(ValueError):
    """Raised at the buffer boundary; the message carries the core diagnostic."""


def _as_2d(host, what: str) -> np.ndarray:
    try:
        arr = np.asarray(host)
    except Exception as exc:
        raise BindingError(f"{what}: not convertible to an array ({exc})") from exc
    numeric = (
        arr.dtype == np.bool_
        or np.issubdtype(arr.dtype, np.integer)
        or np.issubdtype(arr.dtype, np.floating)
    )
    if not numeric:
        raise BindingError(f"{what}: unsupported dtype {arr.dtype}")
    if arr.ndim != 2:
        raise BindingError(
            f"{what}: expected a 2-D (height, width) buffer, got shape {arr.shape}"
        )
    if arr.size == 0:
        raise BindingError(f"{what}: buffer has zero size (shape {arr.shape})")
    return arr


def _flatten(arr: np.ndarray, dtype: np.dtype) -> tuple[np.ndarray, bool]:
    # ravel of a C-contiguous array with the target dtype is a view
    if arr.dtype == dtype and arr.flags["C_CONTIGUOUS"]:
        return arr.ravel(), False
    return np.ascontiguousarray(arr, dtype=dtype).ravel(), True


@dataclass(frozen=True, eq=False)
class BoundMask:
    """A host buffer adapted to the engine's flat row-major layout.

    ``buffer`` is a view of the host array when the host already stores
    the expected dtype contiguously (u8 for binary masks, f32 for soft
    masks); otherwise it is a validated copy. ``copied`` records which,
    so callers can reason about aliasing.
    """

    width: int
    height: int
    buffer: np.ndarray
    copied: bool

    @classmethod
    def binary(cls, host) -> "BoundMask":
        """Bind a (height, width) buffer of {0, 1} values as u8."""
        arr = _as_2d(host, "binary mask")
        # validate before any cast so 0.5 cannot truncate into range
        if not bool(np.all((arr == 0) | (arr == 1))):
            raise BindingError("binary mask: buffer must contain only 0 and 1")
        flat, copied = _flatten(arr, np.dtype(np.uint8))
        return cls(width=arr.shape[1], height=arr.shape[0], buffer=flat, copied=copied)

    @classmethod
    def soft(cls, host) -> "BoundMask":
        """Bind a (height, width) buffer of confidences in [0, 1] as f32."""
        arr = _as_2d(host, "soft mask")
        # validate before the f32 cast so 1 + 1e-10 cannot round into range
        if not bool(np.all((arr >= 0) & (arr <= 1))):
            raise BindingError("soft mask: buffer values must lie in [0, 1]")
        flat, copied = _flatten(arr, np.dtype(np.float32))
        return cls(width=arr.shape[1], height=arr.shape[0], buffer=flat, copied=copied)

    def to_array(self) -> np.ndarray:
        """The buffer as a (height, width) view."""
        return self.buffer.reshape(self.height, self.width)


_CONFIG_FIELDS = tuple(f.name for f in fields(MatchConfig))


def _engine_config(config: Mapping[str, Any] | None) -> MatchConfig:
    """Translate a string-keyed mapping into the engine's config.

    Missing keys keep the shipped defaults, so pipeline code never has
    to hardcode the threshold constants.
    """
    if config is None:
        return MatchConfig()
    unknown = sorted(set(config) - set(_CONFIG_FIELDS))
    if unknown:
        raise BindingError(
            f"unknown config keys: {', '.join(unknown)} "
            f"(known: {', '.join(_CONFIG_FIELDS)})"
        )
    kwargs = dict(config)
    strategy = kwargs.get("strategy")
    if isinstance(strategy, str):
        try:
            kwargs["strategy"] = Strategy.parse(strategy)
        except ValueError as exc:
            raise BindingError(str(exc)) from exc
    try:
        return MatchConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise BindingError(str(exc)) from exc


def _engine_binary(bound: BoundMask) -> BinaryMask:
    return BinaryMask(bound.width, bound.height, bound.buffer)


def _bind_binary(host) -> BoundMask:
    return host if isinstance(host, BoundMask) else BoundMask.binary(host)


def _bind_soft(host) -> BoundMask:
    return host if isinstance(host, BoundMask) else BoundMask.soft(host)


def bind_refine(
    teacher,
    proposals: Sequence,
    config: Mapping[str, Any] | None = None,
) -> tuple[np.ndarray, dict[str, Any]]:
    """Refine one soft pseudo-label against an in-memory proposal list.

    ``teacher`` is a (height, width) buffer of confidences in [0, 1] and
    ``proposals`` a sequence of (height, width) binary buffers with the
    same shape. The optional ``config`` mapping may set any engine field
    by name (``strategy`` accepts the engine's string names); missing
    keys keep the shipped defaults.

    Returns ``(refined, meta)`` where ``refined`` is a read-only
    (height, width) u8 buffer and ``meta`` holds the outcome ``kind``
    plus the ``indices`` and ``scores`` of the proposals that produced
    it. An empty proposal list is legal and falls back to the binarized
    teacher; malformed input raises :class:`BindingError` carrying the
    core diagnostic.
    """
    bound = _bind_soft(teacher)
    cfg = _engine_config(config)
    entries = []
    for host in proposals:
        prop = _bind_binary(host)
        entries.append(_core_encode(_engine_binary(prop)))
    pset = ProposalSet("<bound>", bound.width, bound.height, tuple(entries))
    problems = _validate_pset(pset)
    if problems:
        raise BindingError("; ".join(problems))
    soft = SoftMask(bound.width, bound.height, bound.buffer)
    try:
        outcome = _core_refine(soft, pset, cfg)
    except (DimensionMismatchError, ValueError) as exc:
        raise BindingError(str(exc)) from exc
    meta = {
        "kind": outcome.kind,
        "indices": list(outcome.indices),
        "scores": [float(s) for s in outcome.scores],
    }
    return outcome.refined.bits.reshape(bound.height, bound.width), meta


def bind_weight_map(
    soft,
    gamma: float = 1.3,
    sigma2: float = 0.1,
    mu: float = 0.5,
) -> np.ndarray:
    """Per-pixel confidence weights for a soft mask buffer.

    Mirrors the engine's weight map: low weight where confidence sits
    near ``mu``, approaching ``gamma`` far from it. Parameter defaults
    are the shipped bell constants. Returns a read-only (height, width)
    float64 buffer with the engine's exact values.
    """
    bound = _bind_soft(soft)
    try:
        cfg = PwaConfig(gamma=float(gamma), sigma2=float(sigma2), mu=float(mu))
    except (TypeError, ValueError) as exc:
        raise BindingError(str(exc)) from exc
    wm = _core_weight_map(SoftMask(bound.width, bound.height, bound.buffer), cfg)
    return wm.weights.reshape(bound.height, bound.width)


def rle_encode(mask) -> dict[str, Any]:
    """Encode a binary buffer into the engine's run-length object form.

    The result is JSON-ready: ``{"w", "h", "counts"}`` with counts
    alternating background and foreground runs in row-major order,
    starting with background.
    """
    bound = _bind_binary(mask)
    return _rle_json_obj(_core_encode(_engine_binary(bound)))


def rle_decode(rle, *, width: int | None = None, height: int | None = None) -> np.ndarray:
    """Decode run counts back into a read-only (height, width) u8 buffer.

    Accepts the object form :func:`rle_encode` returns, or a bare counts
    sequence together with explicit ``width`` and ``height``. Counts
    that do not sum to width*height raise :class:`BindingError`.
    """
    if isinstance(rle, Mapping):
        if width is not None or height is not None:
            raise BindingError(
                "pass dimensions inside the mapping or alongside bare counts, not both"
            )
        try:
            rmask = _rle_from_json_obj(dict(rle))
        except (LibraryError, ValueError, TypeError) as exc:
            raise BindingError(str(exc)) from exc
    else:
        if width is None or height is None:
            raise BindingError("bare counts need explicit width= and height=")
        try:
            counts = tuple(int(c) for c in rle)
        except (TypeError, ValueError) as exc:
            raise BindingError(f"counts must be a sequence of integers ({exc})") from exc
        try:
            rmask = RleMask(int(width), int(height), counts)
        except (TypeError, ValueError) as exc:
            raise BindingError(str(exc)) from exc
    bits = _core_decode(rmask).bits
    return bits.reshape(rmask.height, rmask.width)


def oiou(preds: Sequence, gts: Sequence) -> float:
    """Pooled IoU across paired binary buffers.

    Sums intersections and unions over all pairs before the single
    division, so large objects weigh more than small ones. Pairs must
    agree in shape pairwise; the lists must have equal, nonzero length.
    """
    pred_masks = [_engine_binary(_bind_binary(p)) for p in preds]
    gt_masks = [_engine_binary(_bind_binary(g)) for g in gts]
    try:
        return _core_oiou(pred_masks, gt_masks)
    except (DimensionMismatchError, ValueError) as exc:
        raise BindingError(str(exc)) from exc


# Short spellings for pipeline code; the bind_* names are the canonical API.
refine = bind_refine
weight_map = bind_weight_map
