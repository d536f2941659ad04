"""Persistence and validation of the per-image candidate-mask library.

Candidate segments are produced offline (typically by an automatic
segmenter sweeping an image at multiple scales) and stored run-length
encoded, one JSONL line per image:

    {"image_id": str, "w": int, "h": int, "proposals": [{"counts": [...]}, ...]}

Proposal width/height are inherited from the line.  The list order is the
library's canonical iteration order; the matcher's tie-breaking contract
depends on it, so it is preserved exactly across save/load.  Zero-area
proposals are rejected at load time so overlap denominators downstream are
never zero.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import IO, Iterator

from .rle import RleMask


class LibraryError(ValueError):
    """Malformed or invariant-violating proposal library data."""


@dataclass(frozen=True)
class ProposalSet:
    """All candidate masks for one image, in canonical index order."""

    image_id: str
    width: int
    height: int
    proposals: tuple[RleMask, ...]

    def __post_init__(self):
        object.__setattr__(self, "proposals", tuple(self.proposals))

    def __len__(self) -> int:
        return len(self.proposals)


@dataclass(frozen=True)
class ProposalLibrary:
    """Proposal sets keyed by image id."""

    sets: dict[str, ProposalSet]

    def __len__(self) -> int:
        return len(self.sets)

    def __contains__(self, image_id: str) -> bool:
        return image_id in self.sets

    def get(self, image_id: str) -> ProposalSet | None:
        return self.sets.get(image_id)

    def __iter__(self) -> Iterator[ProposalSet]:
        return iter(self.sets.values())


def validate(pset: ProposalSet) -> list[str]:
    """Check the set's invariants; returns one message per violation.

    Violations are data, not failures: an empty list means the set is valid.
    An empty proposal list is legal (the matcher simply falls back).
    """
    violations = []
    for k, prop in enumerate(pset.proposals):
        if prop.width != pset.width or prop.height != pset.height:
            violations.append(
                f"proposal {k}: dimensions {prop.width}x{prop.height} "
                f"!= set dimensions {pset.width}x{pset.height}"
            )
            continue
        if prop.foreground_area() == 0:
            violations.append(f"proposal {k}: zero foreground area")
    return violations


def _require_valid(pset: ProposalSet) -> ProposalSet:
    problems = validate(pset)
    if problems:
        raise LibraryError(f"invalid proposal set '{pset.image_id}': " + "; ".join(problems))
    return pset


def rle_json_obj(rle: RleMask) -> dict:
    """The on-disk JSON object for one run-length mask."""
    return {"w": rle.width, "h": rle.height, "counts": list(rle.counts)}


def rle_json_bytes(rle: RleMask) -> bytes:
    """Canonical single-line UTF-8 serialization of one mask."""
    return (json.dumps(rle_json_obj(rle), separators=(",", ":")) + "\n").encode("utf-8")


def rle_from_json_obj(obj: dict, *, width: int | None = None, height: int | None = None) -> RleMask:
    """Parse a mask object; w/h may be inherited from the enclosing record."""
    if not isinstance(obj, dict):
        raise LibraryError(f"expected a JSON object for a mask, got {type(obj).__name__}")
    w = obj.get("w", width)
    h = obj.get("h", height)
    counts = obj.get("counts")
    if w is None or h is None or counts is None:
        raise LibraryError("mask object needs w, h (or inherited) and counts")
    try:
        return RleMask(int(w), int(h), tuple(counts))
    except (TypeError, ValueError) as exc:
        raise LibraryError(f"bad run counts: {exc}") from exc


def save_library(lib: ProposalLibrary, sink: IO[bytes]) -> None:
    """Write the library as JSONL, one image per line, image_id ascending."""
    for image_id in sorted(lib.sets):
        pset = _require_valid(lib.sets[image_id])
        record = {
            "image_id": pset.image_id,
            "w": pset.width,
            "h": pset.height,
            "proposals": [{"counts": list(p.counts)} for p in pset.proposals],
        }
        sink.write((json.dumps(record, separators=(",", ":")) + "\n").encode("utf-8"))


def load_library(source: IO[bytes]) -> ProposalLibrary:
    """Parse and validate a JSONL library stream."""
    sets: dict[str, ProposalSet] = {}
    for lineno, raw in enumerate(source, start=1):
        line = raw.decode("utf-8").strip()
        if not line:
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise LibraryError(f"line {lineno}: malformed JSON: {exc}") from exc
        try:
            image_id = record["image_id"]
            width = int(record["w"])
            height = int(record["h"])
            raw_props = record["proposals"]
        except (KeyError, TypeError, ValueError) as exc:
            raise LibraryError(f"line {lineno}: missing or malformed field: {exc}") from exc
        if not isinstance(image_id, str):
            raise LibraryError(f"line {lineno}: image_id must be a string")
        if image_id in sets:
            raise LibraryError(f"line {lineno}: duplicate image_id '{image_id}'")
        try:
            props = tuple(
                rle_from_json_obj(p, width=width, height=height) for p in raw_props
            )
            pset = _require_valid(ProposalSet(image_id, width, height, props))
        except LibraryError as exc:
            raise LibraryError(f"line {lineno}: {exc}") from exc
        sets[image_id] = pset
    return ProposalLibrary(sets)
