"""Pseudo-label refinement against a candidate-mask library.

Two matching families are provided.  IOM (IoU-based optimal matching)
replaces the pseudo-label outright with the single candidate of highest IoU,
provided that IoU clears ``iou_rate``.  CPI (composite parts integration)
instead accumulates the union of every candidate that passes an overlap
test: the pseudo-coverage ratio against ``inter1`` (CPI-U, which repairs
under-segmented labels by pulling in larger covering regions) and/or the
candidate-coverage ratio against ``inter2`` (CPI-O, which keeps only the
well-supported parts of an over-segmented label and thereby drops noise).
When nothing qualifies, the original pseudo-label is kept and the caller is
expected to fall back to confidence-weighted supervision.

All thresholds are strict: boundary-equal scores do not qualify.  Candidates
are scanned in library index order and the top score comparison is strict,
so IOM ties resolve to the earliest index.  That tie-break is a contract
(reports and downstream determinism rely on it), not an accident.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from .masks import (
    BinaryMask,
    SoftMask,
    binarize,
    iou,
    overlap_candidate,
    overlap_pseudo,
)
from .proposals import ProposalSet
from .rle import RleMask, decode


@lru_cache(maxsize=4096)
def _decode_cached(rle: RleMask) -> BinaryMask:
    # safe to share the result: BinaryMask is immutable
    return decode(rle)


class Strategy(enum.Enum):
    IOM = "iom"
    CPI = "cpi"
    CPI_U = "cpi-u"
    CPI_O = "cpi-o"

    @classmethod
    def parse(cls, name: str) -> "Strategy":
        key = name.strip().lower().replace("_", "-")
        for member in cls:
            if member.value == key:
                return member
        raise ValueError(f"unknown strategy '{name}' (expected iom, cpi, cpi-u or cpi-o)")


REPLACED = "replaced"
MERGED = "merged"
FALLBACK = "fallback"


@dataclass(frozen=True)
class MatchConfig:
    """Matching strategy plus its thresholds.

    The shipped defaults are the configuration that performed best in the
    source experiments: iou_rate 0.5, inter1 = inter2 = 0.7, with CPI-U as
    the default strategy.
    """

    strategy: Strategy = Strategy.CPI_U
    iou_rate: float = 0.5
    inter1: float = 0.7
    inter2: float = 0.7
    epsilon: float = 1e-6
    binarize_threshold: float = 0.5

    def __post_init__(self):
        for name in ("iou_rate", "inter1", "inter2"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.epsilon <= 0.0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if not 0.0 < self.binarize_threshold < 1.0:
            raise ValueError(
                f"binarize_threshold must lie in (0, 1), got {self.binarize_threshold}"
            )

    def with_strategy(self, strategy: Strategy) -> "MatchConfig":
        return replace(self, strategy=strategy)


@dataclass(frozen=True)
class RefinementOutcome:
    """Result of refining one pseudo-label.

    kind "replaced": refined is exactly the proposal at indices[0];
    kind "merged": refined is exactly the union of the listed proposals;
    kind "fallback": refined equals pseudo_binary and the caller should
    train with per-pixel confidence weighting instead.
    """

    refined: BinaryMask
    kind: str
    indices: tuple[int, ...] = ()
    scores: tuple[float, ...] = ()
    pseudo_binary: BinaryMask = field(default=None, repr=False)  # type: ignore[assignment]

    @property
    def is_fallback(self) -> bool:
        return self.kind == FALLBACK


def _require_set_shape(mask, pset: ProposalSet) -> None:
    if mask.width != pset.width or mask.height != pset.height:
        raise ValueError(
            f"pseudo-label is {mask.width}x{mask.height} but proposal set "
            f"'{pset.image_id}' is {pset.width}x{pset.height}"
        )


def refine_iom(pseudo: BinaryMask, pset: ProposalSet, cfg: MatchConfig) -> RefinementOutcome:
    """Replace the pseudo-label with the top-IoU candidate above iou_rate."""
    _require_set_shape(pseudo, pset)
    best_index = -1
    best: BinaryMask | None = None
    s_top = 0.0
    for k, prop in enumerate(pset.proposals):
        cand = _decode_cached(prop)
        score = iou(pseudo, cand)
        if score > cfg.iou_rate and score > s_top:
            best_index, best, s_top = k, cand, score
    if best is None:
        return RefinementOutcome(pseudo, FALLBACK, pseudo_binary=pseudo)
    return RefinementOutcome(best, REPLACED, (best_index,), (s_top,), pseudo)


def refine_cpi(pseudo: BinaryMask, pset: ProposalSet, cfg: MatchConfig) -> RefinementOutcome:
    """Union every candidate that passes its overlap threshold.

    CPI-U tests pseudo coverage (|P&C| / (|P|+eps) > inter1), CPI-O tests
    candidate coverage (|P&C| / |C| > inter2), plain CPI takes the
    disjunction.  Only the scores a variant actually uses are computed.
    For a qualifying candidate the recorded score is the largest of its
    passing ratios.
    """
    _require_set_shape(pseudo, pset)
    if cfg.strategy not in (Strategy.CPI, Strategy.CPI_U, Strategy.CPI_O):
        raise ValueError(f"refine_cpi cannot run strategy {cfg.strategy.value}")
    use_under = cfg.strategy in (Strategy.CPI, Strategy.CPI_U)
    use_over = cfg.strategy in (Strategy.CPI, Strategy.CPI_O)
    merged_bits = np.zeros_like(pseudo.bits)
    indices: list[int] = []
    scores: list[float] = []
    for k, prop in enumerate(pset.proposals):
        cand = _decode_cached(prop)
        passing = []
        if use_under:
            s1 = overlap_pseudo(pseudo, cand, cfg.epsilon)
            if s1 > cfg.inter1:
                passing.append(s1)
        if use_over:
            s2 = overlap_candidate(pseudo, cand)
            if s2 > cfg.inter2:
                passing.append(s2)
        if passing:
            merged_bits |= cand.bits
            indices.append(k)
            scores.append(max(passing))
    if not indices:
        return RefinementOutcome(pseudo, FALLBACK, pseudo_binary=pseudo)
    refined = BinaryMask(pseudo.width, pseudo.height, merged_bits)
    return RefinementOutcome(refined, MERGED, tuple(indices), tuple(scores), pseudo)


def refine(teacher: SoftMask, pset: ProposalSet, cfg: MatchConfig) -> RefinementOutcome:
    """Binarize the teacher's confidence mask and run the configured matcher.

    Qualified matches never produce an empty mask (candidates are validated
    non-empty), so the empty-result fallback and the no-qualifier fallback
    coincide: both keep the binarized pseudo-label.
    """
    _require_set_shape(teacher, pset)
    pseudo = binarize(teacher, cfg.binarize_threshold)
    if cfg.strategy is Strategy.IOM:
        return refine_iom(pseudo, pset, cfg)
    return refine_cpi(pseudo, pset, cfg)
