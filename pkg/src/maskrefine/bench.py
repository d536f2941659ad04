"""Seeded synthetic scenes for exercising the refinement pipeline.

Each scene is a superellipse target on a noisy feature field.  The target is
split into an exact partition of parts, and the proposal set for the scene
contains those parts, optionally the whole target, and distractor regions
disjoint from it.  A corruption step turns the ground truth into a plausible
noisy prediction: under-segmentation drops whole parts, over-segmentation
adds disjoint blobs, and confidences are shaped so that thresholding at 0.5
recovers the corrupted hard mask exactly.

The module also houses the pooled overall-IoU metric, the bookkeeping that
classifies refinements as positive / negative / neutral / no-correction, and
a batch runner that aggregates those statistics per matching strategy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .masks import BinaryMask, SoftMask, binarize, intersection_count, iou, union_count
from .proposals import ProposalLibrary, ProposalSet
from .refine import MatchConfig, RefinementOutcome, Strategy, refine
from .rle import encode
from .rng import SplitMix64
from .training import LabeledItem, TrainConfig, UnlabeledItem

MODE_UNDER = "under"
MODE_OVER = "over"
MODE_MIXED = "mixed"
_MODES = (MODE_UNDER, MODE_OVER, MODE_MIXED)

# logit of 0.7: corrupted confidences sit strictly above 0.7 on foreground
# and strictly below 0.3 on background before sharpness widens the margin
_BASE_LOGIT = math.log(0.7 / 0.3)

MAX_SIDE = 256


@dataclass(frozen=True)
class CorruptionParams:
    """How to damage a ground-truth mask into a noisy prediction."""

    mode: str = MODE_UNDER
    part_drop_fraction: float = 0.4
    noise_blob_count: int = 2
    confidence_sharpness: float = 2.0

    def __post_init__(self):
        if self.mode not in _MODES:
            raise ValueError(f"mode must be one of {_MODES}, got '{self.mode}'")
        if not 0.0 <= self.part_drop_fraction <= 1.0:
            raise ValueError("part_drop_fraction must lie in [0, 1]")
        if self.noise_blob_count < 0:
            raise ValueError("noise_blob_count must be non-negative")
        if self.confidence_sharpness <= 0.0:
            raise ValueError("confidence_sharpness must be positive")


@dataclass(frozen=True)
class SceneParams:
    width: int = 32
    height: int = 32
    parts: int = 3
    distractors: int = 2
    include_whole: bool = True
    feature_noise: float = 0.35
    contrast_min: float = 0.6
    contrast_max: float = 1.4
    offset_scale: float = 1.0
    nuisance_channels: int = 8
    corruption: CorruptionParams = field(default_factory=CorruptionParams)

    def __post_init__(self):
        if not (1 <= self.width <= MAX_SIDE and 1 <= self.height <= MAX_SIDE):
            raise ValueError(f"scene sides must lie in [1, {MAX_SIDE}]")
        if self.parts < 1:
            raise ValueError(f"parts must be >= 1, got {self.parts}")
        if self.distractors < 0:
            raise ValueError("distractors must be non-negative")
        if self.feature_noise < 0.0 or self.offset_scale < 0.0:
            raise ValueError("noise scales must be non-negative")
        if not 0.0 < self.contrast_min <= self.contrast_max:
            raise ValueError("need 0 < contrast_min <= contrast_max")
        if self.nuisance_channels < 0:
            raise ValueError("nuisance_channels must be non-negative")

    @property
    def channels(self) -> int:
        return self.nuisance_channels + 2


@dataclass(frozen=True, eq=False)
class Scene:
    image_id: str
    features: np.ndarray
    gt: BinaryMask
    parts: tuple[BinaryMask, ...]
    proposals: ProposalSet
    teacher_sim: SoftMask


@dataclass(frozen=True)
class CorrectionStats:
    positive: int = 0
    negative: int = 0
    neutral: int = 0
    no_correction: int = 0

    @property
    def total(self) -> int:
        return self.positive + self.negative + self.neutral + self.no_correction

    def as_dict(self) -> dict[str, int]:
        return {
            "positive": self.positive,
            "negative": self.negative,
            "neutral": self.neutral,
            "no_correction": self.no_correction,
        }


def _superellipse(params: SceneParams, rng: SplitMix64, min_area: int) -> np.ndarray:
    w, h = params.width, params.height
    for _ in range(64):
        u = rng.uniform(5)
        # wide radius range: foreground fraction varies a lot per scene, so
        # a small labeled sample pins the class prior badly
        rx = max(0.6, w * (0.12 + 0.28 * u[0]))
        ry = max(0.6, h * (0.12 + 0.28 * u[1]))
        cx = rx + (w - 1 - 2 * rx) * u[2] if 2 * rx < w - 1 else (w - 1) / 2.0
        cy = ry + (h - 1 - 2 * ry) * u[3] if 2 * ry < h - 1 else (h - 1) / 2.0
        n = 1.7 + 1.8 * u[4]
        xs = np.arange(w, dtype=np.float64)
        ys = np.arange(h, dtype=np.float64)
        term = (np.abs(ys[:, None] - cy) / ry) ** n + (np.abs(xs[None, :] - cx) / rx) ** n
        bits = (term <= 1.0).astype(np.uint8).reshape(-1)
        if int(bits.sum()) >= min_area:
            return bits
    raise ValueError(f"could not generate a target with at least {min_area} pixels")


def partition_mask(gt: BinaryMask, k: int, rng: SplitMix64) -> list[BinaryMask]:
    """Split gt into exactly k disjoint non-empty parts that union to gt.

    Foreground pixels in row-major order are cut into k contiguous runs at
    random points, so part sizes vary (a stand-in for multi-scale regions).
    """
    if k < 1:
        raise ValueError(f"part count must be >= 1, got {k}")
    idx = np.flatnonzero(gt.bits)
    if idx.size < k:
        raise ValueError(f"mask area {idx.size} cannot be split into {k} parts")
    ranges = [(0, idx.size)]
    while len(ranges) < k:
        widest = max(range(len(ranges)), key=lambda i: ranges[i][1] - ranges[i][0])
        start, end = ranges.pop(widest)
        cut = rng.randint(start + 1, end - 1)
        ranges.extend([(start, cut), (cut, end)])
    ranges.sort()
    parts = []
    for start, end in ranges:
        bits = np.zeros(gt.width * gt.height, dtype=np.uint8)
        bits[idx[start:end]] = 1
        parts.append(BinaryMask(gt.width, gt.height, bits))
    return parts


def _disjoint_blob(gt: BinaryMask, rng: SplitMix64) -> np.ndarray | None:
    """Bits of a small rectangle minus gt; None if no background exists."""
    w, h = gt.width, gt.height
    background = 1 - gt.bits
    if not background.any():
        return None
    for _ in range(32):
        bw = rng.randint(1, max(1, w // 5))
        bh = rng.randint(1, max(1, h // 5))
        x0 = rng.randint(0, w - bw)
        y0 = rng.randint(0, h - bh)
        grid = np.zeros((h, w), dtype=np.uint8)
        grid[y0 : y0 + bh, x0 : x0 + bw] = 1
        bits = grid.reshape(-1) & background
        if bits.any():
            return bits
    bg_idx = np.flatnonzero(background)
    bits = np.zeros(w * h, dtype=np.uint8)
    bits[bg_idx[rng.below(bg_idx.size)]] = 1
    return bits


def _features(gt: BinaryMask, params: SceneParams, rng: SplitMix64) -> np.ndarray:
    """(h, w, channels) field: target signal, nuisance offsets, pure noise.

    Channel 0 carries the learnable signal with a random per-scene contrast.
    The nuisance channels are near-constant within a scene and random across
    scenes: to a model fit on a handful of labeled scenes they look like free
    per-scene bias knobs, so they are where overfitting goes.  The last
    channel is plain pixel noise.
    """
    n = gt.width * gt.height
    contrast = params.contrast_min + (params.contrast_max - params.contrast_min) * rng.uniform(1)[0]
    signal = contrast * (gt.bits.astype(np.float64) - 0.5) + params.feature_noise * rng.normal(n)
    columns = [signal]
    offsets = params.offset_scale * rng.normal(params.nuisance_channels)
    for k in range(params.nuisance_channels):
        columns.append(offsets[k] + 0.05 * rng.normal(n))
    columns.append(rng.normal(n))
    return np.stack(columns, axis=1).reshape(gt.height, gt.width, params.channels)


def corrupt(
    gt: BinaryMask,
    params: CorruptionParams,
    seed: int,
    parts: list[BinaryMask] | None = None,
) -> SoftMask:
    """Damage gt into a soft prediction; binarize at 0.5 recovers the damage.

    Under-segmentation drops whole parts of the given partition (a fresh
    3-way partition of gt when none is supplied), always retaining at least
    one.  Over-segmentation ORs in blobs disjoint from gt; when no background
    is available the blob is skipped.  Confidences are strictly above 0.7 on
    the corrupted foreground and strictly below 0.3 elsewhere, with margins
    widened by confidence_sharpness.
    """
    rng = SplitMix64(seed)
    if parts is None:
        parts = partition_mask(gt, min(3, gt.area()), rng.spawn(0))
    hard = gt.bits.copy()
    if params.mode in (MODE_UNDER, MODE_MIXED) and len(parts) > 1:
        drops = int(params.part_drop_fraction * len(parts) + 0.5)
        drops = min(drops, len(parts) - 1)
        order = list(range(len(parts)))
        rng.spawn(1).shuffle(order)
        for i in order[:drops]:
            hard[parts[i].bits == 1] = 0
    if params.mode in (MODE_OVER, MODE_MIXED):
        blob_rng = rng.spawn(2)
        for _ in range(params.noise_blob_count):
            bits = _disjoint_blob(gt, blob_rng)
            if bits is not None:
                hard |= bits
    margin = params.confidence_sharpness * (0.5 + 0.5 * rng.spawn(3).uniform(hard.size))
    logits = np.where(hard == 1, _BASE_LOGIT + margin, -_BASE_LOGIT - margin)
    probs = 1.0 / (1.0 + np.exp(-logits))
    return SoftMask(gt.width, gt.height, probs)


def gen_scene(seed: int, params: SceneParams) -> Scene:
    """Deterministic scene: target, partition, proposals, features, teacher sim."""
    rng = SplitMix64(seed)
    gt = BinaryMask(
        params.width,
        params.height,
        _superellipse(params, rng.spawn(0), max(params.parts, 1)),
    )
    parts = partition_mask(gt, params.parts, rng.spawn(1))
    candidates = list(parts)
    if params.include_whole and params.parts > 1:
        candidates.append(gt)
    blob_rng = rng.spawn(2)
    for _ in range(params.distractors):
        bits = _disjoint_blob(gt, blob_rng)
        if bits is None:
            raise ValueError("no background available for distractor proposals")
        candidates.append(BinaryMask(gt.width, gt.height, bits))
    image_id = f"scene-{seed & 0xFFFFFFFFFFFFFFFF:016x}"
    proposals = ProposalSet(
        image_id, params.width, params.height, tuple(encode(m) for m in candidates)
    )
    teacher_sim = corrupt(gt, params.corruption, int(rng.spawn(3).next_u64()), parts=parts)
    features = _features(gt, params, rng.spawn(4))
    return Scene(
        image_id=image_id,
        features=features,
        gt=gt,
        parts=tuple(parts),
        proposals=proposals,
        teacher_sim=teacher_sim,
    )


def oiou(preds: list[BinaryMask], gts: list[BinaryMask]) -> float:
    """Pooled IoU: sum of intersections over sum of unions across all items.

    Not the mean of per-item IoUs: large objects weigh more, matching how
    segmentation benchmarks usually report an overall number.
    """
    if len(preds) != len(gts):
        raise ValueError(f"got {len(preds)} predictions for {len(gts)} ground truths")
    if not preds:
        raise ValueError("oiou of an empty list is undefined")
    inter = 0
    union = 0
    for p, g in zip(preds, gts):
        inter += intersection_count(p, g)
        union += union_count(p, g)
    return inter / union if union else 0.0


def correction_stats(
    outcomes: list[RefinementOutcome], gts: list[BinaryMask]
) -> CorrectionStats:
    """Classify each refinement by its IoU-with-gt change, strictly.

    Fallbacks count as no_correction; otherwise the refined mask's IoU with
    ground truth is compared to the original prediction's: greater is
    positive, smaller negative, equal neutral.
    """
    if len(outcomes) != len(gts):
        raise ValueError(f"got {len(outcomes)} outcomes for {len(gts)} ground truths")
    positive = negative = neutral = skipped = 0
    for outcome, gt in zip(outcomes, gts):
        if outcome.is_fallback:
            skipped += 1
            continue
        after = iou(outcome.refined, gt)
        before = iou(outcome.pseudo_binary, gt)
        if after > before:
            positive += 1
        elif after < before:
            negative += 1
        else:
            neutral += 1
    return CorrectionStats(positive, negative, neutral, skipped)


@dataclass(frozen=True)
class BenchConfig:
    seed: int = 0
    scenes: int = 100
    scene: SceneParams = field(default_factory=SceneParams)
    match: MatchConfig = field(default_factory=MatchConfig)
    strategies: tuple[Strategy, ...] = (
        Strategy.IOM,
        Strategy.CPI,
        Strategy.CPI_U,
        Strategy.CPI_O,
    )

    def __post_init__(self):
        if self.scenes < 1:
            raise ValueError(f"scene count must be >= 1, got {self.scenes}")
        if not self.strategies:
            raise ValueError("need at least one strategy")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")


@dataclass(frozen=True)
class StrategyReport:
    strategy: str
    stats: CorrectionStats
    mean_iou_after: float
    oiou_after: float


@dataclass(frozen=True)
class BenchReport:
    seed: int
    scenes: int
    mean_iou_before: float
    oiou_before: float
    per_strategy: tuple[StrategyReport, ...]
    config: BenchConfig


def run_bench(cfg: BenchConfig, workers: int = 1) -> BenchReport:
    """Generate scenes, refine the simulated predictions, aggregate stats.

    Per-scene work (generation plus refinement under every strategy) is a
    pure function of the scene seed, and results are gathered in seed order
    before aggregation, so any worker count produces the identical report.
    """
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers}")
    master = SplitMix64(cfg.seed)
    seeds = [int(s) for s in master.u64(cfg.scenes)]
    matches = [cfg.match.with_strategy(s) for s in cfg.strategies]

    def work(seed: int) -> tuple[BinaryMask, BinaryMask, list[RefinementOutcome]]:
        scene = gen_scene(seed, cfg.scene)
        pseudo = binarize(scene.teacher_sim, cfg.match.binarize_threshold)
        outcomes = [refine(scene.teacher_sim, scene.proposals, m) for m in matches]
        return scene.gt, pseudo, outcomes

    if workers == 1:
        rows = [work(s) for s in seeds]
    else:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(work, seeds))

    gts = [gt for gt, _, _ in rows]
    before = [pseudo for _, pseudo, _ in rows]
    ious_before = [iou(b, g) for b, g in zip(before, gts)]
    per_strategy = []
    for i, strategy in enumerate(cfg.strategies):
        outcomes = [outs[i] for _, _, outs in rows]
        after = [o.refined for o in outcomes]
        per_strategy.append(
            StrategyReport(
                strategy=strategy.value,
                stats=correction_stats(outcomes, gts),
                mean_iou_after=float(np.mean([iou(a, g) for a, g in zip(after, gts)])),
                oiou_after=oiou(after, gts),
            )
        )
    return BenchReport(
        seed=cfg.seed,
        scenes=cfg.scenes,
        mean_iou_before=float(np.mean(ious_before)),
        oiou_before=oiou(before, gts),
        per_strategy=tuple(per_strategy),
        config=cfg,
    )


def build_corpus(
    seed: int,
    n_labeled: int,
    n_unlabeled: int,
    n_heldout: int,
    params: SceneParams,
) -> tuple[list[LabeledItem], list[UnlabeledItem], ProposalLibrary, list[LabeledItem]]:
    """Scenes packaged for the trainer: labeled, unlabeled + library, held out."""
    if n_labeled < 1:
        raise ValueError(f"need at least one labeled scene, got {n_labeled}")
    if n_unlabeled < 0 or n_heldout < 0:
        raise ValueError("scene counts must be non-negative")
    master = SplitMix64(seed)
    seeds = [int(s) for s in master.u64(n_labeled + n_unlabeled + n_heldout)]
    scenes = [gen_scene(s, params) for s in seeds]
    labeled = [LabeledItem(sc.image_id, sc.features, sc.gt) for sc in scenes[:n_labeled]]
    middle = scenes[n_labeled : n_labeled + n_unlabeled]
    unlabeled = [
        UnlabeledItem(sc.image_id, sc.features, sc.gt.width, sc.gt.height) for sc in middle
    ]
    library = ProposalLibrary({sc.image_id: sc.proposals for sc in middle})
    heldout = [
        LabeledItem(sc.image_id, sc.features, sc.gt)
        for sc in scenes[n_labeled + n_unlabeled :]
    ]
    return labeled, unlabeled, library, heldout


@dataclass(frozen=True)
class HarnessConfig:
    """Stock semi-supervised experiment: corpus sizes plus trainer settings.

    These are the constants the training subcommand and the demo scripts
    use.  Scenes are deliberately label-starved (three labeled scenes with
    strong nuisance offsets) so the quality of the pseudo-label treatment is
    what separates the regimes.
    """

    labeled: int = 3
    unlabeled: int = 24
    heldout: int = 48
    offset_scale: float = 2.2
    nuisance_channels: int = 8
    burn_in_steps: int = 60
    mutual_steps: int = 900
    learning_rate: float = 0.8
    jitter: float = 0.18
    strategy: Strategy = Strategy.CPI_U

    def scene_params(self) -> SceneParams:
        return SceneParams(
            offset_scale=self.offset_scale, nuisance_channels=self.nuisance_channels
        )

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(
            burn_in_steps=self.burn_in_steps,
            mutual_steps=self.mutual_steps,
            learning_rate=self.learning_rate,
            jitter=self.jitter,
            match=MatchConfig().with_strategy(self.strategy),
            seed=seed,
        )

    def materialize(
        self, seed: int
    ) -> tuple[
        list[LabeledItem],
        list[UnlabeledItem],
        ProposalLibrary,
        list[LabeledItem],
        TrainConfig,
    ]:
        corpus = build_corpus(
            seed, self.labeled, self.unlabeled, self.heldout, self.scene_params()
        )
        return (*corpus, self.train_config(seed))
