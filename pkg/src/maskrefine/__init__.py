"""Pseudo-label refinement against proposal libraries, with a training harness.

The package turns noisy soft segmentation masks into better training
targets by matching them against a per-image library of region proposals,
weights the remaining unmatched pixels by prediction confidence, and ships
a small teacher-student trainer plus a seeded synthetic benchmark that
exercises the whole pipeline end to end.
"""

from .bench import (
    BenchConfig,
    BenchReport,
    CorrectionStats,
    CorruptionParams,
    HarnessConfig,
    Scene,
    SceneParams,
    StrategyReport,
    build_corpus,
    corrupt,
    correction_stats,
    gen_scene,
    oiou,
    partition_mask,
    run_bench,
)
from .losses import (
    EPS_LOG,
    LossConfig,
    PwaConfig,
    WeightMap,
    bce,
    combined_loss,
    pixel_bce,
    psi,
    weight_map,
    weighted_bce,
    weighted_bce_map,
)
from .masks import (
    BinaryMask,
    DimensionMismatchError,
    SoftMask,
    binarize,
    intersection_count,
    iou,
    overlap_candidate,
    overlap_pseudo,
    union_count,
    union_merge,
)
from .proposals import (
    LibraryError,
    ProposalLibrary,
    ProposalSet,
    load_library,
    rle_from_json_obj,
    rle_json_bytes,
    rle_json_obj,
    save_library,
    validate,
)
from .refine import (
    FALLBACK,
    MERGED,
    REPLACED,
    MatchConfig,
    RefinementOutcome,
    Strategy,
    refine,
    refine_cpi,
    refine_iom,
)
from .rle import RleMask, decode, encode, validate_counts
from .rng import SplitMix64
from .smsk import (
    SmskFormatError,
    read_smsk,
    read_soft_mask,
    write_smsk,
    write_soft_mask,
)
from .training import (
    EmaState,
    LabeledItem,
    ModelParams,
    OutcomeTally,
    RegimeResult,
    TrainConfig,
    TrainReport,
    UnlabeledItem,
    burn_in,
    descend,
    ema_update,
    evaluate_oiou,
    mutual_learn,
    mutual_loop,
    predict,
    supervised_loss_and_grad,
)

__version__ = "0.1.0"

__all__ = [
    "BenchConfig",
    "BenchReport",
    "BinaryMask",
    "CorrectionStats",
    "CorruptionParams",
    "DimensionMismatchError",
    "EPS_LOG",
    "EmaState",
    "FALLBACK",
    "HarnessConfig",
    "LabeledItem",
    "LibraryError",
    "LossConfig",
    "MERGED",
    "MatchConfig",
    "ModelParams",
    "OutcomeTally",
    "ProposalLibrary",
    "ProposalSet",
    "PwaConfig",
    "REPLACED",
    "RefinementOutcome",
    "RegimeResult",
    "RleMask",
    "Scene",
    "SceneParams",
    "SoftMask",
    "SplitMix64",
    "SmskFormatError",
    "Strategy",
    "StrategyReport",
    "TrainConfig",
    "TrainReport",
    "UnlabeledItem",
    "WeightMap",
    "bce",
    "binarize",
    "build_corpus",
    "burn_in",
    "combined_loss",
    "correction_stats",
    "corrupt",
    "decode",
    "descend",
    "ema_update",
    "encode",
    "evaluate_oiou",
    "gen_scene",
    "intersection_count",
    "iou",
    "load_library",
    "mutual_learn",
    "mutual_loop",
    "oiou",
    "overlap_candidate",
    "overlap_pseudo",
    "partition_mask",
    "pixel_bce",
    "predict",
    "psi",
    "read_smsk",
    "read_soft_mask",
    "refine",
    "refine_cpi",
    "refine_iom",
    "rle_from_json_obj",
    "rle_json_bytes",
    "rle_json_obj",
    "run_bench",
    "save_library",
    "supervised_loss_and_grad",
    "union_count",
    "union_merge",
    "validate",
    "validate_counts",
    "weight_map",
    "weighted_bce",
    "weighted_bce_map",
    "write_smsk",
    "write_soft_mask",
]
