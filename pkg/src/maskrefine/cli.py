"""Command line front end.

Five subcommands: refine a directory of soft masks against a proposal
library, run the synthetic benchmark, compute a confidence weight map,
run the semi-supervised training comparison, and score a before/after
pair of mask directories against ground truth.

Exit codes: 0 on success, 1 when any item or input failed, 2 on usage
errors.  All file outputs are byte-deterministic: fixed key order, fixed
float formatting (shortest round-trip repr), newline-terminated, and
independent of the worker count.
"""

from __future__ import annotations

import argparse
import dataclasses
import enum
import json
import struct
import sys
import zlib
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .bench import (
    BenchConfig,
    BenchReport,
    CorruptionParams,
    HarnessConfig,
    SceneParams,
    run_bench,
)
from .losses import PwaConfig, weight_map
from .masks import (
    BinaryMask,
    DimensionMismatchError,
    intersection_count,
    iou,
    union_count,
)
from .proposals import (
    LibraryError,
    ProposalLibrary,
    load_library,
    rle_from_json_obj,
)
from .refine import FALLBACK, MatchConfig, Strategy, refine
from .rle import decode, encode
from .smsk import SmskFormatError, read_soft_mask, write_smsk
from .training import TrainReport, mutual_learn

_PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got '{text}'")
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a value >= 1, got {value}")
    return value


def _nonneg_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got '{text}'")
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a value >= 0, got {value}")
    return value


def _unit_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got '{text}'")
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError(f"expected a value in [0, 1], got {value}")
    return value


def _positive_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got '{text}'")
    if value <= 0.0:
        raise argparse.ArgumentTypeError(f"expected a value > 0, got {value}")
    return value


def _nonneg_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got '{text}'")
    if value < 0.0:
        raise argparse.ArgumentTypeError(f"expected a value >= 0, got {value}")
    return value


def _strategy(text: str) -> Strategy:
    try:
        return Strategy.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def _strategy_list(text: str) -> tuple[Strategy, ...]:
    if text.strip().lower() == "all":
        return (Strategy.IOM, Strategy.CPI, Strategy.CPI_U, Strategy.CPI_O)
    out = []
    for token in text.split(","):
        token = token.strip()
        if token:
            out.append(_strategy(token))
    if not out:
        raise argparse.ArgumentTypeError("need at least one strategy")
    return tuple(out)


def _jsonable(value):
    """Dataclasses to dicts in field order, enums to values, tuples to lists."""
    if dataclasses.is_dataclass(value) and not isinstance(value, type):
        return {
            f.name: _jsonable(getattr(value, f.name)) for f in dataclasses.fields(value)
        }
    if isinstance(value, enum.Enum):
        return _jsonable(value.value)
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if hasattr(value, "item") and not isinstance(value, (str, bytes)):
        return value.item()
    return value


def _dump_report(obj) -> bytes:
    return (json.dumps(obj, indent=2) + "\n").encode("utf-8")


def _dump_line(obj) -> bytes:
    return (json.dumps(obj, separators=(",", ":")) + "\n").encode("utf-8")


def _png_bytes(mask: BinaryMask) -> bytes:
    """Minimal 8-bit grayscale PNG: foreground white, background black."""
    grid = (mask.to_array() * 255).astype("uint8")
    raw = b"".join(b"\x00" + row.tobytes() for row in grid)

    def chunk(tag: bytes, data: bytes) -> bytes:
        body = tag + data
        return struct.pack(">I", len(data)) + body + struct.pack(">I", zlib.crc32(body))

    header = struct.pack(">IIBBBBB", mask.width, mask.height, 8, 0, 0, 0, 0)
    return (
        _PNG_SIGNATURE
        + chunk(b"IHDR", header)
        + chunk(b"IDAT", zlib.compress(raw, 6))
        + chunk(b"IEND", b"")
    )


def _read_mask_file(path: Path) -> tuple[str, BinaryMask]:
    """One run-length mask per file: {"image_id", "w", "h", "counts"}."""
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise LibraryError(f"{path}: unreadable mask file: {exc}") from exc
    rle = rle_from_json_obj(obj)
    image_id = obj.get("image_id", path.stem)
    return str(image_id), decode(rle)


def _match_config(args: argparse.Namespace) -> MatchConfig:
    return MatchConfig(
        strategy=args.strategy,
        iou_rate=args.iou_rate,
        inter1=args.inter1,
        inter2=args.inter2,
        epsilon=args.epsilon,
        binarize_threshold=args.threshold,
    )


def cmd_refine(args: argparse.Namespace) -> int:
    pseudo_dir = Path(args.pseudo)
    if not pseudo_dir.is_dir():
        print(f"error: --pseudo is not a directory: {pseudo_dir}", file=sys.stderr)
        return 1
    cfg = _match_config(args)
    try:
        with open(args.proposals, "rb") as fh:
            library = load_library(fh)
    except (OSError, LibraryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    items = sorted(pseudo_dir.glob("*.smsk"), key=lambda p: p.name)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    def work(path: Path):
        image_id = path.stem
        if image_id not in library:
            return ("missing", image_id, f"no proposal set for image '{image_id}'")
        try:
            soft = read_soft_mask(path)
            outcome = refine(soft, library.get(image_id), cfg)
        except (SmskFormatError, DimensionMismatchError, ValueError, OSError) as exc:
            return ("error", image_id, str(exc))
        entry = {
            "image_id": image_id,
            "strategy": cfg.strategy.value,
            "kind": outcome.kind,
            "selected_indices": list(outcome.indices),
            "scores": list(outcome.scores),
            "iou_with_pseudo": iou(outcome.refined, outcome.pseudo_binary),
        }
        mask_obj = {
            "image_id": image_id,
            "w": outcome.refined.width,
            "h": outcome.refined.height,
            "counts": list(encode(outcome.refined).counts),
        }
        png = _png_bytes(outcome.refined) if args.png else None
        return ("ok", image_id, entry, _dump_line(mask_obj), png)

    if args.workers == 1:
        results = [work(p) for p in items]
    else:
        with ThreadPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(work, items))

    entries, errors, skipped = [], [], []
    for result in results:
        if result[0] == "ok":
            _, image_id, entry, mask_bytes, png = result
            entries.append(entry)
            (out_dir / f"{image_id}.json").write_bytes(mask_bytes)
            if png is not None:
                (out_dir / f"{image_id}.png").write_bytes(png)
        elif result[0] == "missing" and args.skip_missing:
            skipped.append(result[1])
        else:
            errors.append({"image_id": result[1], "error": result[2]})
            print(f"error: {result[1]}: {result[2]}", file=sys.stderr)
    report = {
        "config": {
            "strategy": cfg.strategy.value,
            "iou_rate": cfg.iou_rate,
            "inter1": cfg.inter1,
            "inter2": cfg.inter2,
            "epsilon": cfg.epsilon,
            "binarize_threshold": cfg.binarize_threshold,
        },
        "entries": entries,
        "skipped": skipped,
        "errors": errors,
    }
    if args.report:
        Path(args.report).write_bytes(_dump_report(report))
    return 1 if errors else 0


def cmd_bench(args: argparse.Namespace) -> int:
    scene = SceneParams(corruption=CorruptionParams(mode=args.mode))
    cfg = BenchConfig(
        seed=args.seed, scenes=args.scenes, scene=scene, strategies=args.strategies
    )
    report = run_bench(cfg, workers=args.workers)
    payload = {
        "seed": report.seed,
        "scenes": report.scenes,
        "mean_iou_before": report.mean_iou_before,
        "oiou_before": report.oiou_before,
        "per_strategy": [
            {
                "strategy": s.strategy,
                "stats": s.stats.as_dict(),
                "mean_iou_after": s.mean_iou_after,
                "oiou_after": s.oiou_after,
            }
            for s in report.per_strategy
        ],
        "config": _jsonable(report.config),
    }
    blob = _dump_report(payload)
    if args.out:
        Path(args.out).write_bytes(blob)
    else:
        sys.stdout.write(blob.decode("utf-8"))
    return 0


def cmd_pwa(args: argparse.Namespace) -> int:
    cfg = PwaConfig(gamma=args.gamma, sigma2=args.sigma2, mu=args.mu)
    soft = read_soft_mask(args.soft)
    weights = weight_map(soft, cfg)
    write_smsk(args.out, weights.width, weights.height, weights.weights)
    return 0


def _regime_payload(result) -> dict:
    return {
        "oiou": result.oiou,
        "final_loss": result.losses[-1] if result.losses else None,
        "tally": result.tally.as_dict(),
        "weights": [float(w) for w in result.params.weights],
        "bias": float(result.params.bias),
        "losses": [float(l) for l in result.losses],
    }


def train_payload(report: TrainReport, harness: HarnessConfig) -> dict:
    return {
        "seed": report.seed,
        "harness": _jsonable(harness),
        "regimes": {
            "supervised": _regime_payload(report.supervised),
            "baseline": _regime_payload(report.baseline),
            "refined": _regime_payload(report.refined),
        },
        "ordering": {
            "refined_minus_baseline": report.refined.oiou - report.baseline.oiou,
            "baseline_minus_supervised": report.baseline.oiou - report.supervised.oiou,
        },
    }


def cmd_train(args: argparse.Namespace) -> int:
    harness = HarnessConfig(
        labeled=args.labeled,
        unlabeled=args.unlabeled,
        heldout=args.heldout,
        offset_scale=args.offset_scale,
        burn_in_steps=args.burn_in,
        mutual_steps=args.steps,
        learning_rate=args.lr,
        jitter=args.jitter,
        strategy=args.strategy,
    )
    labeled, unlabeled, library, heldout, cfg = harness.materialize(args.seed)
    report = mutual_learn(labeled, unlabeled, library, heldout, cfg)
    blob = _dump_report(train_payload(report, harness))
    if args.out:
        Path(args.out).write_bytes(blob)
    else:
        sys.stdout.write(blob.decode("utf-8"))
    return 0


def cmd_stats(args: argparse.Namespace) -> int:
    dirs = {name: Path(getattr(args, name)) for name in ("before", "after", "gt")}
    masks: dict[str, dict[str, BinaryMask]] = {}
    for name, folder in dirs.items():
        if not folder.is_dir():
            print(f"error: --{name} is not a directory: {folder}", file=sys.stderr)
            return 1
        loaded = {}
        for path in sorted(folder.glob("*.json"), key=lambda p: p.name):
            image_id, mask = _read_mask_file(path)
            loaded[image_id] = mask
        masks[name] = loaded
    ids = sorted(masks["before"])
    for name in ("after", "gt"):
        if sorted(masks[name]) != ids:
            print(
                f"error: --{name} holds a different image set than --before",
                file=sys.stderr,
            )
            return 1
    positive = negative = neutral = 0
    inter_before = union_before = inter_after = union_after = 0
    iou_before_sum = iou_after_sum = 0.0
    for image_id in ids:
        b, a, g = masks["before"][image_id], masks["after"][image_id], masks["gt"][image_id]
        ib, ia = iou(b, g), iou(a, g)
        if ia > ib:
            positive += 1
        elif ia < ib:
            negative += 1
        else:
            neutral += 1
        iou_before_sum += ib
        iou_after_sum += ia
        inter_before += intersection_count(b, g)
        union_before += union_count(b, g)
        inter_after += intersection_count(a, g)
        union_after += union_count(a, g)
    count = len(ids)
    payload = {
        "items": count,
        "stats": {
            "positive": positive,
            "negative": negative,
            "neutral": neutral,
            "no_correction": 0,
        },
        "mean_iou_before": iou_before_sum / count if count else 0.0,
        "mean_iou_after": iou_after_sum / count if count else 0.0,
        "oiou_before": inter_before / union_before if union_before else 1.0,
        "oiou_after": inter_after / union_after if union_after else 1.0,
    }
    blob = _dump_report(payload)
    if args.out:
        Path(args.out).write_bytes(blob)
    else:
        sys.stdout.write(blob.decode("utf-8"))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="maskrefine",
        description="Pseudo-label refinement against proposal libraries.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("refine", help="refine a directory of soft masks")
    p.add_argument("--pseudo", required=True, help="directory of .smsk soft masks")
    p.add_argument("--proposals", required=True, help="JSONL proposal library")
    p.add_argument("--strategy", type=_strategy, default=Strategy.CPI_U)
    p.add_argument("--iou-rate", type=_unit_float, default=0.5)
    p.add_argument("--inter1", type=_unit_float, default=0.7)
    p.add_argument("--inter2", type=_unit_float, default=0.7)
    p.add_argument("--epsilon", type=_positive_float, default=1e-6)
    p.add_argument("--threshold", type=_unit_float, default=0.5)
    p.add_argument("--out", required=True, help="output directory for refined masks")
    p.add_argument("--report", help="write a JSON report here")
    p.add_argument("--skip-missing", action="store_true",
                   help="skip images with no proposal set instead of failing")
    p.add_argument("--png", action="store_true",
                   help="also write a PNG rendering of each refined mask")
    p.add_argument("--workers", type=_positive_int, default=1)
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("bench", help="run the synthetic benchmark")
    p.add_argument("--seed", type=_nonneg_int, default=0)
    p.add_argument("--scenes", type=_positive_int, default=100)
    p.add_argument("--mode", choices=["under", "over", "mixed"], default="under")
    p.add_argument(
        "--strategies",
        type=_strategy_list,
        default=(Strategy.IOM, Strategy.CPI, Strategy.CPI_U, Strategy.CPI_O),
        help="comma-separated list, or 'all'",
    )
    p.add_argument("--out", help="write the report here instead of stdout")
    p.add_argument("--workers", type=_positive_int, default=1)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("pwa", help="confidence weight map for a soft mask")
    p.add_argument("--soft", required=True, help="input .smsk soft mask")
    p.add_argument("--gamma", type=float, default=1.3)
    p.add_argument("--sigma2", type=_positive_float, default=0.1)
    p.add_argument("--mu", type=_unit_float, default=0.5)
    p.add_argument("--out", required=True, help="output .smsk weight map")
    p.set_defaults(func=cmd_pwa)

    demo = HarnessConfig()
    p = sub.add_parser("train", help="three-regime semi-supervised comparison")
    p.add_argument("--seed", type=_nonneg_int, default=0)
    p.add_argument("--labeled", type=_positive_int, default=demo.labeled)
    p.add_argument("--unlabeled", type=_nonneg_int, default=demo.unlabeled)
    p.add_argument("--heldout", type=_positive_int, default=demo.heldout)
    p.add_argument("--strategy", type=_strategy, default=demo.strategy)
    p.add_argument("--steps", type=_nonneg_int, default=demo.mutual_steps,
                   help="mutual-learning steps")
    p.add_argument("--burn-in", type=_nonneg_int, default=demo.burn_in_steps)
    p.add_argument("--lr", type=_positive_float, default=demo.learning_rate)
    p.add_argument("--jitter", type=_nonneg_float, default=demo.jitter)
    p.add_argument("--offset-scale", type=_nonneg_float, default=demo.offset_scale)
    p.add_argument("--out", help="write metrics JSON here instead of stdout")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("stats", help="score refined masks against ground truth")
    p.add_argument("--before", required=True, help="directory of original masks")
    p.add_argument("--after", required=True, help="directory of refined masks")
    p.add_argument("--gt", required=True, help="directory of ground-truth masks")
    p.add_argument("--out", help="write the summary here instead of stdout")
    p.set_defaults(func=cmd_stats)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (SmskFormatError, LibraryError, DimensionMismatchError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
