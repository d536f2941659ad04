"""Generate a demo dataset for the command line tools.

Writes a directory of noisy soft masks (.smsk), the matching proposal
library (JSONL), and a directory of ground-truth masks (RLE JSON), all from
seeded synthetic scenes.  Afterwards the full CLI loop works on it:

    python3 scripts/make_demo_data.py --out demo --scenes 20
    maskrefine refine --pseudo demo/pseudo --proposals demo/library.jsonl \\
        --out demo/refined --report demo/report.json --png
    maskrefine stats --before demo/binarized --after demo/refined --gt demo/gt
"""

import argparse
import json
from pathlib import Path

from maskrefine import (
    ProposalLibrary,
    SceneParams,
    binarize,
    encode,
    gen_scene,
    save_library,
    write_soft_mask,
)
from maskrefine.rng import SplitMix64


def write_mask_json(folder: Path, image_id: str, mask) -> None:
    rle = encode(mask)
    obj = {"image_id": image_id, "w": rle.width, "h": rle.height, "counts": list(rle.counts)}
    (folder / f"{image_id}.json").write_text(json.dumps(obj) + "\n", encoding="utf-8")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="demo")
    parser.add_argument("--scenes", type=int, default=20)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--side", type=int, default=32, help="scene width and height")
    args = parser.parse_args()

    root = Path(args.out)
    pseudo_dir = root / "pseudo"
    gt_dir = root / "gt"
    binarized_dir = root / "binarized"
    for folder in (pseudo_dir, gt_dir, binarized_dir):
        folder.mkdir(parents=True, exist_ok=True)

    params = SceneParams(width=args.side, height=args.side)
    rng = SplitMix64(args.seed)
    sets = {}
    for _ in range(args.scenes):
        scene = gen_scene(int(rng.next_u64()), params)
        write_soft_mask(pseudo_dir / f"{scene.image_id}.smsk", scene.teacher_sim)
        write_mask_json(gt_dir, scene.image_id, scene.gt)
        write_mask_json(binarized_dir, scene.image_id, binarize(scene.teacher_sim, 0.5))
        sets[scene.image_id] = scene.proposals
    with open(root / "library.jsonl", "wb") as fh:
        save_library(ProposalLibrary(sets), fh)
    print(f"wrote {args.scenes} scenes under {root}/")


if __name__ == "__main__":
    main()
