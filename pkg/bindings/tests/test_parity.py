"""File-level parity between the in-process binding and the command line.

Fifty synthetic benchmark scenes are refined twice: once by the
``maskrefine refine`` command reading .smsk files, once by bind_refine
on raw buffers. For every scene the mask file the command wrote must
equal, byte for byte, the file rebuilt from the binding's output, and
the command's report entries must agree with the binding's metadata.
Engine correctness is the core package's own test surface; this suite
only crosses the boundary.
"""

import json

import numpy as np

from maskrefine import ProposalLibrary, SceneParams, gen_scene, rle_json_obj, save_library, write_soft_mask
from maskrefine.cli import main as cli_main

from maskrefine_bindings import bind_refine, rle_decode, rle_encode

SCENE_COUNT = 50
FIRST_SEED = 0xB1D


def mask_file_bytes(image_id: str, refined: np.ndarray) -> bytes:
    obj = rle_encode(refined)
    record = {"image_id": image_id, "w": obj["w"], "h": obj["h"], "counts": obj["counts"]}
    return (json.dumps(record, separators=(",", ":")) + "\n").encode("utf-8")


def test_binding_output_matches_cli_files_on_fifty_scenes(tmp_path):
    scenes = [gen_scene(FIRST_SEED + k, SceneParams()) for k in range(SCENE_COUNT)]

    pseudo_dir = tmp_path / "pseudo"
    pseudo_dir.mkdir()
    out_dir = tmp_path / "refined"
    report_path = tmp_path / "report.json"
    library_path = tmp_path / "library.jsonl"
    for scene in scenes:
        write_soft_mask(pseudo_dir / f"{scene.image_id}.smsk", scene.teacher_sim)
    with open(library_path, "wb") as fh:
        save_library(ProposalLibrary({s.image_id: s.proposals for s in scenes}), fh)

    rc = cli_main(
        [
            "refine",
            "--pseudo", str(pseudo_dir),
            "--proposals", str(library_path),
            "--out", str(out_dir),
            "--report", str(report_path),
        ]
    )
    assert rc == 0
    report = json.loads(report_path.read_text(encoding="utf-8"))
    assert len(report["entries"]) == SCENE_COUNT
    by_id = {entry["image_id"]: entry for entry in report["entries"]}

    for scene in scenes:
        soft = scene.teacher_sim
        teacher = soft.probs.reshape(soft.height, soft.width)
        proposals = [rle_decode(rle_json_obj(r)) for r in scene.proposals.proposals]
        refined, meta = bind_refine(teacher, proposals)

        written = (out_dir / f"{scene.image_id}.json").read_bytes()
        assert written == mask_file_bytes(scene.image_id, refined)

        entry = by_id[scene.image_id]
        assert entry["kind"] == meta["kind"]
        assert entry["selected_indices"] == meta["indices"]
        assert entry["scores"] == meta["scores"]
