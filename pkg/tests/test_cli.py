"""Command line behavior: outputs, determinism, exit codes."""

import json

import numpy as np
import pytest

from maskrefine import (
    BinaryMask,
    ProposalLibrary,
    PwaConfig,
    SceneParams,
    decode,
    encode,
    gen_scene,
    psi,
    save_library,
    write_smsk,
    write_soft_mask,
)
from maskrefine.cli import main
from maskrefine.rle import RleMask
from maskrefine.smsk import read_smsk

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"


def make_inputs(tmp_path, n_scenes=4, seed0=100):
    """Soft-mask directory plus proposal library built from synthetic scenes."""
    pseudo = tmp_path / "pseudo"
    pseudo.mkdir()
    params = SceneParams(width=16, height=16, parts=3, distractors=1, nuisance_channels=2)
    scenes = [gen_scene(seed0 + i, params) for i in range(n_scenes)]
    for scene in scenes:
        write_soft_mask(pseudo / f"{scene.image_id}.smsk", scene.teacher_sim)
    lib_path = tmp_path / "library.jsonl"
    with open(lib_path, "wb") as fh:
        save_library(ProposalLibrary({s.image_id: s.proposals for s in scenes}), fh)
    return pseudo, lib_path, scenes


def read_tree(folder):
    return {p.name: p.read_bytes() for p in sorted(folder.iterdir())}


def write_mask_json(folder, image_id, mask):
    rle = encode(mask)
    obj = {"image_id": image_id, "w": rle.width, "h": rle.height, "counts": list(rle.counts)}
    (folder / f"{image_id}.json").write_text(json.dumps(obj))


def test_refine_end_to_end(tmp_path, capsys):
    pseudo, lib, scenes = make_inputs(tmp_path)
    out = tmp_path / "out"
    report = tmp_path / "report.json"
    code = main([
        "refine", "--pseudo", str(pseudo), "--proposals", str(lib),
        "--out", str(out), "--report", str(report),
    ])
    assert code == 0
    payload = json.loads(report.read_text())
    assert payload["config"]["strategy"] == "cpi-u"
    assert payload["config"]["iou_rate"] == 0.5
    assert payload["config"]["inter1"] == 0.7
    assert payload["errors"] == [] and payload["skipped"] == []
    assert [e["image_id"] for e in payload["entries"]] == sorted(s.image_id for s in scenes)
    for entry in payload["entries"]:
        assert entry["kind"] in ("replaced", "merged", "fallback")
    # every refined mask decodes against the recorded dimensions
    for scene in scenes:
        obj = json.loads((out / f"{scene.image_id}.json").read_text())
        mask = decode(RleMask(obj["w"], obj["h"], tuple(obj["counts"])))
        assert (mask.width, mask.height) == (16, 16)


def test_refine_idempotent_and_worker_independent(tmp_path):
    pseudo, lib, _ = make_inputs(tmp_path)

    def run(tag, workers):
        out = tmp_path / f"out-{tag}"
        report = tmp_path / f"report-{tag}.json"
        code = main([
            "refine", "--pseudo", str(pseudo), "--proposals", str(lib),
            "--out", str(out), "--report", str(report), "--workers", str(workers),
        ])
        assert code == 0
        return read_tree(out), report.read_bytes()

    first = run("a", 1)
    again = run("b", 1)
    threaded = run("c", 3)
    assert first == again == threaded


def test_refine_missing_proposals(tmp_path, capsys):
    pseudo, lib, _ = make_inputs(tmp_path)
    write_soft_mask(pseudo / "stranger.smsk", gen_scene(999, SceneParams(width=16, height=16, nuisance_channels=0)).teacher_sim)
    out = tmp_path / "out"
    report = tmp_path / "report.json"
    base = ["refine", "--pseudo", str(pseudo), "--proposals", str(lib),
            "--out", str(out), "--report", str(report)]
    assert main(base) == 1
    assert "stranger" in capsys.readouterr().err
    payload = json.loads(report.read_text())
    assert [e["image_id"] for e in payload["errors"]] == ["stranger"]

    assert main(base + ["--skip-missing"]) == 0
    payload = json.loads(report.read_text())
    assert payload["skipped"] == ["stranger"] and payload["errors"] == []


def test_refine_corrupt_input_file(tmp_path, capsys):
    pseudo, lib, scenes = make_inputs(tmp_path, n_scenes=2)
    bad = pseudo / f"{scenes[0].image_id}.smsk"
    bad.write_bytes(b"not a mask")
    out = tmp_path / "out"
    report = tmp_path / "report.json"
    code = main(["refine", "--pseudo", str(pseudo), "--proposals", str(lib),
                 "--out", str(out), "--report", str(report)])
    assert code == 1
    payload = json.loads(report.read_text())
    assert len(payload["errors"]) == 1
    # the healthy item still went through
    assert len(payload["entries"]) == 1


def test_refine_png_output(tmp_path):
    pseudo, lib, scenes = make_inputs(tmp_path, n_scenes=1)
    out = tmp_path / "out"
    code = main(["refine", "--pseudo", str(pseudo), "--proposals", str(lib),
                 "--out", str(out), "--png"])
    assert code == 0
    png = (out / f"{scenes[0].image_id}.png").read_bytes()
    assert png.startswith(PNG_SIGNATURE)
    assert b"IHDR" in png and b"IEND" in png


def test_bench_deterministic(tmp_path):
    a = tmp_path / "a.json"
    b = tmp_path / "b.json"
    args = ["bench", "--seed", "5", "--scenes", "4", "--strategies", "cpi-u,iom"]
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b), "--workers", "3"]) == 0
    assert a.read_bytes() == b.read_bytes()
    payload = json.loads(a.read_text())
    assert payload["scenes"] == 4
    assert [s["strategy"] for s in payload["per_strategy"]] == ["cpi-u", "iom"]
    stats = payload["per_strategy"][0]["stats"]
    assert set(stats) == {"positive", "negative", "neutral", "no_correction"}
    assert sum(stats.values()) == 4


def test_bench_stdout_and_usage_errors(tmp_path, capsys):
    assert main(["bench", "--scenes", "2", "--seed", "3"]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["seed"] == 3
    with pytest.raises(SystemExit) as exc:
        main(["bench", "--scenes", "0"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit):
        main(["bench", "--strategies", "sideways"])
    with pytest.raises(SystemExit):
        main(["nonsense"])


def test_pwa_weight_map(tmp_path):
    soft = tmp_path / "soft.smsk"
    out = tmp_path / "weights.smsk"
    write_smsk(soft, 2, 2, [0.5, 0.5, 0.0, 1.0])
    assert main(["pwa", "--soft", str(soft), "--out", str(out)]) == 0
    w, h, values = read_smsk(out)
    assert (w, h) == (2, 2)
    cfg = PwaConfig()
    want = [psi(0.5, cfg), psi(0.5, cfg), psi(0.0, cfg), psi(1.0, cfg)]
    assert np.allclose(values, np.array(want, dtype=np.float32), atol=1e-7)


def test_pwa_rejects_corrupt_input(tmp_path, capsys):
    soft = tmp_path / "soft.smsk"
    soft.write_bytes(b"JUNKJUNKJUNKJUNK")
    code = main(["pwa", "--soft", str(soft), "--out", str(tmp_path / "w.smsk")])
    assert code == 1
    assert "error:" in capsys.readouterr().err


def test_train_smoke_and_determinism(tmp_path):
    a = tmp_path / "a.json"
    b = tmp_path / "b.json"
    args = ["train", "--seed", "2", "--labeled", "2", "--unlabeled", "2",
            "--heldout", "3", "--steps", "4", "--burn-in", "3"]
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    payload = json.loads(a.read_text())
    assert set(payload["regimes"]) == {"supervised", "baseline", "refined"}
    refined = payload["regimes"]["refined"]
    assert refined["tally"]["replaced"] + refined["tally"]["merged"] + refined["tally"]["fallback"] == 4 * 2
    assert payload["harness"]["mutual_steps"] == 4
    assert payload["ordering"]["refined_minus_baseline"] == pytest.approx(
        refined["oiou"] - payload["regimes"]["baseline"]["oiou"]
    )


def test_train_without_unlabeled_collapses_regimes(tmp_path):
    out = tmp_path / "t.json"
    code = main(["train", "--seed", "1", "--labeled", "2", "--unlabeled", "0",
                 "--heldout", "3", "--steps", "4", "--burn-in", "2", "--out", str(out)])
    assert code == 0
    payload = json.loads(out.read_text())
    regimes = payload["regimes"]
    assert regimes["supervised"]["oiou"] == regimes["baseline"]["oiou"] == regimes["refined"]["oiou"]
    assert regimes["supervised"]["weights"] == regimes["refined"]["weights"]
    assert payload["ordering"]["refined_minus_baseline"] == 0.0


def test_stats_neutral_when_identical(tmp_path):
    before, after, gt = tmp_path / "b", tmp_path / "a", tmp_path / "g"
    for folder in (before, after, gt):
        folder.mkdir()
    rng_bits = np.array([1, 1, 0, 0, 1, 0], dtype=np.uint8)
    mask = BinaryMask(3, 2, rng_bits)
    for folder in (before, after, gt):
        write_mask_json(folder, "img-a", mask)
    out = tmp_path / "stats.json"
    code = main(["stats", "--before", str(before), "--after", str(after),
                 "--gt", str(gt), "--out", str(out)])
    assert code == 0
    payload = json.loads(out.read_text())
    assert payload["items"] == 1
    assert payload["stats"] == {"positive": 0, "negative": 0, "neutral": 1, "no_correction": 0}
    assert payload["mean_iou_before"] == 1.0
    assert payload["oiou_after"] == 1.0


def test_stats_classifies_improvement(tmp_path):
    before, after, gt = tmp_path / "b", tmp_path / "a", tmp_path / "g"
    for folder in (before, after, gt):
        folder.mkdir()
    truth = BinaryMask(4, 1, np.array([1, 1, 1, 0], dtype=np.uint8))
    rough = BinaryMask(4, 1, np.array([1, 0, 0, 0], dtype=np.uint8))
    write_mask_json(gt, "x", truth)
    write_mask_json(before, "x", rough)
    write_mask_json(after, "x", truth)
    out = tmp_path / "stats.json"
    assert main(["stats", "--before", str(before), "--after", str(after),
                 "--gt", str(gt), "--out", str(out)]) == 0
    payload = json.loads(out.read_text())
    assert payload["stats"]["positive"] == 1
    assert payload["mean_iou_after"] > payload["mean_iou_before"]
    assert payload["oiou_after"] > payload["oiou_before"]


def test_stats_rejects_mismatched_ids(tmp_path, capsys):
    before, after, gt = tmp_path / "b", tmp_path / "a", tmp_path / "g"
    for folder in (before, after, gt):
        folder.mkdir()
    mask = BinaryMask(2, 1, np.array([1, 0], dtype=np.uint8))
    write_mask_json(before, "x", mask)
    write_mask_json(after, "y", mask)
    write_mask_json(gt, "x", mask)
    code = main(["stats", "--before", str(before), "--after", str(after), "--gt", str(gt)])
    assert code == 1
    assert "different image set" in capsys.readouterr().err


def test_refine_rejects_missing_directory(tmp_path, capsys):
    code = main(["refine", "--pseudo", str(tmp_path / "nope"),
                 "--proposals", str(tmp_path / "lib.jsonl"), "--out", str(tmp_path / "o")])
    assert code == 1
    assert "not a directory" in capsys.readouterr().err
