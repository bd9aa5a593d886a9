import json
from pathlib import Path

import numpy as np
import pytest

from ellkit import io
from ellkit.cli import EXIT_INPUT, EXIT_OK, EXIT_SCHEMA, EXIT_USAGE, run
from ellkit.geometry import Ellipse
from ellkit.labels import ellipses_to_ellseg, ellseg_to_partseg


def _tree(root: Path) -> dict:
    return {p.relative_to(root).as_posix(): p.read_bytes()
            for p in sorted(root.rglob("*")) if p.is_file()}


def _ok(argv):
    assert run([str(a) for a in argv]) == EXIT_OK


def _err(argv, capsys):
    code = run([str(a) for a in argv])
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["exit_code"] == code
    return code, err


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    _ok(["synth", "--count", 6, "--seed", 7, "--out", out, "--batch-size", 3])
    return out


def test_synth_writes_corpus(synth_dir):
    names = sorted(p.name for p in (synth_dir / "images").iterdir())
    assert names == [f"eye_{i:05d}.png" for i in range(6)]
    manifest = io.read_json(synth_dir / "manifest.json")
    assert [e["subset"] for e in manifest["entries"]] == ["0"] * 3 + ["1"] * 3
    assert len(io.read_jsonl(synth_dir / "gt.jsonl")) == 6


def test_synth_is_deterministic(synth_dir, tmp_path):
    _ok(["synth", "--count", 6, "--seed", 7, "--out", tmp_path, "--batch-size", 3])
    assert _tree(tmp_path) == _tree(synth_dir)


def test_gen_gt_recovers_synthetic_truth(synth_dir, tmp_path):
    _ok(["gen-gt", "--masks", synth_dir / "partseg", "--out", tmp_path, "--seed", 1])
    summary = io.read_json(tmp_path / "summary.json")
    assert summary["n_images"] == 6 and summary["discarded"] == 0
    truth = {r["key"]: r for r in io.read_jsonl(synth_dir / "gt.jsonl")}
    for row in io.read_jsonl(tmp_path / "gt.jsonl"):
        t = truth[row["key"]]
        for c in ("pupil_center", "iris_center"):
            assert np.hypot(*np.subtract(row[c], t[c])) <= 0.5
    assert sorted(p.name for p in (tmp_path / "ellseg").iterdir()) == sorted(truth)


def test_gen_gt_discards_images_without_enough_edge_points(tmp_path):
    masks = tmp_path / "masks"
    good = ellseg_to_partseg(ellipses_to_ellseg(Ellipse(160, 120, 20, 16, 0.3),
                                                Ellipse(158, 121, 50, 45, 0.3), 320, 240))
    for i in range(4):
        io.write_mask(masks / f"good{i}.png", good)
    no_pupil = good.copy()
    no_pupil[no_pupil == 3] = 2
    dot = good.copy()
    dot[dot == 3] = 2
    dot[120, 160] = 3  # a single pupil pixel yields fewer than five points
    blank = np.zeros_like(good)
    for name, m in (("a_nopupil.png", no_pupil), ("b_dot.png", dot), ("c_blank.png", blank)):
        io.write_mask(masks / name, m)
    out = tmp_path / "out"
    _ok(["gen-gt", "--masks", masks, "--out", out, "--seed", 0])
    summary = io.read_json(out / "summary.json")
    assert summary["discarded"] == 3
    assert summary["discarded_keys"] == ["a_nopupil.png", "b_dot.png", "c_blank.png"]
    assert summary["valid"] == {"pupil": 4, "iris": 6}
    assert not (out / "ellseg" / "b_dot.png").exists()


def test_gen_gt_flags_bad_class_values(tmp_path):
    io.write_mask(tmp_path / "m" / "x.png", np.full((20, 20), 9, np.uint8))
    _ok(["gen-gt", "--masks", tmp_path / "m", "--out", tmp_path / "o", "--seed", 0])
    (row,) = io.read_jsonl(tmp_path / "o" / "gt.jsonl")
    assert "outside" in row["diagnostics"]["pupil"]["reason"]


def test_eval_identity(synth_dir, tmp_path):
    gt = synth_dir / "gt.jsonl"
    _ok(["eval", "--pred", gt, "--gt", gt, "--pred-masks", synth_dir / "ellseg",
         "--gt-masks", synth_dir / "ellseg", "--out", tmp_path])
    m = io.read_json(tmp_path / "metrics.json")
    assert m["miou"] == 1.0
    assert set(m["pupil_detection"]["rates"]) == {1.0}
    assert set(m["iris_detection"]["rates"]) == {1.0}
    lines = (tmp_path / "pupil_detection.csv").read_text().splitlines()
    assert lines[0] == "threshold,rate" and len(lines) == 42


def test_fit_both_kinds(synth_dir, tmp_path):
    files = sorted((synth_dir / "ellseg").iterdir())[:2]
    _ok(["fit", *files, "--kind", "ellseg", "--seed", 0, "--out", tmp_path / "f.json"])
    res = io.read_json(tmp_path / "f.json")
    assert len(res) == 2 and all(r["valid"]["pupil"] for r in res.values())
    _ok(["fit", files[0], "--seed", 0, "--out", tmp_path / "g.json"])
    _ok(["fit", files[0], "--seed", 0, "--out", tmp_path / "h.json"])
    assert (tmp_path / "g.json").read_bytes() == (tmp_path / "h.json").read_bytes()


def test_centers(tmp_path):
    maps = np.zeros((3, 12, 16))
    maps[2, 5, 9] = 20.0
    # the iris center comes from the negated background channel
    maps[0] = 20.0
    maps[0, 4, 3] = 0.0
    io.write_prob_maps(tmp_path / "m.bin", maps)
    _ok(["centers", tmp_path / "m.bin", "--beta", 4, "--out", tmp_path / "c.json"])
    (res,) = io.read_json(tmp_path / "c.json").values()
    assert res["pupil_center"] == pytest.approx([9, 5], abs=1e-6)
    assert res["iris_center"] == pytest.approx([3, 4], abs=1e-6)


def test_loss_check(tmp_path, rng):
    logits = rng.normal(size=(3, 12, 16))
    labels = rng.integers(0, 3, (12, 16)).astype(np.uint8)
    io.write_prob_maps(tmp_path / "l.bin", logits, dtype="<f8")
    io.write_mask(tmp_path / "y.png", labels)
    base = ["loss-check", "--logits", tmp_path / "l.bin", "--labels", tmp_path / "y.png",
            "--epoch", 3, "--total-epochs", 10]
    _ok(base + ["--out", tmp_path / "a.json"])
    _ok(base + ["--pupil-center", "4.5,6", "--out", tmp_path / "b.json",
                "--grad-out", tmp_path / "g.bin"])
    a, b = io.read_json(tmp_path / "a.json"), io.read_json(tmp_path / "b.json")
    assert a["total"] == a["seg_loss"] and "com_loss" not in a
    assert b["total"] == pytest.approx(b["seg_loss"] + b["com_loss"])
    assert io.read_prob_maps(tmp_path / "g.bin").shape == (3, 12, 16)


def test_augment_is_deterministic(synth_dir, tmp_path):
    args = ["augment", "--images", synth_dir / "images", "--masks", synth_dir / "partseg",
            "--gt", synth_dir / "gt.jsonl", "--count", 2, "--seed", 3]
    _ok(args + ["--out", tmp_path / "a"])
    _ok(args + ["--out", tmp_path / "b"])
    assert _tree(tmp_path / "a") == _tree(tmp_path / "b")
    rows = io.read_jsonl(tmp_path / "a" / "augment.jsonl")
    assert len(rows) == 12 and all(len(r["centers"]) == 2 for r in rows)
    _ok(args[:-2] + ["--seed", 4, "--out", tmp_path / "c"])
    assert _tree(tmp_path / "c") != _tree(tmp_path / "a")


def test_split(tmp_path):
    _ok(["synth", "--count", 40, "--seed", 2, "--out", tmp_path / "s", "--batch-size", 40])
    args = ["split", "--manifest", tmp_path / "s" / "manifest.json", "--grid-bins", 1, 1,
            "--seed", 5]
    _ok(args + ["--out", tmp_path / "a"])
    _ok(args + ["--out", tmp_path / "b"])
    assert _tree(tmp_path / "a") == _tree(tmp_path / "b")
    assert io.read_json(tmp_path / "a" / "split.json") == {
        "n_records": 40, "train": 32, "validation": 8, "dropped": 0}


def test_occlusion_exp_is_deterministic(tmp_path):
    args = ["occlusion-exp", "--n", 3, "--apertures", 1.0, 0.5, "--seed", 9]
    _ok(args + ["--out", tmp_path / "a.csv", "--json", tmp_path / "a.json"])
    _ok(args + ["--out", tmp_path / "b.csv", "--json", tmp_path / "b.json"])
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    assert (tmp_path / "a.csv").read_text().splitlines()[0] == \
        "aperture,partseg_med,ellseg_med,partseg_fail,ellseg_fail"


@pytest.mark.parametrize("argv", [[], ["bogus"], ["synth", "--count", "3", "--out", "x"],
                                  ["synth", "--count", "0", "--seed", "1", "--out", "x"],
                                  ["synth", "--count", "2", "--aperture", "1.5", "--seed", "1",
                                   "--out", "x"]])
def test_usage_errors(argv, capsys):
    code, err = _err(argv, capsys)
    assert code == EXIT_USAGE and err["error"] == "usage_error"


def test_unreadable_input(tmp_path, capsys):
    code, err = _err(["gen-gt", "--masks", tmp_path / "missing", "--out", tmp_path, "--seed", 0],
                     capsys)
    assert code == EXIT_INPUT
    (tmp_path / "junk.png").write_bytes(b"not a png")
    code, _ = _err(["fit", tmp_path / "junk.png", "--seed", 0, "--out", tmp_path / "o.json"],
                   capsys)
    assert code == EXIT_INPUT


def test_schema_violations(tmp_path, capsys):
    (tmp_path / "bad.jsonl").write_text('{"nokey": 1}\n')
    code, err = _err(["eval", "--pred", tmp_path / "bad.jsonl", "--gt", tmp_path / "bad.jsonl",
                      "--out", tmp_path / "o"], capsys)
    assert code == EXIT_SCHEMA and err["error"] == "schema_violation"
    io.write_prob_maps(tmp_path / "m.bin", np.zeros((2, 4, 4)))
    code, _ = _err(["centers", tmp_path / "m.bin", "--out", tmp_path / "c.json"], capsys)
    assert code == EXIT_SCHEMA
    io.write_mask(tmp_path / "e.png", np.full((8, 8), 3, np.uint8))
    code, _ = _err(["fit", tmp_path / "e.png", "--kind", "ellseg", "--seed", 0,
                    "--out", tmp_path / "f.json"], capsys)
    assert code == EXIT_SCHEMA
