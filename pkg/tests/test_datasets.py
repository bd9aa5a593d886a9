import logging
import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ellkit import io
from ellkit.datasets import (PRESETS, DatasetManifest, Record, SplitError, load_dataset,
                             map_point, preprocess, resize_mask, stratified_split, stratify_key)
from ellkit.edges import IRIS, PUPIL, SCLERA
from ellkit.geometry import Ellipse
from ellkit.labels import ellipses_to_ellseg, ellseg_to_partseg, partseg_to_ellipses


def _eye_mask(w, h, pupil, iris):
    return ellseg_to_partseg(ellipses_to_ellseg(pupil, iris, w, h))


def test_nvgaze_center_mapping():
    # pixel centers sit on integers, so the native center pixel maps a
    # quarter-pixel inside the working-resolution center
    assert map_point((640, 480), (0, 0), (0.25, 0.25)) == (159.625, 119.625)
    assert map_point((-0.5, -0.5), (0, 0), (0.25, 0.25)) == (-0.5, -0.5)
    assert map_point((1279.5, 959.5), (0, 0), (0.25, 0.25)) == (319.5, 239.5)


def test_nvgaze_downscale_keeps_mask_and_centers_consistent():
    pupil, iris = Ellipse(641.3, 482.7, 90, 70, 0.4), Ellipse(630.2, 478.9, 220, 180, 0.4)
    mask = _eye_mask(1280, 960, pupil, iris)
    img = (mask * 60).astype(np.uint8)
    out_img, out_mask, (pc, ic) = preprocess(PRESETS["nvgaze"], img, mask,
                                             [pupil.center, iris.center])
    assert out_img.shape == out_mask.shape == (240, 320)
    rec = partseg_to_ellipses(out_mask, rng=np.random.default_rng(0))
    assert math.dist(rec.pupil.center, pc) <= 0.1
    assert math.dist(rec.iris.center, ic) <= 0.1
    # naive x / 4 would be 0.375 px off along each axis
    assert math.dist(rec.pupil.center, (pupil.cx / 4, pupil.cy / 4)) > 0.4


def test_openeds_crop_then_scale():
    w, h = 400, 640
    pupil, iris = Ellipse(210.0, 350.0, 25, 22), Ellipse(205.0, 352.0, 60, 55)
    mask = np.zeros((h, w), dtype=np.uint8)
    mask[250:450, 40:370] = SCLERA
    mask[_eye_mask(w, h, pupil, iris) == IRIS] = IRIS
    mask[_eye_mask(w, h, pupil, iris) == PUPIL] = PUPIL
    img = (mask * 50).astype(np.uint8)
    oi, om, (pc,) = preprocess(PRESETS["openeds"], img, mask, [pupil.center])
    assert oi.shape == om.shape == (240, 320)
    # crop 400x300 about the sclera centroid, then scale by 320/400 = 240/300 = 0.8
    ys, xs = np.nonzero(mask == SCLERA)
    y0 = int(round(ys.mean() - 150))
    assert pc == pytest.approx(((pupil.cx + 0.5) * 0.8 - 0.5, (pupil.cy - y0 + 0.5) * 0.8 - 0.5))
    assert set(np.unique(om)) <= set(np.unique(mask))
    rec = partseg_to_ellipses(om, rng=np.random.default_rng(0))
    assert math.dist(rec.pupil.center, pc) <= 1.0


def test_synthetic_passthrough():
    img = np.random.default_rng(0).integers(0, 255, (240, 320), dtype=np.uint8)
    mask = np.zeros((240, 320), dtype=np.uint8)
    oi, om, (pc, ic) = preprocess(PRESETS["synthetic"], img, mask, [(10.5, 20.25), None])
    assert oi is img and om is mask
    assert pc == (10.5, 20.25) and ic is None


def test_explicit_scale():
    mask = np.zeros((100, 200), dtype=np.uint8)
    mask[40:60, 80:120] = PUPIL
    _, om, (pc,) = preprocess(PRESETS["synthetic"], None, mask, [(99.5, 49.5)], scale=0.5)
    assert om.shape == (50, 100)
    assert pc == (49.5, 24.5)


def test_resize_mask_keeps_classes():
    m = np.zeros((40, 40), dtype=np.uint8)
    m[10:30, 10:30] = 2
    m[14:26, 14:26] = 3  # even-aligned, maps onto whole output pixels
    out = resize_mask(m, (20, 20))
    assert set(np.unique(out)) == {0, 2, 3}
    assert (out == 3).sum() == 36


def _write_corpus(root, n=3):
    entries = []
    for i in range(n):
        p, ir = Ellipse(150 + i, 120, 20, 18), Ellipse(150 + i, 120, 50, 45)
        mask = _eye_mask(320, 240, p, ir)
        io.write_mask(root / f"m{i}.png", mask)
        io.write_image(root / f"i{i}.png", (mask * 60).astype(np.uint8))
        entries.append({"image": f"i{i}.png", "mask": f"m{i}.png",
                        "pupil_center": list(p.center), "subset": "a"})
    return entries


def test_load_dataset_roundtrip(tmp_path):
    entries = _write_corpus(tmp_path)
    io.write_json(tmp_path / "manifest.json", {"root": ".", "preset": "synthetic",
                                                "entries": entries})
    recs = list(load_dataset(tmp_path / "manifest.json"))
    assert [r.key for r in recs] == ["i0.png", "i1.png", "i2.png"]
    assert all(r.valid for r in recs)
    assert recs[1].pupil_center == (151.0, 120.0)
    assert recs[0].mask.shape == (240, 320) and recs[0].subset == "a"


def test_missing_file_is_skipped_with_warning(tmp_path, caplog):
    entries = _write_corpus(tmp_path)
    entries[1]["image"] = "nope.png"
    m = DatasetManifest(tmp_path, entries)
    with caplog.at_level(logging.WARNING, logger="ellkit.datasets"):
        recs = list(load_dataset(m))
    assert [r.key for r in recs] == ["i0.png", "i2.png"]
    assert "nope.png" in caplog.text


def test_malformed_mask_is_flagged(tmp_path):
    entries = _write_corpus(tmp_path, 2)
    bad = io.read_mask(tmp_path / "m0.png")
    bad[0, 0] = 7
    io.write_mask(tmp_path / "m0.png", bad)
    io.write_mask(tmp_path / "m1.png", np.zeros((10, 10), dtype=np.uint8))
    recs = list(load_dataset(DatasetManifest(tmp_path, entries)))
    assert [r.valid for r in recs] == [False, False]
    assert "outside" in recs[0].notes[0] and "shapes differ" in recs[1].notes[0]


def test_class_map_is_applied(tmp_path):
    mask = np.zeros((240, 320), dtype=np.uint8)
    mask[100:140, 100:140] = 255
    io.write_mask(tmp_path / "m.png", mask)
    m = DatasetManifest(tmp_path, [{"mask": "m.png"}], class_map={255: 3})
    (rec,) = load_dataset(m)
    assert rec.valid and set(np.unique(rec.mask)) == {0, 3}


def test_manifest_validation(tmp_path):
    with pytest.raises(ValueError):
        DatasetManifest(tmp_path, [{"image": "a.png"}])  # no ground truth
    with pytest.raises(ValueError):
        DatasetManifest(tmp_path, [], preset="unknown")
    with pytest.raises(ValueError):
        DatasetManifest(tmp_path, [], scale=0)
    with pytest.raises(ValueError):
        DatasetManifest.from_dict({"root": "."})
    d = DatasetManifest(tmp_path, [{"mask": "m.png"}], preset="lpw", scale=0.5).to_dict()
    assert DatasetManifest.from_dict(d).to_dict() == d


def _recs(points, subset=None):
    return [Record(f"r{i}", pupil_center=p, subset=subset) for i, p in enumerate(points)]


def test_split_single_bin_is_80_20():
    train, val = stratified_split(_recs([(10.0, 10.0)] * 100), seed=1)
    assert (len(train), len(val)) == (80, 20)
    assert {r.key for r in train}.isdisjoint({r.key for r in val})


def test_split_drops_small_bins():
    recs = _recs([(10.0, 10.0)] * 10 + [(300.0, 200.0)] * 4)
    train, val = stratified_split(recs, seed=0)
    kept = {r.key for r in train + val}
    assert len(kept) == 10
    assert all(r.pupil_center == (10.0, 10.0) for r in train + val)


def test_split_subset_id_separates_bins():
    recs = _recs([(10.0, 10.0)] * 6, "a") + _recs([(10.0, 10.0)] * 4, "b")
    train, val = stratified_split(recs)
    assert all(r.subset == "a" for r in train + val)


def test_split_is_deterministic():
    rng = np.random.default_rng(0)
    recs = _recs([tuple(p) for p in rng.uniform(0, 320, (300, 2)) * [1, 0.75]])
    a = stratified_split(recs, seed=4)
    b = stratified_split(recs, seed=4)
    assert [r.key for r in a[0]] == [r.key for r in b[0]]
    assert [r.key for r in a[1]] == [r.key for r in b[1]]


def test_split_errors():
    with pytest.raises(SplitError):
        stratified_split(_recs([(10.0, 10.0)] * 4))
    with pytest.raises(SplitError):
        stratified_split([Record("x")])


def test_stratify_key_clamps_to_grid():
    assert stratify_key(Record("x", pupil_center=(-3.0, 500.0))) == (0, 5, "")
    assert stratify_key(Record("x", pupil_center=(319.9, 0.0), subset=2)) == (7, 0, "2")


@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 2)), min_size=5, max_size=200),
       st.integers(0, 1000))
def test_split_preserves_bin_proportions(cells, seed):
    recs = _recs([(40.0 * cx + 1, 40.0 * cy + 1) for cx, cy in cells])
    sizes = Counter(stratify_key(r) for r in recs)
    if max(sizes.values()) < 5:
        with pytest.raises(SplitError):
            stratified_split(recs, seed=seed)
        return
    train, val = stratified_split(recs, seed=seed)
    tr = Counter(stratify_key(r) for r in train)
    va = Counter(stratify_key(r) for r in val)
    for key, n in sizes.items():
        if n < 5:
            assert tr[key] == va[key] == 0
        else:
            assert tr[key] + va[key] == n
            assert abs(tr[key] - 0.8 * n) <= 1
