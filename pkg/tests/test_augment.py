import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ellkit.augment import (GAMMAS, KINDS, AugmentationChoice, apply, rotate_points,
                            sample_choice)
from ellkit.edges import BACKGROUND, IRIS, PUPIL
from ellkit.geometry import Ellipse
from ellkit.labels import ellipses_to_ellseg, ellseg_to_partseg, partseg_to_ellipses

W, H = 160, 120


def _scene(seed=0):
    rng = np.random.default_rng(seed)
    pupil, iris = Ellipse(82.3, 57.6, 14, 10, 0.6), Ellipse(80.1, 58.2, 32, 26, 0.6)
    mask = ellseg_to_partseg(ellipses_to_ellseg(pupil, iris, W, H))
    image = np.clip(np.array([120, 200, 90, 30], float)[mask]
                    + rng.normal(0, 5, mask.shape), 0, 255).astype(np.uint8)
    return image, mask, np.array([pupil.center, iris.center])


def _choice(kind, **params):
    return AugmentationChoice(kind, params)


def _blob_centroid(img):
    w = img.astype(float)
    ys, xs = np.mgrid[0:img.shape[0], 0:img.shape[1]]
    return (w * xs).sum() / w.sum(), (w * ys).sum() / w.sum()


def test_sampling_frequencies():
    rng = np.random.default_rng(0)
    counts = Counter(sample_choice(rng).kind for _ in range(80_000))
    assert set(counts) == set(KINDS)
    for k in KINDS:
        assert abs(counts[k] / 80_000 - 0.125) <= 0.005


def test_sampling_is_deterministic_and_in_range():
    a = [sample_choice(np.random.default_rng(5)) for _ in range(3)]
    s1 = [sample_choice(r) for r in [np.random.default_rng(9)] for _ in range(500)]
    s2 = [sample_choice(r) for r in [np.random.default_rng(9)] for _ in range(500)]
    assert s1 == s2 and a[0] == a[1]
    for c in s1:
        p = c.params
        if c.kind == "gamma":
            assert p["gamma"] in GAMMAS
        elif c.kind == "rotate":
            assert -30 <= p["angle_deg"] <= 30
        elif c.kind == "blur":
            assert 2 <= p["sigma"] <= 7
        elif c.kind == "exposure":
            assert -25 <= p["offset"] <= 25
        elif c.kind == "noise":
            assert 2 <= p["sigma"] <= 16


def test_unknown_kind_rejected():
    with pytest.raises(ValueError):
        AugmentationChoice("shear")


def test_none_is_bitwise_identical():
    img, mask, ctr = _scene()
    out = apply(img, mask, ctr, _choice("none"), np.random.default_rng(0))
    assert np.array_equal(out[0], img) and out[0].dtype == img.dtype
    assert np.array_equal(out[1], mask) and np.array_equal(out[2], ctr)


def test_flip_moves_centers_and_is_an_involution():
    img, mask, ctr = _scene()
    rng = np.random.default_rng(0)
    fi, fm, fc = apply(img, mask, ctr, _choice("flip"), rng)
    assert np.array_equal(fc[:, 0], (W - 1) - ctr[:, 0])
    assert np.array_equal(fc[:, 1], ctr[:, 1])
    assert np.array_equal(fi, img[:, ::-1])
    back = apply(fi, fm, fc, _choice("flip"), rng)
    assert all(np.array_equal(x, y) for x, y in zip(back, (img, mask, ctr)))


@pytest.mark.parametrize("angle", [-30.0, -12.5, 7.0, 30.0])
def test_rotation_moves_image_content_with_centers(angle):
    ys, xs = np.mgrid[0:H, 0:W].astype(float)
    p = np.array([[101.3, 44.8]])
    img = 250 * np.exp(-((xs - p[0, 0]) ** 2 + (ys - p[0, 1]) ** 2) / (2 * 2.0 ** 2))
    mask = np.zeros((H, W), dtype=np.uint8)
    out, _, pts = apply(img, mask, p, _choice("rotate", angle_deg=angle), np.random.default_rng(0))
    assert math.dist(_blob_centroid(out), pts[0]) <= 0.1
    # the moved point is the rotated point about the image center
    cx, cy = (W - 1) / 2, (H - 1) / 2
    r = math.radians(angle)
    dx, dy = p[0, 0] - cx, p[0, 1] - cy
    ref = (cx + dx * math.cos(r) - dy * math.sin(r), cy + dx * math.sin(r) + dy * math.cos(r))
    assert pts[0] == pytest.approx(ref, abs=1e-9)


def test_rotation_fills_background_and_keeps_labels_categorical():
    img, mask, ctr = _scene()
    oi, om, _ = apply(img, mask, ctr, _choice("rotate", angle_deg=25), np.random.default_rng(0))
    assert om[0, 0] == BACKGROUND and oi[0, 0] == 0
    # only the fill class can appear; the per-class vote invents nothing
    assert set(np.unique(om)) <= set(np.unique(mask)) | {BACKGROUND}
    assert om.dtype == mask.dtype and oi.dtype == img.dtype


def test_zero_rotation_keeps_the_mask():
    _, mask, ctr = _scene()
    _, om, oc = apply(mask, mask, ctr, _choice("rotate", angle_deg=0.0), np.random.default_rng(0))
    assert np.array_equal(om, mask) and np.allclose(oc, ctr)


def test_rotated_disc_keeps_its_area():
    ys, xs = np.mgrid[0:H, 0:W]
    mask = (((xs - 79.5) ** 2 + (ys - 59.5) ** 2) <= 30 ** 2).astype(np.uint8) * PUPIL
    for angle in (-23.0, 11.0, 30.0):
        _, om, _ = apply(mask, mask, [], _choice("rotate", angle_deg=angle),
                         np.random.default_rng(0))
        assert abs(int((om == PUPIL).sum()) - int((mask == PUPIL).sum())) <= 4


@pytest.mark.parametrize("choice", [_choice("blur", sigma=3.0), _choice("gamma", gamma=0.6),
                                    _choice("exposure", offset=25.0),
                                    _choice("exposure", offset=-25.0),
                                    _choice("noise", sigma=16.0),
                                    _choice("line_mask", angle_deg=30.0, offset=0.1)])
def test_photometric_variants_touch_image_only(choice):
    img, mask, ctr = _scene()
    oi, om, oc = apply(img, mask, ctr, choice, np.random.default_rng(0))
    assert np.array_equal(om, mask) and np.array_equal(oc, ctr)
    assert oi.min() >= 0 and oi.max() <= 255
    assert not np.array_equal(oi, img)


def test_gamma_definition():
    img = np.array([[0, 64, 128, 255]], dtype=float)
    out, _, _ = apply(img, np.zeros((1, 4), int), [], _choice("gamma", gamma=1.4),
                      np.random.default_rng(0))
    assert out == pytest.approx((img / 255) ** 1.4 * 255)


def test_exposure_is_clamped():
    img = np.array([[0, 10, 240, 255]], dtype=np.uint8)
    up, _, _ = apply(img, np.zeros((1, 4), int), [], _choice("exposure", offset=20.0),
                     np.random.default_rng(0))
    assert up.tolist() == [[20, 30, 255, 255]]


def test_line_mask_is_four_pixels_thick():
    img = np.full((H, W), 100, dtype=np.uint8)
    out, _, _ = apply(img, np.zeros((H, W), int), [], _choice("line_mask", angle_deg=0.0, offset=0.0),
                      np.random.default_rng(0))
    rows = np.nonzero((out == 0).all(axis=1))[0]
    assert len(rows) == 4
    assert np.all(out[np.setdiff1d(np.arange(H), rows)] == 100)
    # a diagonal line zeroes about 4 px across its length
    out, _, _ = apply(img, np.zeros((H, W), int), [], _choice("line_mask", angle_deg=30.0, offset=0.0),
                      np.random.default_rng(0))
    per_col = (out == 0).sum(axis=0)
    assert np.all(np.abs(per_col[20:-20] - 4 / math.cos(math.radians(30))) <= 1.0)


def test_noise_follows_rng():
    img, mask, ctr = _scene()
    c = _choice("noise", sigma=5.0)
    a = apply(img, mask, ctr, c, np.random.default_rng(1))[0]
    b = apply(img, mask, ctr, c, np.random.default_rng(1))[0]
    assert np.array_equal(a, b)


def _choice_of(kind, seed=0):
    rng = np.random.default_rng(seed)
    while True:
        c = sample_choice(rng)
        if c.kind == kind:
            return c


def test_inputs_are_not_modified():
    img, mask, ctr = _scene()
    copies = img.copy(), mask.copy(), ctr.copy()
    for kind in KINDS:
        apply(img, mask, ctr, _choice_of(kind), np.random.default_rng(0))
    assert all(np.array_equal(x, y) for x, y in zip(copies, (img, mask, ctr)))


@given(st.integers(0, 2**32 - 1))
def test_mask_class_set_never_grows(seed):
    img, mask, ctr = _scene()
    rng = np.random.default_rng(seed)
    c = sample_choice(rng)
    sub = mask[20:100, 30:130]  # crop so some classes can leave the frame
    _, om, _ = apply(img[20:100, 30:130], sub, ctr, c, rng)
    allowed = set(np.unique(sub))
    if c.kind == "rotate":
        allowed.add(BACKGROUND)  # out-of-canvas fill
    assert set(np.unique(om)) <= allowed


@given(st.integers(0, 2**32 - 1))
def test_mask_class_set_never_grows_with_background_present(seed):
    img, mask, ctr = _scene()
    mask = mask.copy()
    mask[:10] = BACKGROUND
    rng = np.random.default_rng(seed)
    _, om, _ = apply(img, mask, ctr, sample_choice(rng), rng)
    assert set(np.unique(om)) <= set(np.unique(mask))


@st.composite
def eye_pairs(draw):
    # a - b >= 6 px so the raster pins the orientation
    a_p = draw(st.floats(14, 22))
    b_p = draw(st.floats(8, a_p - 6))
    th = draw(st.floats(0, math.pi))
    cx, cy = draw(st.floats(70, 90)), draw(st.floats(52, 68))
    pupil = Ellipse(cx, cy, a_p, b_p, th)
    iris = Ellipse(cx, cy, a_p + 14, b_p + 12, th)
    return pupil, iris


@given(eye_pairs(), st.floats(-30, 30))
def test_rotate_mask_then_fit_matches_rotated_fit(pair, angle):
    pupil, iris = pair
    mask = ellseg_to_partseg(ellipses_to_ellseg(pupil, iris, W, H))
    img = mask.astype(np.uint8)
    _, rm, _ = apply(img, mask, np.zeros((0, 2)), _choice("rotate", angle_deg=angle),
                     np.random.default_rng(0))
    fit0 = partseg_to_ellipses(mask, rng=np.random.default_rng(0))
    fit1 = partseg_to_ellipses(rm, rng=np.random.default_rng(0))
    for s in ("pupil", "iris"):
        e0, e1 = getattr(fit0, s), getattr(fit1, s)
        assert e0 is not None and e1 is not None
        (rx, ry), = rotate_points([e0.center], angle, mask.shape)
        assert math.hypot(e1.cx - rx, e1.cy - ry) <= 0.5
        if e0.axis_ratio > 1.1:
            d = math.degrees(e1.theta - (e0.theta + math.radians(angle))) % 180
            assert min(d, 180 - d) <= 2.0
    assert np.isin(rm, (IRIS, PUPIL)).any()
