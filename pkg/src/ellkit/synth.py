"""Synthetic eye generator with analytic ground truth.

An eye is a full iris ellipse, a full pupil ellipse inside it, and two eyelid
occluders. Each eyelid is a large disc whose arc forms the lid margin; the
visible eye opening is the intersection of the two discs. ``aperture`` is the
fraction of the iris height left visible along the vertical through the iris
center.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .edges import BACKGROUND, IRIS, PUPIL, SCLERA
from .geometry import Ellipse, bounding_box, ellipse_points, rasterize
from .labels import GroundTruthRecord, ellipses_to_ellseg

WIDTH, HEIGHT = 320, 240

# lid disc radius as a multiple of the iris half-width
LID_RADIUS_FACTOR = 1.4
# slack (px) between the fully open lid and the iris boundary
LID_CLEARANCE = 0.5


@dataclass(frozen=True)
class SynthParams:
    """Sampling ranges for :func:`synth_eye`. Ranges are ``(low, high)`` tuples."""

    width: int = WIDTH
    height: int = HEIGHT
    iris_center_jitter: tuple[float, float] = (30.0, 20.0)
    iris_a: tuple[float, float] = (48.0, 64.0)
    pupil_a: tuple[float, float] = (16.0, 28.0)
    axis_ratio: tuple[float, float] = (0.65, 1.0)  # b / a, shared gaze foreshortening
    pupil_offset: float = 0.35  # max pupil displacement as a fraction of free room
    aperture: float = 1.0
    intensities: tuple[float, float, float, float] = (150.0, 205.0, 100.0, 25.0)
    noise_sigma: float = 4.0

    def __post_init__(self):
        if not 0.0 <= self.aperture <= 1.0:
            raise ValueError(f"aperture must lie in [0, 1], got {self.aperture}")
        if self.pupil_a[1] >= self.iris_a[0] * self.axis_ratio[0]:
            raise ValueError("pupil range must fit inside the iris range")


def sample_eye_geometry(params: SynthParams, rng) -> tuple[Ellipse, Ellipse]:
    """Draw ``(pupil, iris)`` ellipses with the pupil strictly inside the iris."""
    cx = params.width / 2 - 0.5 + rng.uniform(-1, 1) * params.iris_center_jitter[0]
    cy = params.height / 2 - 0.5 + rng.uniform(-1, 1) * params.iris_center_jitter[1]
    ratio = rng.uniform(*params.axis_ratio)
    theta = rng.uniform(0, math.pi)
    a_i = rng.uniform(*params.iris_a)
    iris = Ellipse(cx, cy, a_i, a_i * ratio, theta)

    a_p = rng.uniform(*params.pupil_a)
    # the pupil is a smaller, slightly less foreshortened disc
    ratio_p = min(1.0, ratio * rng.uniform(1.0, 1.08))
    pupil_theta = theta + rng.normal(0, 0.05)
    room = iris.b - a_p - 2.0
    r = params.pupil_offset * room * math.sqrt(rng.uniform())
    phi = rng.uniform(0, 2 * math.pi)
    pupil = Ellipse(cx + r * math.cos(phi), cy + r * math.sin(phi),
                    a_p, a_p * ratio_p, pupil_theta)
    return pupil, iris


def _open_lid_offsets(iris: Ellipse, radius: float) -> tuple[float, float]:
    """Apex offsets above/below the iris center at which each lid disc clears the iris."""
    pts = ellipse_points(iris, np.linspace(0, 2 * np.pi, 720, endpoint=False))
    dx2 = (pts[:, 0] - iris.cx) ** 2
    dy = pts[:, 1] - iris.cy
    box = bounding_box(iris)
    base = (box.ymax - box.ymin) / 2
    offsets = []
    for sign in (-1.0, 1.0):
        off = base
        # disc center sits `radius` beyond the apex, towards the iris
        while np.any(dx2 + (dy - sign * (off - radius)) ** 2 > (radius - LID_CLEARANCE) ** 2):
            off += 0.25
        offsets.append(off)
    return offsets[0], offsets[1]


def eye_opening(iris: Ellipse, aperture: float, width: int, height: int) -> np.ndarray:
    """Boolean map of pixels between the two eyelids.

    At ``aperture=1`` each lid is placed at the smallest distance that leaves
    the whole iris ellipse visible; smaller apertures move both lids towards
    the iris center proportionally.
    """
    box = bounding_box(iris)
    radius = LID_RADIUS_FACTOR * max(box.xmax - box.xmin, box.ymax - box.ymin) / 2
    up, down = _open_lid_offsets(iris, radius)
    top = iris.cy - aperture * up
    bottom = iris.cy + aperture * down
    ys, xs = np.mgrid[0:height, 0:width].astype(float)
    dx2 = (xs - iris.cx) ** 2
    upper = dx2 + (ys - (top + radius)) ** 2 <= radius * radius
    lower = dx2 + (ys - (bottom - radius)) ** 2 <= radius * radius
    return upper & lower


def render_partseg(pupil: Ellipse, iris: Ellipse, aperture: float,
                   width: int, height: int) -> np.ndarray:
    full_i = rasterize(iris, width, height)
    full_p = rasterize(pupil, width, height)
    opening = eye_opening(iris, aperture, width, height)
    part = np.full((height, width), BACKGROUND, dtype=np.uint8)
    part[opening] = SCLERA
    part[opening & full_i] = IRIS
    part[opening & full_p] = PUPIL
    return part


def render_image(part: np.ndarray, params: SynthParams, rng) -> np.ndarray:
    levels = np.asarray(params.intensities, dtype=float)
    img = levels[part]
    if params.noise_sigma > 0:
        img = img + rng.normal(0.0, params.noise_sigma, size=img.shape)
    return np.clip(np.round(img), 0, 255).astype(np.uint8)


def synth_eye(params: SynthParams, rng):
    """Render one synthetic eye.

    Returns
    -------
    image : numpy.ndarray
        ``uint8`` grayscale image.
    part : numpy.ndarray
        4-class visible-parts mask.
    ell : numpy.ndarray
        3-class full-ellipse mask.
    gt : GroundTruthRecord
        The analytic pupil and iris ellipses.
    """
    pupil, iris = sample_eye_geometry(params, rng)
    part = render_partseg(pupil, iris, params.aperture, params.width, params.height)
    ell = ellipses_to_ellseg(pupil, iris, params.width, params.height)
    image = render_image(part, params, rng)
    gt = GroundTruthRecord(pupil, iris, pupil.center, iris.center)
    return image, part, ell, gt
