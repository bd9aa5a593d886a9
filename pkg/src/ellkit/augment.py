"""Training-time augmentation with label and center equivariance.

Eight variants are drawn with equal probability. Geometric variants (flip,
rotation) move the image, the class mask and the centers together;
photometric variants and the line mask touch the image only.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .edges import BACKGROUND

KINDS = ("flip", "rotate", "blur", "gamma", "exposure", "noise", "line_mask", "none")
GAMMAS = (0.6, 0.8, 1.2, 1.4)
MAX_ROTATION_DEG = 30.0
BLUR_SIGMA = (2.0, 7.0)
MAX_EXPOSURE = 25.0
NOISE_SIGMA = (2.0, 16.0)
LINE_THICKNESS = 4.0


@dataclass(frozen=True)
class AugmentationChoice:
    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown augmentation {self.kind!r}")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": dict(self.params)}


def sample_choice(rng) -> AugmentationChoice:
    kind = KINDS[int(rng.integers(len(KINDS)))]
    if kind == "rotate":
        params = {"angle_deg": float(rng.uniform(-MAX_ROTATION_DEG, MAX_ROTATION_DEG))}
    elif kind == "blur":
        params = {"sigma": float(rng.uniform(*BLUR_SIGMA))}
    elif kind == "gamma":
        params = {"gamma": GAMMAS[int(rng.integers(len(GAMMAS)))]}
    elif kind == "exposure":
        params = {"offset": float(rng.uniform(-MAX_EXPOSURE, MAX_EXPOSURE))}
    elif kind == "noise":
        params = {"sigma": float(rng.uniform(*NOISE_SIGMA))}
    elif kind == "line_mask":
        # offset is a fraction of the half-diagonal, measured from the image center
        params = {"angle_deg": float(rng.uniform(0.0, 180.0)),
                  "offset": float(rng.uniform(-0.5, 0.5))}
    else:
        params = {}
    return AugmentationChoice(kind, params)


def _image_center(shape) -> tuple[float, float]:
    h, w = shape
    return (w - 1) / 2.0, (h - 1) / 2.0


def rotate_points(points, angle_deg: float, shape) -> np.ndarray:
    """Rotate (x, y) points about the image center (positive = clockwise on screen)."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    cx, cy = _image_center(shape)
    c, s = math.cos(math.radians(angle_deg)), math.sin(math.radians(angle_deg))
    dx, dy = pts[:, 0] - cx, pts[:, 1] - cy
    return np.column_stack([cx + c * dx - s * dy, cy + s * dx + c * dy])


def _rotate_grid(grid, angle_deg: float, order: int) -> np.ndarray:
    cx, cy = _image_center(grid.shape)
    c, s = math.cos(math.radians(angle_deg)), math.sin(math.radians(angle_deg))
    # output (row, col) -> input (row, col) is the inverse rotation
    m = np.array([[c, -s], [s, c]])
    ctr = np.array([cy, cx])
    return ndimage.affine_transform(grid, m, offset=ctr - m @ ctr, order=order,
                                    mode="constant", cval=0)


def _rotate_labels(mask, angle_deg: float) -> np.ndarray:
    """Rotate a class-index grid by a bilinear vote per class.

    Each class indicator is resampled bilinearly and every pixel takes the
    class with the largest share; weight from outside the canvas votes for
    the background class. The result stays categorical, but its boundaries
    follow the rotated sub-pixel boundary rather than the nearest source
    pixel, which keeps ellipse fits on rotated masks consistent.
    """
    classes = np.unique(mask)
    votes = np.stack([_rotate_grid((mask == c).astype(float), angle_deg, order=1)
                      for c in classes])
    fill = np.clip(1.0 - votes.sum(axis=0), 0.0, None)
    if BACKGROUND in classes:
        votes[np.searchsorted(classes, BACKGROUND)] += fill
    else:
        classes = np.append(classes, BACKGROUND)
        votes = np.concatenate([votes, fill[None]])
    return classes[np.argmax(votes, axis=0)].astype(mask.dtype)


def _line_mask(shape, angle_deg: float, offset: float) -> np.ndarray:
    h, w = shape
    cx, cy = _image_center(shape)
    ys, xs = np.mgrid[0:h, 0:w].astype(float)
    a = math.radians(angle_deg)
    nx, ny = -math.sin(a), math.cos(a)
    rho = offset * 0.5 * math.hypot(w, h)
    dist = (xs - cx) * nx + (ys - cy) * ny - rho
    return np.abs(dist) < LINE_THICKNESS / 2


def _to_dtype(img, dtype):
    img = np.clip(img, 0.0, 255.0)
    if np.issubdtype(dtype, np.integer):
        return np.round(img).astype(dtype)
    return img.astype(dtype)


def apply(image, mask, centers, choice: AugmentationChoice, rng):
    """Apply one augmentation to an image, its class mask and its centers.

    Parameters
    ----------
    image : numpy.ndarray
        ``(H, W)`` grayscale image in the 0-255 range.
    mask : numpy.ndarray
        ``(H, W)`` class-index grid.
    centers : array_like
        ``(n, 2)`` (x, y) points, e.g. pupil and iris centers.
    choice : AugmentationChoice
    rng : numpy.random.Generator
        Source of per-pixel noise.

    Returns
    -------
    tuple
        ``(image, mask, centers)``; inputs are never modified.
    """
    image = np.asarray(image)
    mask = np.asarray(mask)
    pts = np.asarray(centers, dtype=float).reshape(-1, 2)
    if image.shape != mask.shape:
        raise ValueError(f"image {image.shape} and mask {mask.shape} differ")
    kind, prm = choice.kind, choice.params
    h, w = image.shape

    if kind == "none":
        return image.copy(), mask.copy(), pts.copy()
    if kind == "flip":
        out_pts = pts.copy()
        out_pts[:, 0] = (w - 1) - out_pts[:, 0]
        return image[:, ::-1].copy(), mask[:, ::-1].copy(), out_pts
    if kind == "rotate":
        ang = prm["angle_deg"]
        img = _rotate_grid(image.astype(float), ang, order=1)
        msk = _rotate_labels(mask, ang)
        return _to_dtype(img, image.dtype), msk, rotate_points(pts, ang, image.shape)

    img = image.astype(float)
    if kind == "blur":
        img = ndimage.gaussian_filter(img, prm["sigma"], mode="nearest")
    elif kind == "gamma":
        img = (np.clip(img, 0, 255) / 255.0) ** prm["gamma"] * 255.0
    elif kind == "exposure":
        img = img + prm["offset"]
    elif kind == "noise":
        img = img + rng.normal(0.0, prm["sigma"], size=img.shape)
    elif kind == "line_mask":
        img[_line_mask(image.shape, prm["angle_deg"], prm["offset"])] = 0.0
    return _to_dtype(img, image.dtype), mask.copy(), pts.copy()
