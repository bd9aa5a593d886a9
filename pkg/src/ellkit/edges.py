"""Canny edges on class masks and sub-pixel class-boundary points.

Boundary points for a class are built from two edge maps: one computed on the
class indicator and one on its complement. Non-maximum suppression breaks
near-ties towards the brighter side of the edge, so the indicator's edge sits
on the last pixel inside the class and the complement's edge on the first
pixel outside. Each inside edge pixel is paired with its nearest outside edge
pixel, which brackets the raster boundary between two pixel centers. The
emitted point is where the Gaussian-smoothed indicator crosses 1/2 on the
segment joining the pair; for a straight boundary that is the pair midpoint,
on curved boundaries it follows the local shape more closely.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

PUPIL_IRIS = "pupil_iris"
LIMBUS = "limbus"
OTHER = "other"

# PartSeg class indices
BACKGROUND, SCLERA, IRIS, PUPIL = 0, 1, 2, 3

_FORBIDDEN = {
    PUPIL_IRIS: (SCLERA, BACKGROUND),
    LIMBUS: (PUPIL, BACKGROUND),
}

# 8 signed directions (dx, dy), indexed by round(angle / 45deg) mod 8
_DIRS = np.array([(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)])

DEFAULT_LOW = 50.0
DEFAULT_HIGH = 150.0
DEFAULT_SIGMA = 1.0
# NMS treats magnitudes within this relative margin as tied
DEFAULT_TIE_RTOL = 0.25
_SUPPORT = 8  # pixels of context needed by smoothing + Sobel + NMS


@dataclass(frozen=True)
class EdgePoint:
    x: float
    y: float
    boundary_kind: str = OTHER


def _gradients(gray: np.ndarray, sigma: float):
    img = gray.astype(float)
    if sigma > 0:
        img = ndimage.gaussian_filter(img, sigma, mode="nearest")
    gx = ndimage.sobel(img, axis=1, mode="nearest")
    gy = ndimage.sobel(img, axis=0, mode="nearest")
    return gx, gy


def canny(gray, low: float = DEFAULT_LOW, high: float = DEFAULT_HIGH,
          sigma: float = DEFAULT_SIGMA, tie_rtol: float = 0.0) -> np.ndarray:
    """Canny edge map: Gaussian smoothing, Sobel gradients, NMS, hysteresis.

    Parameters
    ----------
    gray : array_like
        2D intensity image.
    low, high : float
        Hysteresis thresholds on the Sobel gradient magnitude (0-255 scale
        for 8-bit images).
    sigma : float
        Gaussian pre-smoothing.
    tie_rtol : float
        Relative magnitude margin within which the neighbor on the bright side
        of the edge is considered tied with the center pixel. With the default
        0 only exact ties are broken, always in favor of the bright pixel.

    Returns
    -------
    numpy.ndarray
        Boolean edge map of the same shape as ``gray``.
    """
    if not 0 <= low <= high:
        raise ValueError(f"need 0 <= low <= high, got {low}, {high}")
    gray = np.asarray(gray)
    if gray.ndim != 2 or gray.size == 0:
        return np.zeros(gray.shape if gray.ndim == 2 else (0, 0), dtype=bool)
    gx, gy = _gradients(gray, sigma)
    # rounding removes float noise so symmetric profiles tie exactly
    mag = np.round(np.hypot(gx, gy), 6)
    h, w = mag.shape
    d = np.round(np.arctan2(gy, gx) / (np.pi / 4)).astype(int) % 8
    pad = np.pad(mag, 1, mode="constant")
    rows, cols = np.mgrid[0:h, 0:w]
    dx, dy = _DIRS[d, 0], _DIRS[d, 1]
    fwd = pad[rows + 1 + dy, cols + 1 + dx]  # towards brighter intensity
    bwd = pad[rows + 1 - dy, cols + 1 - dx]
    scale = 1.0 + tie_rtol
    keep = (mag > 0) & (mag > scale * fwd) & (scale * mag >= bwd)
    nms = np.where(keep, mag, 0.0)

    strong = nms >= high
    weak = nms >= low
    if not strong.any():
        return np.zeros_like(weak)
    labels, nlab = ndimage.label(weak, structure=np.ones((3, 3), dtype=int))
    good = np.zeros(nlab + 1, dtype=bool)
    good[np.unique(labels[strong])] = True
    good[0] = False
    return good[labels]


def _class_indicator(mask: np.ndarray, class_id) -> np.ndarray:
    ids = np.atleast_1d(class_id)
    return np.isin(mask, ids)


def boundary_point_array(mask, class_id, low: float = DEFAULT_LOW,
                         high: float = DEFAULT_HIGH, sigma: float = DEFAULT_SIGMA,
                         tie_rtol: float = DEFAULT_TIE_RTOL, refine: bool = True) -> np.ndarray:
    """Sub-pixel boundary points of ``class_id`` as an ``(n, 2)`` (x, y) array.

    ``class_id`` may be a single index or a collection of indices treated as
    one region.
    """
    mask = np.asarray(mask)
    ind = _class_indicator(mask, class_id)
    if not ind.any() or ind.all():
        return np.empty((0, 2))
    # crop to the region plus enough context that edges are unchanged
    ys, xs = np.nonzero(ind)
    h, w = ind.shape
    y0, y1 = max(0, ys.min() - _SUPPORT), min(h, ys.max() + _SUPPORT + 1)
    x0, x1 = max(0, xs.min() - _SUPPORT), min(w, xs.max() + _SUPPORT + 1)
    sub = ind[y0:y1, x0:x1].astype(float) * 255.0
    e_in = canny(sub, low, high, sigma, tie_rtol)
    e_out = canny(255.0 - sub, low, high, sigma, tie_rtol)
    inside = ind[y0:y1, x0:x1]
    iy, ix = np.nonzero(e_in)
    if iy.size == 0:
        return np.empty((0, 2))

    # nearest complement-edge pixel across the transition, Chebyshev radius 1
    out_ok = np.pad(e_out & ~inside, 1, mode="constant")
    best_d = np.full(iy.shape, np.inf)
    best_x = ix.astype(float)
    best_y = iy.astype(float)
    for ddy in (-1, 0, 1):
        for ddx in (-1, 0, 1):
            if ddx == 0 and ddy == 0:
                continue
            hit = out_ok[iy + 1 + ddy, ix + 1 + ddx]
            dist = np.hypot(ddx, ddy)
            better = hit & (dist < best_d)
            best_d[better] = dist
            best_x[better] = ix[better] + 0.5 * ddx
            best_y[better] = iy[better] + 0.5 * ddy
    if not refine:
        return np.column_stack([best_x + x0, best_y + y0])
    # slide each paired point to where the smoothed indicator crosses 1/2
    smooth = ndimage.gaussian_filter(inside.astype(float), sigma, mode="nearest")
    paired = np.isfinite(best_d)
    qx = np.rint(2 * best_x - ix).astype(int)
    qy = np.rint(2 * best_y - iy).astype(int)
    v_in = smooth[iy, ix]
    v_out = np.where(paired, smooth[np.where(paired, qy, iy), np.where(paired, qx, ix)], 0.0)
    denom = v_in - v_out
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.clip((v_in - 0.5) / denom, 0.0, 1.0)
    t = np.where(paired & (denom > 1e-9), t, np.where(paired, 0.5, 0.0))
    fx = ix + t * (qx - ix)
    fy = iy + t * (qy - iy)
    return np.column_stack([fx + x0, fy + y0])


def class_boundary_points(mask, class_id, kind: str = OTHER, **kwargs) -> list[EdgePoint]:
    """Sub-pixel boundary points of a class, as :class:`EdgePoint` objects.

    Canny runs on the binary indicator of ``class_id`` and on its complement;
    each indicator edge pixel is paired with the nearest complement edge pixel
    on the other side of the transition (Chebyshev distance 1) and the point
    is placed where the smoothed indicator crosses 1/2 between them
    (``refine=False`` gives the plain midpoint). Unpaired edge pixels are
    reported at their own integer location. An absent class gives an empty
    list.
    """
    pts = boundary_point_array(mask, class_id, **kwargs)
    return [EdgePoint(float(x), float(y), kind) for x, y in pts]


def neighbor_condition_mask(points, mask, kind: str) -> np.ndarray:
    """Boolean keep-mask for :func:`filter_neighbor_condition` on an (n, 2) array."""
    if kind not in _FORBIDDEN:
        raise ValueError(f"unknown boundary kind {kind!r}")
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    mask = np.asarray(mask)
    h, w = mask.shape
    bad = np.isin(mask, _FORBIDDEN[kind])
    # a forbidden pixel anywhere in the 3x3 window rejects the point
    bad = ndimage.binary_dilation(bad, structure=np.ones((3, 3), dtype=bool))
    cx = np.clip(np.floor(pts[:, 0] + 0.5).astype(int), 0, w - 1)
    cy = np.clip(np.floor(pts[:, 1] + 0.5).astype(int), 0, h - 1)
    return ~bad[cy, cx]


def filter_neighbor_condition(points, mask, kind: str):
    """Drop boundary points that touch a forbidden class in their 8-neighborhood.

    ``pupil_iris`` points may not neighbor sclera or background; ``limbus``
    points may not neighbor pupil or background. Accepts either a list of
    :class:`EdgePoint` or an ``(n, 2)`` array and returns the same kind.
    """
    if isinstance(points, np.ndarray):
        return points[neighbor_condition_mask(points, mask, kind)]
    if not points:
        return []
    arr = np.array([(p.x, p.y) for p in points])
    keep = neighbor_condition_mask(arr, mask, kind)
    return [EdgePoint(p.x, p.y, kind) for p, k in zip(points, keep) if k]
