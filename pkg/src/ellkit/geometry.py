"""Ellipse representation, rasterization, bounding boxes and boundary sampling.

Coordinates follow the image convention used throughout the package: x grows
to the right, y grows downwards and pixel centers sit on integer coordinates,
so pixel ``(row=j, col=i)`` has its center at ``(x=i, y=j)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Relative axis difference below which an ellipse is treated as a circle.
CIRCLE_RTOL = 1e-9


@dataclass(frozen=True)
class Ellipse:
    """Geometric ellipse: center, semi-axes and major-axis orientation.

    The constructor normalizes its input so that ``a >= b`` and
    ``0 <= theta < pi``; circles get ``theta = 0``.
    """

    cx: float
    cy: float
    a: float
    b: float
    theta: float = 0.0

    def __post_init__(self):
        vals = (self.cx, self.cy, self.a, self.b, self.theta)
        if not all(math.isfinite(float(v)) for v in vals):
            raise ValueError(f"non-finite ellipse parameters: {vals}")
        a, b, theta = float(self.a), float(self.b), float(self.theta)
        if a <= 0 or b <= 0:
            raise ValueError(f"semi-axes must be positive, got a={a}, b={b}")
        if a < b:
            a, b = b, a
            theta += math.pi / 2
        theta = math.fmod(theta, math.pi)
        if theta < 0:
            theta += math.pi
        if theta >= math.pi:
            theta = 0.0
        if a - b <= CIRCLE_RTOL * a:
            theta = 0.0
        object.__setattr__(self, "cx", float(self.cx))
        object.__setattr__(self, "cy", float(self.cy))
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "theta", theta)

    @property
    def center(self) -> tuple[float, float]:
        return (self.cx, self.cy)

    @property
    def axis_ratio(self) -> float:
        return self.a / self.b

    def translated(self, dx: float, dy: float) -> "Ellipse":
        return Ellipse(self.cx + dx, self.cy + dy, self.a, self.b, self.theta)

    def to_dict(self) -> dict:
        return {"cx": self.cx, "cy": self.cy, "a": self.a, "b": self.b, "theta": self.theta}

    @classmethod
    def from_dict(cls, d: dict) -> "Ellipse":
        return cls(d["cx"], d["cy"], d["a"], d["b"], d["theta"])


@dataclass(frozen=True)
class BBox:
    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def __post_init__(self):
        if self.xmin > self.xmax or self.ymin > self.ymax:
            raise ValueError(f"inverted bounding box: {self}")

    @property
    def area(self) -> float:
        return (self.xmax - self.xmin) * (self.ymax - self.ymin)


def _normalized_coords(e: Ellipse, x, y):
    dx = np.asarray(x, dtype=float) - e.cx
    dy = np.asarray(y, dtype=float) - e.cy
    c, s = math.cos(e.theta), math.sin(e.theta)
    u = (dx * c + dy * s) / e.a
    v = (-dx * s + dy * c) / e.b
    return u, v


def contains(e: Ellipse, x, y):
    """True where ``(x, y)`` lies inside or on the ellipse. Broadcasts over arrays."""
    u, v = _normalized_coords(e, x, y)
    inside = u * u + v * v <= 1.0
    return bool(inside) if np.ndim(inside) == 0 else inside


def bounding_box(e: Ellipse) -> BBox:
    c, s = math.cos(e.theta), math.sin(e.theta)
    hw = math.sqrt((e.a * c) ** 2 + (e.b * s) ** 2)
    hh = math.sqrt((e.a * s) ** 2 + (e.b * c) ** 2)
    return BBox(e.cx - hw, e.cy - hh, e.cx + hw, e.cy + hh)


def bbox_iou(b1: BBox, b2: BBox) -> float:
    iw = min(b1.xmax, b2.xmax) - max(b1.xmin, b2.xmin)
    ih = min(b1.ymax, b2.ymax) - max(b1.ymin, b2.ymin)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = b1.area + b2.area - inter
    if union <= 0:
        return 1.0 if b1 == b2 else 0.0
    return inter / union


def rasterize(e: Ellipse, width: int, height: int) -> np.ndarray:
    """Boolean ``(height, width)`` grid marking pixel centers inside ``e``.

    Only the ellipse's bounding box is evaluated, so small ellipses on large
    canvases stay cheap.
    """
    if width <= 0 or height <= 0:
        raise ValueError("width and height must be positive")
    out = np.zeros((height, width), dtype=bool)
    box = bounding_box(e)
    x0 = max(0, math.floor(box.xmin))
    x1 = min(width - 1, math.ceil(box.xmax))
    y0 = max(0, math.floor(box.ymin))
    y1 = min(height - 1, math.ceil(box.ymax))
    if x0 > x1 or y0 > y1:
        return out
    ys, xs = np.mgrid[y0 : y1 + 1, x0 : x1 + 1]
    out[y0 : y1 + 1, x0 : x1 + 1] = contains(e, xs, ys)
    return out


def ellipse_points(e: Ellipse, t) -> np.ndarray:
    """Points at parametric angles ``t`` as an ``(n, 2)`` array of (x, y)."""
    t = np.asarray(t, dtype=float)
    c, s = math.cos(e.theta), math.sin(e.theta)
    px = e.a * np.cos(t)
    py = e.b * np.sin(t)
    return np.column_stack([e.cx + px * c - py * s, e.cy + px * s + py * c])


def sample_boundary(e: Ellipse, n: int, noise_sigma: float = 0.0, rng=None) -> np.ndarray:
    """Sample ``n`` boundary points at evenly spaced parametric angles.

    Parameters
    ----------
    e : Ellipse
    n : int
        Number of points, at least 5.
    noise_sigma : float
        Standard deviation (pixels) of the radial Gaussian perturbation applied
        to each point; 0 gives exact boundary points.
    rng : numpy.random.Generator, optional
        Required when ``noise_sigma > 0``.

    Returns
    -------
    numpy.ndarray
        ``(n, 2)`` array of (x, y) coordinates.
    """
    if n < 5:
        raise ValueError(f"need at least 5 boundary points, got {n}")
    t = np.arange(n) * (2 * np.pi / n)
    pts = ellipse_points(e, t)
    if noise_sigma > 0:
        if rng is None:
            raise ValueError("a seeded rng is required for noisy sampling")
        d = pts - np.array([e.cx, e.cy])
        r = np.hypot(d[:, 0], d[:, 1])
        dr = rng.normal(0.0, noise_sigma, size=n)
        pts = pts + d * (dr / r)[:, None]
    return pts
