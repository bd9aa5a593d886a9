"""Ground-truth ellipses from PartSeg masks, EllSeg mask synthesis, occlusion stats."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .edges import (IRIS, LIMBUS, PUPIL, PUPIL_IRIS, SCLERA, boundary_point_array,
                    neighbor_condition_mask)
from .fitting import FitError, RansacConfig, fit_ellipse_ransac
from .geometry import Ellipse, rasterize

# EllSeg class indices
ELL_BACKGROUND, ELL_IRIS, ELL_PUPIL = 0, 1, 2


@dataclass
class StructureFit:
    """Fit outcome for one structure (pupil or iris)."""

    ellipse: Ellipse | None
    n_points: int = 0
    inlier_count: int = 0
    residual_rms: float | None = None
    reason: str | None = None

    @property
    def valid(self) -> bool:
        return self.ellipse is not None

    def diagnostics(self) -> dict:
        return {"n_points": self.n_points, "inlier_count": self.inlier_count,
                "residual_rms": self.residual_rms, "reason": self.reason}


@dataclass
class GroundTruthRecord:
    pupil: Ellipse | None = None
    iris: Ellipse | None = None
    pupil_center: tuple[float, float] | None = None
    iris_center: tuple[float, float] | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def valid(self) -> dict:
        return {"pupil": self.pupil is not None, "iris": self.iris is not None}

    def to_dict(self) -> dict:
        return {
            "pupil": None if self.pupil is None else self.pupil.to_dict(),
            "iris": None if self.iris is None else self.iris.to_dict(),
            "pupil_center": None if self.pupil_center is None else list(self.pupil_center),
            "iris_center": None if self.iris_center is None else list(self.iris_center),
            "valid": self.valid,
            "diagnostics": self.diagnostics,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GroundTruthRecord":
        def ell(v):
            return None if v is None else Ellipse.from_dict(v)

        def pt(v):
            return None if v is None else (float(v[0]), float(v[1]))

        pupil, iris = ell(d.get("pupil")), ell(d.get("iris"))
        pc = pt(d.get("pupil_center"))
        ic = pt(d.get("iris_center"))
        if pc is None and pupil is not None:
            pc = pupil.center
        if ic is None and iris is not None:
            ic = iris.center
        return cls(pupil, iris, pc, ic, d.get("diagnostics", {}))


def _plausible(e: Ellipse, width: int, height: int) -> str | None:
    if not (0 <= e.cx <= width - 1 and 0 <= e.cy <= height - 1):
        return "center outside image"
    if e.a > math.hypot(width, height):
        return "ellipse larger than image"
    return None


def fit_structure(mask, class_ids, kind: str, cfg: RansacConfig, rng) -> StructureFit:
    """Boundary extraction, neighbor filtering and RANSAC fit for one structure."""
    mask = np.asarray(mask)
    pts = boundary_point_array(mask, class_ids)
    if len(pts):
        pts = pts[neighbor_condition_mask(pts, mask, kind)]
    n = len(pts)
    if n < 5:
        return StructureFit(None, n, reason="fewer than five edge points")
    try:
        res = fit_ellipse_ransac(pts, cfg.iterations, cfg.inlier_tol,
                                 cfg.resolve_min_inliers(n), rng)
    except FitError as exc:
        return StructureFit(None, n, reason=f"{type(exc).__name__}: {exc}")
    h, w = mask.shape
    reason = _plausible(res.ellipse, w, h)
    if reason:
        return StructureFit(None, n, res.inlier_count, res.residual_rms, reason)
    return StructureFit(res.ellipse, n, res.inlier_count, res.residual_rms)


def partseg_to_ellipses(mask, ransac_cfg: RansacConfig | None = None,
                        rng=None) -> GroundTruthRecord:
    """Fit pupil and iris ellipses to a 4-class PartSeg mask.

    The pupil is fit to pupil-boundary points with no sclera or background
    neighbor; the iris to boundary points of the iris+pupil region with no
    pupil or background neighbor. Failures never raise: the affected structure
    is left as ``None`` and the reason recorded in ``diagnostics``.
    """
    cfg = ransac_cfg or RansacConfig()
    if rng is None:
        raise ValueError("partseg_to_ellipses needs an explicit seeded rng")
    mask = np.asarray(mask)
    pupil = fit_structure(mask, PUPIL, PUPIL_IRIS, cfg, rng)
    iris = fit_structure(mask, (IRIS, PUPIL), LIMBUS, cfg, rng)
    return GroundTruthRecord(
        pupil.ellipse, iris.ellipse,
        pupil.ellipse.center if pupil.valid else None,
        iris.ellipse.center if iris.valid else None,
        {"pupil": pupil.diagnostics(), "iris": iris.diagnostics()},
    )


def ellseg_to_partseg(ell_mask) -> np.ndarray:
    """Relabel an EllSeg mask as PartSeg with background standing in for sclera."""
    ell_mask = np.asarray(ell_mask)
    lut = np.array([SCLERA, IRIS, PUPIL], dtype=np.uint8)
    return lut[ell_mask]


def ellseg_to_ellipses(ell_mask, ransac_cfg: RansacConfig | None = None,
                       rng=None) -> GroundTruthRecord:
    """Fit ellipses to a 3-class full-ellipse mask via the PartSeg pipeline."""
    return partseg_to_ellipses(ellseg_to_partseg(ell_mask), ransac_cfg, rng)


def ellipses_to_ellseg(pupil: Ellipse, iris: Ellipse, width: int, height: int) -> np.ndarray:
    """Paint full iris (class 1) then full pupil (class 2) ellipses; rest is 0."""
    out = np.zeros((height, width), dtype=np.uint8)
    out[rasterize(iris, width, height)] = ELL_IRIS
    out[rasterize(pupil, width, height)] = ELL_PUPIL
    return out


def occlusion_fraction(part, ell) -> tuple[float | None, float | None]:
    """Fraction of each full-ellipse region that is not visible in the PartSeg mask.

    Returns ``(pupil_frac, iris_frac)``; the iris region includes the pupil.
    A structure with an empty full region yields ``None``.
    """
    part = np.asarray(part)
    ell = np.asarray(ell)
    if part.shape != ell.shape:
        raise ValueError(f"shape mismatch: {part.shape} vs {ell.shape}")
    full_p = ell == ELL_PUPIL
    full_i = (ell == ELL_IRIS) | full_p
    vis_p = part == PUPIL
    vis_i = (part == IRIS) | vis_p
    fracs = []
    for full, vis in ((full_p, vis_p), (full_i, vis_i)):
        n = int(full.sum())
        fracs.append(None if n == 0 else 1.0 - int((full & vis).sum()) / n)
    return fracs[0], fracs[1]
