"""Occlusion sweep: ellipse fits from visible-part masks versus full-ellipse masks.

For each eye the geometry is drawn once and re-rendered at every aperture,
so the levels differ only in how far the eyelids close. Full-ellipse masks do
not depend on the aperture, so their fits are computed once per eye.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .fitting import RansacConfig
from .labels import ellipses_to_ellseg, ellseg_to_ellipses, occlusion_fraction, partseg_to_ellipses
from .synth import SynthParams, render_partseg, sample_eye_geometry

APERTURES = (1.0, 0.8, 0.6, 0.5, 0.4)
CSV_HEADER = ("aperture", "partseg_med", "ellseg_med", "partseg_fail", "ellseg_fail")
STRUCTURES = ("pupil", "iris")


@dataclass
class LevelResult:
    aperture: float
    partseg_errors: dict = field(default_factory=dict)  # structure -> list of float | None
    ellseg_errors: dict = field(default_factory=dict)
    partseg_fail: int = 0
    ellseg_fail: int = 0
    occlusion: dict = field(default_factory=dict)  # structure -> mean occluded fraction

    @staticmethod
    def _median(errors):
        vals = [e for e in errors if e is not None]
        return float(np.median(vals)) if vals else math.nan

    def partseg_median(self, structure: str = "iris") -> float:
        return self._median(self.partseg_errors[structure])

    def ellseg_median(self, structure: str = "iris") -> float:
        return self._median(self.ellseg_errors[structure])


@dataclass
class OcclusionResult:
    levels: list[LevelResult]
    structure: str = "iris"

    def to_csv(self, structure: str | None = None) -> str:
        """One row per aperture. Medians cover valid fits of ``structure`` only;
        fail counts are images with any invalid structure."""
        s = structure or self.structure
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for lv in self.levels:
            w.writerow([f"{lv.aperture:.9g}", _fmt(lv.partseg_median(s)),
                        _fmt(lv.ellseg_median(s)), lv.partseg_fail, lv.ellseg_fail])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {"structure": self.structure, "levels": [
            {"aperture": lv.aperture,
             "partseg_med": {s: lv.partseg_median(s) for s in STRUCTURES},
             "ellseg_med": {s: lv.ellseg_median(s) for s in STRUCTURES},
             "partseg_fail": lv.partseg_fail, "ellseg_fail": lv.ellseg_fail,
             "mean_occlusion": lv.occlusion}
            for lv in self.levels]}


def _fmt(x: float) -> str:
    return "" if not math.isfinite(x) else f"{x:.9g}"


def _center_errors(fit, truth) -> dict:
    out = {}
    for s in STRUCTURES:
        f, t = getattr(fit, s), getattr(truth, s)
        out[s] = None if f is None else math.hypot(f.cx - t.cx, f.cy - t.cy)
    return out


class _Truth:
    def __init__(self, pupil, iris):
        self.pupil, self.iris = pupil, iris


def occlusion_experiment(n_per_level: int, apertures=APERTURES, rng=None,
                         params: SynthParams | None = None,
                         ransac_cfg: RansacConfig | None = None,
                         structure: str = "iris") -> OcclusionResult:
    """Compare center errors of visible-part and full-ellipse fits across apertures.

    Parameters
    ----------
    n_per_level : int
        Synthetic eyes per aperture (the same eyes are reused at every level).
    apertures : sequence of float
        Eyelid apertures in (0, 1].
    rng : numpy.random.Generator
        Seeds the eye geometry and the RANSAC streams.
    structure : {"iris", "pupil"}
        Structure reported by :meth:`OcclusionResult.to_csv`.
    """
    if rng is None:
        raise ValueError("occlusion_experiment needs an explicit seeded rng")
    if n_per_level < 1:
        raise ValueError("n_per_level must be positive")
    if structure not in STRUCTURES:
        raise ValueError(f"structure must be one of {STRUCTURES}")
    apertures = [float(a) for a in apertures]
    if not apertures or any(not 0.0 < a <= 1.0 for a in apertures):
        raise ValueError("apertures must lie in (0, 1]")
    params = params or SynthParams()
    cfg = ransac_cfg or RansacConfig()
    w, h = params.width, params.height

    seeds = rng.integers(0, 2**63, size=(n_per_level, 2))
    eyes = []
    ell_errors, ell_valid = [], []
    for geo_seed, fit_seed in seeds:
        pupil, iris = sample_eye_geometry(params, np.random.default_rng(geo_seed))
        ell = ellipses_to_ellseg(pupil, iris, w, h)
        fit = ellseg_to_ellipses(ell, cfg, np.random.default_rng(fit_seed))
        eyes.append((pupil, iris, ell, fit_seed))
        ell_errors.append(_center_errors(fit, _Truth(pupil, iris)))
        ell_valid.append(all(fit.valid.values()))

    levels = []
    for ap in apertures:
        lv = LevelResult(ap)
        part_errors, occ = [], []
        for pupil, iris, ell, fit_seed in eyes:
            part = render_partseg(pupil, iris, ap, w, h)
            fit = partseg_to_ellipses(part, cfg, np.random.default_rng(fit_seed))
            part_errors.append(_center_errors(fit, _Truth(pupil, iris)))
            lv.partseg_fail += not all(fit.valid.values())
            occ.append(occlusion_fraction(part, ell))
        for s in STRUCTURES:
            lv.partseg_errors[s] = [e[s] for e in part_errors]
            lv.ellseg_errors[s] = [e[s] for e in ell_errors]
        lv.ellseg_fail = sum(not v for v in ell_valid)
        lv.occlusion = {s: float(np.mean([o[k] for o in occ if o[k] is not None]))
                        for k, s in enumerate(STRUCTURES)}
        levels.append(lv)
    return OcclusionResult(levels, structure)
