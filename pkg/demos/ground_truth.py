"""
From visible parts to full ellipses
===================================

A PartSeg mask only shows what the eyelids leave visible. Fitting ellipses
to the pupil and limbus boundaries and painting them whole gives the
EllSeg label, and comparing the two measures how much was hidden.
"""
import numpy as np

from ellkit.labels import ellseg_to_partseg, occlusion_fraction, partseg_to_ellipses
from ellkit.synth import SynthParams, synth_eye

rng = np.random.default_rng(3)
image, part, ell, truth = synth_eye(SynthParams(aperture=0.6), rng)
print("classes in PartSeg:", np.unique(part), " in EllSeg:", np.unique(ell))

# %%
# Fit both structures from the visible mask. Only points on real
# pupil/iris and iris/sclera transitions are used, so eyelid edges do not
# pull the fit.
rec = partseg_to_ellipses(part, rng=np.random.default_rng(0))
for s in ("pupil", "iris"):
    t, f = getattr(truth, s), getattr(rec, s)
    if f is None:
        print(f"{s:5s} no fit: {rec.diagnostics[s]['reason']}")
        continue
    err = np.hypot(f.cx - t.cx, f.cy - t.cy)
    print(f"{s:5s} truth {t}\n      fit   {f}  center error {err:.3f} px")

# %%
# With the lids this low the limbus can vanish entirely. The record keeps
# the reason instead of a guess.
closed = synth_eye(SynthParams(aperture=0.6), np.random.default_rng(0))[1]
print("closed eye:", partseg_to_ellipses(closed, rng=np.random.default_rng(0)).diagnostics["iris"])

# %%
# Occlusion fraction: share of each full ellipse hidden by the lids.
pupil_occ, iris_occ = occlusion_fraction(part, ell)
print(f"occluded: pupil {pupil_occ:.2f}, iris {iris_occ:.2f}")

# %%
# Mapping EllSeg back to PartSeg classes drops the sclera, which EllSeg
# does not label.
print("visible iris pixels:", int((part == 2).sum()),
      " full iris pixels:", int((ellseg_to_partseg(ell) == 2).sum()))
