"""
Fitting ellipses to boundary points
===================================

Direct least squares recovers an ellipse exactly from clean samples;
RANSAC keeps that accuracy when a third of the points are junk.
"""
import numpy as np

from ellkit.fitting import fit_ellipse_lsq, fit_ellipse_ransac, sampson_distance
from ellkit.geometry import Ellipse, sample_boundary

rng = np.random.default_rng(0)
truth = Ellipse(160.0, 120.0, 40.0, 25.0, 0.6)

# %%
# Clean samples: the fit is exact up to rounding.
pts = sample_boundary(truth, 50)
fit = fit_ellipse_lsq(pts)
print("truth   ", truth)
print("lsq     ", fit.ellipse, f"rms={fit.residual_rms:.1e}")

# %%
# Add outliers scattered over the bounding box. Plain least squares is
# dragged off; RANSAC finds the consensus set first.
noisy = sample_boundary(truth, 140, noise_sigma=0.3, rng=rng)
junk = rng.uniform(noisy.min(0) - 10, noisy.max(0) + 10, size=(60, 2))
mixed = np.vstack([noisy, junk])
print("lsq     ", fit_ellipse_lsq(mixed).ellipse)
robust = fit_ellipse_ransac(mixed, rng=rng)
print("ransac  ", robust.ellipse, f"inliers={robust.inlier_count}/{len(mixed)}")

# %%
# The Sampson distance approximates the geometric distance to the curve.
print("sampson of junk points (px):", np.round(sampson_distance(truth, junk[:5]), 2))
