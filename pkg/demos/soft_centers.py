"""
Differentiable centers from activation maps
===========================================

A spatial softmax turns a map into a distribution over pixels; its mean
is a center estimate with an analytic gradient.
"""
import numpy as np

from ellkit.centers import ellseg_centers, grad_soft_center, soft_center
from ellkit.losses import com_loss

H, W = 60, 80
ys, xs = np.mgrid[0:H, 0:W]
bump = 3 * np.exp(-((xs - 51.3) ** 2 + (ys - 22.8) ** 2) / (2 * 4.0 ** 2))

# %%
# Larger beta sharpens the distribution toward the peak.
for beta in (1, 4, 16):
    print(f"beta={beta:2d} center={np.round(soft_center(bump, beta), 3)}")

# %%
# The gradient says how raising each pixel moves the center.
gx, gy = grad_soft_center(bump, 4)
print("d cx / d field peaks at column", np.unravel_index(np.abs(gx).argmax(), gx.shape)[1])

# %%
# Three-channel maps: the pupil channel gives the pupil center and the
# negated background channel gives the iris center.
maps = np.stack([-bump, bump, bump])
pc, ic = ellseg_centers(maps)
print("pupil", np.round(pc, 3), "iris", np.round(ic, 3))
print("L1 center loss against (50, 23):", round(com_loss(maps, (50, 23), (50, 23)), 4))
