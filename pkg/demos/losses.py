"""
Segmentation losses and their schedule
======================================

The total loss blends cross entropy with a boundary weight, generalized
Dice and a surface term whose share grows over training.
"""
import numpy as np

from ellkit.losses import (LossWeights, grad_seg_loss, seg_loss, seg_loss_components,
                           signed_distance_field)

rng = np.random.default_rng(0)
labels = np.zeros((24, 32), dtype=int)
labels[6:18, 8:26] = 1
labels[9:15, 13:21] = 2
logits = rng.normal(size=(3, 24, 32))

# %%
# The signed distance field is negative inside each class.
sdf = signed_distance_field(labels)
print("pupil sdf at center / corner:", sdf[2, 12, 17], sdf[2, 0, 0])

# %%
# Dice and surface weights trade places as the epoch advances.
for epoch in (0, 10, 20):
    w = LossWeights.at_epoch(epoch, 20)
    comp = seg_loss_components(logits, labels, epoch, 20)
    print(f"epoch {epoch:2d} weights {w} total {comp['seg_loss']:.4f}")

# %%
# Finite-difference spot check of the analytic gradient.
g = grad_seg_loss(logits, labels, 5, 20)
e = np.zeros_like(logits)
e[1, 10, 10] = 1e-4
fd = (seg_loss(logits + e, labels, 5, 20) - seg_loss(logits - e, labels, 5, 20)) / 2e-4
print(f"analytic {g[1, 10, 10]:.6e}  numeric {fd:.6e}")
