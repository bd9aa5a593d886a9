"""
Scoring predictions
===================

Mask IoU, center detection curves, boundary box IoU, and the rule that
decides when training has stopped improving.
"""
import numpy as np

from ellkit.evaluation import (build_report, convergence_controller, detection_rate,
                               model_selection_score)
from ellkit.geometry import Ellipse
from ellkit.labels import GroundTruthRecord

rng = np.random.default_rng(0)


def record(e_pupil, e_iris):
    return GroundTruthRecord(e_pupil, e_iris, e_pupil.center, e_iris.center)


# %%
# Ground truth plus predictions jittered by about one pixel.
pairs = []
for _ in range(50):
    p = Ellipse(*rng.uniform([140, 100], [180, 140]), 20, 16, rng.uniform(0, np.pi))
    i = Ellipse(p.cx, p.cy, 50, 45, p.theta)
    dp, di = rng.normal(0, 1, 2), rng.normal(0, 1, 2)
    pred = record(Ellipse(p.cx + dp[0], p.cy + dp[1], p.a, p.b, p.theta),
                  Ellipse(i.cx + di[0], i.cy + di[1], i.a, i.b, i.theta))
    pairs.append((pred, record(p, i)))
rep = build_report(pairs)
print("pupil detection at 1/2/5 px:",
      [rep.pupil_detection.rates[rep.pupil_detection.thresholds.index(t)] for t in (1, 2, 5)])
print("pupil bbox IoU median:", round(rep.pupil_bbox_iou["median"], 3))

# %%
# Detection curves are plain fractions below each threshold.
print(detection_rate([0.4, 1.2, 3.0], [0, 1, 2, 4]).to_csv())

# %%
# Model selection folds IoU and center errors into one number.
print("score:", model_selection_score(0.9, 2, 2, 0, 0))

# %%
# The controller drops the learning rate after five flat epochs and stops
# after ten.
history = [0.5, 0.6, 0.7] + [0.7] * 10
print([convergence_controller(history[:k + 1]) for k in range(len(history))])
