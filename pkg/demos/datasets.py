"""
Bringing datasets to the working frame
======================================

Native frames are cropped and resampled to 320x240; centers follow with
pixel-center alignment. A stratified split then balances pupil positions.
"""
import numpy as np

from ellkit.datasets import PRESETS, Record, map_point, stratified_split

# %%
# NVGaze is 1280x960 and scales by a quarter.
print("presets:", sorted(PRESETS))
print("(640, 480) ->", map_point((640, 480), (0, 0), (0.25, 0.25)))

# %%
# Split 400 records by pupil position on an 8x6 grid of the frame.
rng = np.random.default_rng(0)
recs = [Record(f"img{i:03d}", pupil_center=tuple(p))
        for i, p in enumerate(rng.normal([160, 120], [50, 30], size=(400, 2)))]
train, val = stratified_split(recs, seed=1)
print(f"train {len(train)}, validation {len(val)}, dropped {400 - len(train) - len(val)}")
