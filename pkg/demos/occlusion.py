"""
Eyelids versus fitted ellipses
==============================

Close the synthetic eyelids step by step and compare iris centers fitted
from the visible mask (PartSeg) with those from full ellipses (EllSeg).
A small run; the command line default uses 200 eyes per level.
"""
import numpy as np

from ellkit.experiment import occlusion_experiment

res = occlusion_experiment(30, rng=np.random.default_rng(2024))
print(res.to_csv())

# %%
# Mean fraction of the iris hidden at each aperture.
for lv in res.levels:
    print(f"aperture {lv.aperture:.1f}: iris occluded {lv.occlusion['iris']:.2f}")
