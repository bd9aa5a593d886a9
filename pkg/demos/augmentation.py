"""
Label-consistent augmentation
=============================

Each draw picks one of eight variants. Geometric ones move the mask and
the centers with the image; the rest only change intensities.
"""
import numpy as np

from ellkit.augment import apply, sample_choice
from ellkit.synth import SynthParams, synth_eye

image, part, _, truth = synth_eye(SynthParams(), np.random.default_rng(3))
centers = [truth.pupil_center, truth.iris_center]
rng = np.random.default_rng(42)

# %%
# The same seed gives the same sequence of choices and pixels.
for _ in range(6):
    choice = sample_choice(rng)
    img, msk, pts = apply(image, part, centers, choice, rng)
    moved = np.hypot(*(pts[0] - centers[0]))
    print(f"{choice.kind:9s} {choice.params}  pupil center moved {moved:6.2f} px, "
          f"mask changed: {not np.array_equal(msk, part)}")
