# ---
# jupyter:
#   jupytext:
#     formats: py:light
#     text_representation:
#       extension: .py
#       format_name: light
#       format_version: '1.5'
# ---

# # Clarity under blur
#
# Average gradient magnitude of a simulated frame, blurred more and more.

# +
import numpy as np

from aphidcount import SimConfig, average_gradient_magnitude, simulate_sequence
from aphidcount.imaging import box_blur

frame = simulate_sequence(SimConfig(seed=3)).frames[0]
for r in range(6):
    print(r, round(average_gradient_magnitude(box_blur(frame, r)), 3))
# -

# A unit ramp has gradient 1 everywhere, including the edges, since the
# one-sided differences there see the same slope.

ramp = np.tile(np.arange(32, dtype=np.uint8), (8, 1))
print(average_gradient_magnitude(ramp), average_gradient_magnitude(ramp, kernel="sobel"))

# Sobel is normalized by 8, so inside the image it agrees with the central
# version; the border columns differ because of the edge padding.
