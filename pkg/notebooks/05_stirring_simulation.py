# ---
# jupyter:
#   jupytext:
#     formats: py:light
#     text_representation:
#       extension: .py
#       format_name: light
#       format_version: '1.5'
# ---

# # What stirring does to the curves
#
# Averaged over 100 seeds: counted boxes N, clarity G, mean box
# confidence C and the measured label R, frame by frame.

# +
import tempfile
from pathlib import Path

import numpy as np

from aphidcount import SimConfig, simulate_sequence
from aphidcount.pipeline import simulated_features
from aphidcount.report import svg_curves

cfg = SimConfig()
feats = [simulated_features(simulate_sequence(SimConfig(seed=s))) for s in range(100)]
curves = {k: np.mean([getattr(f, a) for f in feats], axis=0) for k, a in
          [("C", "c"), ("N", "n_count"), ("G", "g"), ("R", "r")]}
print("blur", cfg.blur_radii)
for k, v in curves.items():
    print(k, np.round(v, 3))
# -

# N climbs while hidden aphids surface, and G and R bottom out at the
# blurriest frame.  The SVG below is what `aphidcount features --svg-plot`
# writes for a single sequence.

out = Path(tempfile.mkdtemp()) / "curves.svg"
out.write_text(svg_curves(curves, "seed-averaged curves"))
print(out)
