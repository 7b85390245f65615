# ---
# jupyter:
#   jupytext:
#     formats: py:light
#     text_representation:
#       extension: .py
#       format_name: light
#       format_version: '1.5'
# ---

# # Fitting the counting-confidence model
#
# Seven simulated stirring sequences give labelled per-frame features.

# +
import numpy as np

from aphidcount import SimConfig, simulate_sequence
from aphidcount.confidence import reference_model, save_model
from aphidcount.pipeline import count_sequence, simulated_features, train

feats = [simulated_features(simulate_sequence(SimConfig(seed=s, true_count=12 + s))) for s in range(9)]
model = train(feats[:7])
print(save_model(model).decode())
# -

# The shipped reference weights, for comparison:

ref = reference_model()
print(ref.weights, ref.predict(1.0, 1.0, 1.0))

# Counting the two held-out sequences:

for s, f in zip((7, 8), feats[7:]):
    rep = count_sequence(model, f)
    print(f"true {12 + s:2d}  static {rep.static:2d}  max {rep.maximum:2d}  fused {rep.fused:.2f} -> {rep.fused_int}")
    print("   weights", np.round(rep.weights, 3))
