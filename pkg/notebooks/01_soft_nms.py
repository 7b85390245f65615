# ---
# jupyter:
#   jupytext:
#     formats: py:light
#     text_representation:
#       extension: .py
#       format_name: light
#       format_version: '1.5'
# ---

# # Hard vs soft suppression
#
# Two aphids sitting side by side produce boxes that overlap a little.
# Hard NMS at a low threshold throws one of them away; the gaussian
# variant only lowers its score.

# +
import math

from aphidcount import BoundingBox, Detection, nms, soft_nms
from aphidcount.detection import iou

a = Detection(BoundingBox(0, 0, 10, 10), 0.92)
b = Detection(BoundingBox(5, 0, 15, 10), 0.85)   # neighbour, IoU 1/3
dup = Detection(BoundingBox(0, 1, 10, 11), 0.60)  # near-duplicate of a
dets = [a, b, dup]
print("iou(a, b) =", round(iou(a.box, b.box), 4))
# -

for thr in (0.3, 0.5):
    print(f"hard nms @{thr}:", [round(d.confidence, 3) for d in nms(dets, thr)])

# With sigma 0.5 the neighbour keeps `exp(-(1/3)**2 / 0.5)` of its score.

kept = soft_nms(dets, "gaussian", sigma=0.5)
print("gaussian:", [round(d.confidence, 4) for d in kept])
print("expected b:", round(0.85 * math.exp(-(1 / 3) ** 2 / 0.5), 4))

# The count at the usual 0.25 confidence cut:

print(sum(d.confidence >= 0.25 for d in kept), "of", len(kept))
