# ---
# jupyter:
#   jupytext:
#     formats: py:light
#     text_representation:
#       extension: .py
#       format_name: light
#       format_version: '1.5'
# ---

# # Tiling a large trap photo
#
# A 1500x1100 image cut into 640 px tiles with 20% overlap.

# +
import numpy as np

from aphidcount import BoundingBox, Detection, merge_tiles, plan_tiles
from aphidcount.tiling import tile_annotations

grid = plan_tiles(1500, 1100, 640, 0.2)
for t in grid.tiles:
    print(t.name("trap"), t.x0, t.y0, t.width, t.height)
# -

# Boxes in the overlap band show up in more than one tile.  Feeding the
# per-tile truth back through the merge gives the original count.

# +
rng = np.random.default_rng(0)

boxes = []
while len(boxes) < 50:
    x, y = rng.uniform(0, 1480), rng.uniform(0, 1080)
    b = BoundingBox(x, y, x + 14, y + 14)
    if all(b.intersection(o) is None for o in boxes):
        boxes.append(b)

per_tile = [(t, [Detection(b, 1.0) for b in tile_annotations(boxes, t)]) for t in grid.tiles]
seen = sum(len(d) for _, d in per_tile)
print("boxes:", len(boxes), "tile hits:", seen, "after merge:", len(merge_tiles(per_tile, grid)))
