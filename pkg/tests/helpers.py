"""Shared test scaffolding and independent oracles."""
from fractions import Fraction

import numpy as np

from aphidcount.detection import BoundingBox


def coverage_counts(grid):
    """Per-column and per-row tile multiplicity along each axis."""
    cover_x = np.zeros(grid.image_width, dtype=int)
    cover_y = np.zeros(grid.image_height, dtype=int)
    for x0 in {t.x0 for t in grid.tiles}:
        cover_x[x0 : x0 + min(grid.tile_size, grid.image_width)] += 1
    for y0 in {t.y0 for t in grid.tiles}:
        cover_y[y0 : y0 + min(grid.tile_size, grid.image_height)] += 1
    return cover_x, cover_y


def separated_boxes(rng, width, height, count, size=(6, 40), gap=2.0, tries=5000):
    """Random boxes that are pairwise disjoint with at least ``gap`` pixels between them."""
    out = []
    for _ in range(tries):
        if len(out) == count:
            break
        w, h = rng.uniform(*size, 2)
        x, y = rng.uniform(0, width - w), rng.uniform(0, height - h)
        b = BoundingBox(x, y, x + w, y + h)
        if all(
            b.xmin > o.xmax + gap or o.xmin > b.xmax + gap or b.ymin > o.ymax + gap or o.ymin > b.ymax + gap
            for o in out
        ):
            out.append(b)
    return out


def exact_iou(a, b):
    """IoU in rational arithmetic."""
    ax0, ay0, ax1, ay1 = (Fraction(v) for v in (a.xmin, a.ymin, a.xmax, a.ymax))
    bx0, by0, bx1, by1 = (Fraction(v) for v in (b.xmin, b.ymin, b.xmax, b.ymax))
    iw = max(min(ax1, bx1) - max(ax0, bx0), 0)
    ih = max(min(ay1, by1) - max(ay0, by0), 0)
    inter = iw * ih
    union = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter
    return Fraction(0) if union == 0 else inter / union


def brute_force_ap(dets, gts, threshold):
    """AP by direct enumeration of the ranked list, rational arithmetic throughout.

    ``dets`` is a list of (image, Detection), ``gts`` of (image, BoundingBox).
    For every recall level k/100 the precision of every prefix with recall
    >= k/100 is computed and the best one taken.
    """
    thr = Fraction(threshold)
    order = sorted(range(len(dets)), key=lambda k: (-dets[k][1].confidence, dets[k][0], k))
    # per-image greedy labelling, most confident first
    labels = {}
    images = {img for img, _ in dets}
    for img in images:
        mine = sorted((k for k in range(len(dets)) if dets[k][0] == img), key=lambda k: (-dets[k][1].confidence, k))
        pool = [box for im, box in gts if im == img]
        used = [False] * len(pool)
        for k in mine:
            best, best_o = None, Fraction(-1)
            for g, box in enumerate(pool):
                if used[g]:
                    continue
                o = exact_iou(dets[k][1].box, box)
                if o > best_o:
                    best, best_o = g, o
            hit = best is not None and best_o >= thr
            if hit:
                used[best] = True
            labels[k] = hit
    n_gt = len(gts)
    prefixes = []
    tp = 0
    for j, k in enumerate(order, start=1):
        tp += labels[k]
        prefixes.append((Fraction(tp, j), Fraction(tp, n_gt)))
    total = Fraction(0)
    for level in range(101):
        r = Fraction(level, 100)
        candidates = [p for p, rec in prefixes if rec >= r]
        total += max(candidates) if candidates else 0
    return total / 101
