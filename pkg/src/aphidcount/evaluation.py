"""Detection/ground-truth matching, counting confidence and average precision."""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Hashable, List, Sequence, Tuple

import numpy as np

from .detection import BoundingBox, Detection, iou

__all__ = [
    "MatchResult",
    "match_detections",
    "counting_confidence",
    "average_precision",
    "average_precision_range",
    "AP_THRESHOLDS",
]

AP_THRESHOLDS = tuple(round(0.5 + 0.05 * k, 2) for k in range(10))


@dataclass(frozen=True)
class MatchResult:
    tp: int
    fp: int
    fn: int
    pairs: Tuple[Tuple[int, int, float], ...] = ()


def _confidence_order(dets: Sequence[Detection]) -> List[int]:
    return sorted(range(len(dets)), key=lambda k: (-dets[k].confidence, k))


def match_detections(
    dets: Sequence[Detection], gts: Sequence[BoundingBox], iou_threshold: float = 0.5
) -> MatchResult:
    """Greedy one-to-one matching, most confident detection first.

    Each detection claims the still-unmatched ground truth it overlaps most
    (lowest index on ties) if that IoU reaches ``iou_threshold``.
    """
    if not 0.0 < iou_threshold <= 1.0:
        raise ValueError(f"iou_threshold must be in (0, 1], got {iou_threshold}")
    taken = [False] * len(gts)
    pairs = []
    for d in _confidence_order(dets):
        best, best_iou = -1, -1.0
        for g, gt in enumerate(gts):
            if taken[g]:
                continue
            o = iou(dets[d].box, gt)
            if o > best_iou:
                best, best_iou = g, o
        if best >= 0 and best_iou >= iou_threshold:
            taken[best] = True
            pairs.append((d, best, best_iou))
    tp = len(pairs)
    return MatchResult(tp=tp, fp=len(dets) - tp, fn=len(gts) - tp, pairs=tuple(pairs))


def counting_confidence(match: MatchResult) -> float:
    """TP / (TP + FP + FN); an empty scene with no detections scores 1."""
    total = match.tp + match.fp + match.fn
    if total == 0:
        return 1.0
    return match.tp / total


def _ranked_hits(dets, gts, iou_threshold):
    by_image_dets = defaultdict(list)
    by_image_gts = defaultdict(list)
    for k, (image, det) in enumerate(dets):
        by_image_dets[image].append(k)
    for image, box in gts:
        by_image_gts[image].append(box)

    hit = np.zeros(len(dets), dtype=bool)
    for image, idx in by_image_dets.items():
        result = match_detections([dets[k][1] for k in idx], by_image_gts.get(image, []), iou_threshold)
        for d, _, _ in result.pairs:
            hit[idx[d]] = True
    order = sorted(range(len(dets)), key=lambda k: (-dets[k][1].confidence, dets[k][0], k))
    return hit[order]


def average_precision(
    dets: Sequence[Tuple[Hashable, Detection]],
    gts: Sequence[Tuple[Hashable, BoundingBox]],
    iou_threshold: float = 0.5,
) -> float:
    """101-point interpolated AP over a pooled set of images.

    Detections are ranked by confidence (ties: image id, then input
    position).  Interpolated precision at recall ``k/100`` is the best
    precision reached at any recall >= ``k/100``; the recall comparison is
    done in integers so grid points are hit exactly.
    """
    n_gt = len(gts)
    if n_gt == 0:
        raise ValueError("average precision is undefined without ground truth")
    if not dets:
        return 0.0
    hits = _ranked_hits(dets, gts, iou_threshold)
    tp = np.cumsum(hits)
    precision = tp / np.arange(1, len(hits) + 1)
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    # first rank whose recall tp/n_gt reaches k/100  <=>  100*tp >= k*n_gt
    grid = np.arange(101) * n_gt
    first = np.searchsorted(100 * tp, grid, side="left")
    interp = np.zeros(101)
    reached = first < len(hits)
    interp[reached] = envelope[first[reached]]
    return float(interp.sum() / 101.0)


def average_precision_range(
    dets: Sequence[Tuple[Hashable, Detection]],
    gts: Sequence[Tuple[Hashable, BoundingBox]],
    thresholds: Sequence[float] = AP_THRESHOLDS,
) -> float:
    """AP averaged over IoU thresholds 0.50:0.05:0.95 (COCO-style)."""
    return float(np.mean([average_precision(dets, gts, t) for t in thresholds]))
