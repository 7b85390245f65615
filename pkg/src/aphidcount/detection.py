"""Box geometry, per-image confidence aggregation and suppression (NMS / Soft-NMS).

Boxes are kept in corner form, absolute pixels.  The normalized
``class cx cy w h [conf]`` text form only exists at the file boundary
(see :func:`parse_detections` / :func:`format_detections`).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable, List, Sequence

__all__ = [
    "BoundingBox",
    "Detection",
    "iou",
    "nms",
    "soft_nms",
    "mean_box_confidence",
    "count_detections",
    "parse_detections",
    "format_detections",
    "parse_ground_truth",
    "format_ground_truth",
    "AnnotationFormatError",
]

DEFAULT_SIGMA = 0.5
DEFAULT_SCORE_THRESHOLD = 0.001
DEFAULT_CONF_THRESHOLD = 0.25


class AnnotationFormatError(ValueError):
    """A detection / ground-truth text line could not be parsed."""

    def __init__(self, message: str, line: int | None = None):
        self.reason, self.line = message, line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class BoundingBox:
    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def __post_init__(self):
        coords = (self.xmin, self.ymin, self.xmax, self.ymax)
        if not all(math.isfinite(v) for v in coords):
            raise ValueError(f"non-finite box coordinates: {coords}")
        if self.xmax < self.xmin or self.ymax < self.ymin:
            raise ValueError(f"inverted box: {coords}")

    @property
    def width(self) -> float:
        return self.xmax - self.xmin

    @property
    def height(self) -> float:
        return self.ymax - self.ymin

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return (0.5 * (self.xmin + self.xmax), 0.5 * (self.ymin + self.ymax))

    def translate(self, dx: float, dy: float) -> "BoundingBox":
        return BoundingBox(self.xmin + dx, self.ymin + dy, self.xmax + dx, self.ymax + dy)

    def contains(self, other: "BoundingBox") -> bool:
        return (
            self.xmin <= other.xmin
            and self.ymin <= other.ymin
            and other.xmax <= self.xmax
            and other.ymax <= self.ymax
        )

    def intersection(self, other: "BoundingBox") -> "BoundingBox | None":
        x0, y0 = max(self.xmin, other.xmin), max(self.ymin, other.ymin)
        x1, y1 = min(self.xmax, other.xmax), min(self.ymax, other.ymax)
        if x1 < x0 or y1 < y0:
            return None
        return BoundingBox(x0, y0, x1, y1)

    @classmethod
    def from_center(cls, cx: float, cy: float, w: float, h: float) -> "BoundingBox":
        return cls(cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h)


@dataclass(frozen=True)
class Detection:
    box: BoundingBox
    confidence: float
    class_id: int = 0

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence outside [0, 1]: {self.confidence}")

    def with_confidence(self, confidence: float) -> "Detection":
        return replace(self, confidence=confidence)


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union; 0 when the union has zero area."""
    iw = min(a.xmax, b.xmax) - max(a.xmin, b.xmin)
    ih = min(a.ymax, b.ymax) - max(a.ymin, b.ymin)
    inter = max(iw, 0.0) * max(ih, 0.0)
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return min(max(inter / union, 0.0), 1.0)


def _pick_max(scores: List[float], alive: List[int]) -> int:
    # ties -> lowest original index, `alive` is kept in index order
    best = alive[0]
    for k in alive[1:]:
        if scores[k] > scores[best]:
            best = k
    return best


def nms(dets: Sequence[Detection], iou_threshold: float = 0.5) -> List[Detection]:
    """Greedy hard NMS.  Output is sorted by confidence, highest first."""
    if not 0.0 <= iou_threshold <= 1.0:
        raise ValueError(f"iou_threshold must be in [0, 1], got {iou_threshold}")
    scores = [d.confidence for d in dets]
    alive = list(range(len(dets)))
    keep: List[Detection] = []
    while alive:
        best = _pick_max(scores, alive)
        keep.append(dets[best])
        alive = [k for k in alive if k != best and iou(dets[best].box, dets[k].box) <= iou_threshold]
    return keep


def soft_nms(
    dets: Sequence[Detection],
    method: str = "gaussian",
    sigma: float = DEFAULT_SIGMA,
    iou_threshold: float = 0.3,
    score_threshold: float = DEFAULT_SCORE_THRESHOLD,
) -> List[Detection]:
    """Soft-NMS (Bodla et al.): decay overlapping scores instead of dropping boxes.

    ``gaussian`` rescales every remaining score by ``exp(-iou**2 / sigma)``;
    ``linear`` rescales by ``1 - iou`` only where ``iou > iou_threshold``.
    Detections whose decayed score drops below ``score_threshold`` are
    discarded.  Returned detections carry their decayed confidences and are
    ordered by that confidence, highest first.
    """
    if method not in ("linear", "gaussian"):
        raise ValueError(f"unknown soft-nms method {method!r}")
    if not sigma > 0.0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if not 0.0 <= iou_threshold <= 1.0 or not 0.0 <= score_threshold <= 1.0:
        raise ValueError("thresholds must lie in [0, 1]")

    scores = [d.confidence for d in dets]
    alive = [k for k in range(len(dets)) if scores[k] >= score_threshold]
    keep: List[Detection] = []
    while alive:
        best = _pick_max(scores, alive)
        keep.append(dets[best].with_confidence(scores[best]))
        survivors = []
        for k in alive:
            if k == best:
                continue
            overlap = iou(dets[best].box, dets[k].box)
            if method == "gaussian":
                scores[k] *= math.exp(-(overlap * overlap) / sigma)
            elif overlap > iou_threshold:
                scores[k] *= 1.0 - overlap
            if scores[k] >= score_threshold:
                survivors.append(k)
        alive = survivors
    # selection order is already non-increasing; the sort is stable, so it
    # only guards the tie-break
    keep.sort(key=lambda d: -d.confidence)
    return keep


def mean_box_confidence(dets: Iterable[Detection]) -> float:
    """Average confidence of the boxes; 0.0 for an empty frame."""
    scores = [d.confidence for d in dets]
    if not scores:
        return 0.0
    return math.fsum(scores) / len(scores)


def count_detections(dets: Iterable[Detection], confidence_threshold: float = DEFAULT_CONF_THRESHOLD) -> int:
    return sum(1 for d in dets if d.confidence >= confidence_threshold)


def _split_fields(text: str, ncols: int):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != ncols:
            raise AnnotationFormatError(f"expected {ncols} fields, got {len(parts)}", lineno)
        try:
            cls = int(parts[0])
            values = [float(p) for p in parts[1:]]
        except ValueError as exc:
            raise AnnotationFormatError(str(exc), lineno) from None
        if not all(math.isfinite(v) for v in values):
            raise AnnotationFormatError("non-finite value", lineno)
        yield lineno, cls, values


def _denormalize(values, width: float, height: float, lineno: int) -> BoundingBox:
    cx, cy, w, h = values[:4]
    if w < 0 or h < 0:
        raise AnnotationFormatError("negative box size", lineno)
    return BoundingBox.from_center(cx * width, cy * height, w * width, h * height)


def parse_detections(text: str, width: float, height: float) -> List[Detection]:
    """Parse ``class cx cy w h conf`` lines (normalized) into pixel detections."""
    out = []
    for lineno, cls, values in _split_fields(text, 6):
        box = _denormalize(values, width, height, lineno)
        conf = values[4]
        if not 0.0 <= conf <= 1.0:
            raise AnnotationFormatError(f"confidence {conf} outside [0, 1]", lineno)
        out.append(Detection(box, conf, cls))
    return out


def parse_ground_truth(text: str, width: float, height: float) -> List[BoundingBox]:
    return [_denormalize(values, width, height, lineno) for lineno, _, values in _split_fields(text, 5)]


def _normalized(box: BoundingBox, width: float, height: float) -> str:
    cx, cy = box.center
    return f"{cx / width:.6f} {cy / height:.6f} {box.width / width:.6f} {box.height / height:.6f}"


def format_detections(dets: Iterable[Detection], width: float, height: float) -> str:
    return "".join(f"{d.class_id} {_normalized(d.box, width, height)} {d.confidence:.6f}\n" for d in dets)


def format_ground_truth(boxes: Iterable[BoundingBox], width: float, height: float, class_id: int = 0) -> str:
    return "".join(f"{class_id} {_normalized(b, width, height)}\n" for b in boxes)
