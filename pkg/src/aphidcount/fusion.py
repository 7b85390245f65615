"""Final-count estimators: softmax-weighted fusion and the static / maximum baselines."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = ["CountEstimate", "fuse_counts", "static_count", "max_count", "round_half_up"]


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True, eq=False)
class CountEstimate:
    value_real: float
    value_int: int
    per_frame_weights: np.ndarray


def fuse_counts(r: Sequence[float], counts: Sequence[float], temperature: float = 1.0) -> CountEstimate:
    """Weight each frame's count by softmax(r / temperature) and sum."""
    r = np.asarray(r, dtype=np.float64)
    counts = np.asarray(counts, dtype=np.float64)
    if r.ndim != 1 or counts.ndim != 1 or r.size != counts.size:
        raise ValueError(f"r and counts must be 1-D of equal length, got {r.shape} and {counts.shape}")
    if r.size == 0:
        raise ValueError("need at least one frame")
    if not np.all(np.isfinite(r)):
        raise ValueError("confidences must be finite")
    if np.any(counts < 0):
        raise ValueError("counts must be non-negative")
    if not temperature > 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    z = r / temperature
    e = np.exp(z - z.max())
    weights = e / e.sum()
    value = float(weights @ counts)
    # a convex combination cannot leave [min, max]; clip away rounding spill
    value = min(max(value, float(counts.min())), float(counts.max()))
    return CountEstimate(value, round_half_up(value), weights)


def _check(counts):
    counts = list(counts)
    if not counts:
        raise ValueError("need at least one frame")
    return counts


def static_count(seq_counts: Sequence[int]) -> int:
    """Count of the pre-stirring frame (index 0)."""
    return int(_check(seq_counts)[0])


def max_count(seq_counts: Sequence[int]) -> int:
    return int(max(_check(seq_counts)))
