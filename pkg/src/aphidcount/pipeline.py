"""End-to-end glue: post-process detections, build labelled features, fit, count.

Also hosts the simulated fit-on-7 / test-on-2 protocol used to compare the
fused estimate against the static and maximum baselines.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import List, Optional, Sequence

import numpy as np

from .confidence import (
    ConfidenceModel,
    SequenceFeatures,
    extract_features,
    fit_sequences,
    normalize_features,
    predict_confidence,
)
from .detection import (
    DEFAULT_CONF_THRESHOLD,
    DEFAULT_SCORE_THRESHOLD,
    DEFAULT_SIGMA,
    BoundingBox,
    Detection,
    nms,
    soft_nms,
)
from .evaluation import counting_confidence, match_detections
from .fusion import fuse_counts, max_count, static_count
from .imaging import GrayImage
from .simulator import SimConfig, SimulatedSequence, simulate_sequence

__all__ = [
    "postprocess",
    "label_sequence",
    "sequence_features",
    "train",
    "CountReport",
    "count_sequence",
    "ProtocolRun",
    "run_protocol",
]


def postprocess(
    dets: Sequence[Detection],
    softnms: str = "gaussian",
    sigma: float = DEFAULT_SIGMA,
    iou_threshold: float = 0.5,
    score_threshold: float = DEFAULT_SCORE_THRESHOLD,
) -> List[Detection]:
    """Detector post-processing: ``softnms`` is ``gaussian``, ``linear``, ``nms`` or ``off``."""
    if softnms == "off":
        return list(dets)
    if softnms == "nms":
        return nms(dets, iou_threshold)
    return soft_nms(dets, softnms, sigma, iou_threshold, score_threshold)


def label_sequence(
    dets_per_frame: Sequence[Sequence[Detection]],
    gts_per_frame: Sequence[Sequence[BoundingBox]],
    confidence_threshold: float = DEFAULT_CONF_THRESHOLD,
    iou_threshold: float = 0.5,
) -> np.ndarray:
    """Counting-confidence label per frame, scored on the counted detections."""
    labels = []
    for dets, gts in zip(dets_per_frame, gts_per_frame, strict=True):
        counted = [d for d in dets if d.confidence >= confidence_threshold]
        labels.append(counting_confidence(match_detections(counted, gts, iou_threshold)))
    return np.array(labels)


def sequence_features(
    frames: Sequence[GrayImage],
    dets_per_frame: Sequence[Sequence[Detection]],
    gts_per_frame: Optional[Sequence[Sequence[BoundingBox]]] = None,
    confidence_threshold: float = DEFAULT_CONF_THRESHOLD,
    match_iou: float = 0.5,
) -> SequenceFeatures:
    """Raw (un-normalized) features, with labels when ground truth is given.

    ``dets_per_frame`` should already be post-processed.
    """
    feats = extract_features(list(zip(frames, dets_per_frame, strict=True)), confidence_threshold)
    if gts_per_frame is None:
        return feats
    return feats.with_labels(label_sequence(dets_per_frame, gts_per_frame, confidence_threshold, match_iou))


def train(sets: Sequence[SequenceFeatures], average_sets: bool = True) -> ConfidenceModel:
    """Normalize each labelled sequence on its own, then fit."""
    return fit_sequences([normalize_features(s) for s in sets], average_sets=average_sets)


@dataclass(frozen=True, eq=False)
class CountReport:
    static: int
    maximum: int
    fused: float
    fused_int: int
    counts: np.ndarray
    predicted_r: np.ndarray
    weights: np.ndarray


def count_sequence(model: ConfidenceModel, feats: SequenceFeatures, temperature: float = 1.0) -> CountReport:
    """Predict per-frame confidence from normalized factors and fuse the raw counts."""
    norm = normalize_features(feats)
    r = np.atleast_1d(predict_confidence(model, norm.c, norm.g, norm.n_count))
    est = fuse_counts(r, feats.n_count, temperature)
    counts = feats.n_count.astype(int)
    return CountReport(
        static=static_count(counts),
        maximum=max_count(counts),
        fused=est.value_real,
        fused_int=est.value_int,
        counts=counts,
        predicted_r=r,
        weights=est.per_frame_weights,
    )


def simulated_features(
    seq: SimulatedSequence,
    softnms: str = "gaussian",
    confidence_threshold: float = DEFAULT_CONF_THRESHOLD,
    match_iou: float = 0.5,
) -> SequenceFeatures:
    dets = [postprocess(d, softnms) for d in seq.detections]
    return sequence_features(seq.frames, dets, seq.visible_gt, confidence_threshold, match_iou)


@dataclass(frozen=True)
class ProtocolRun:
    master_seed: int
    true_count: int
    static: int
    maximum: int
    fused: float
    fused_int: int


def run_protocol(
    master_seed: int,
    base: SimConfig = SimConfig(),
    n_sequences: int = 9,
    n_train: int = 7,
    count_range: tuple = (8, 25),
    average_sets: bool = True,
) -> List[ProtocolRun]:
    """Simulate ``n_sequences`` stirring sequences, fit on the first ``n_train``, count the rest.

    Each sequence gets its own true count drawn from ``count_range``
    (inclusive) and its own seed, both derived from ``master_seed``.
    """
    rng = np.random.default_rng(master_seed)
    counts = rng.integers(count_range[0], count_range[1] + 1, size=n_sequences)
    seeds = rng.integers(0, 2**31 - 1, size=n_sequences)
    sims = [
        simulate_sequence(replace(base, true_count=int(m), seed=int(s))) for m, s in zip(counts, seeds)
    ]
    feats = [simulated_features(s) for s in sims]
    model = train(feats[:n_train], average_sets=average_sets)
    runs = []
    for sim, f in zip(sims[n_train:], feats[n_train:]):
        rep = count_sequence(model, f)
        runs.append(ProtocolRun(master_seed, sim.true_count, rep.static, rep.maximum, rep.fused, rep.fused_int))
    return runs

