"""Per-frame features, min-max normalization and the linear counting-confidence model.

The model predicts a frame's counting confidence from three normalized
factors -- mean box confidence ``C``, image clarity ``G`` and detection
count ``N`` -- as ``R = w0 + wC*C + wG*G + wN*N``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .detection import DEFAULT_CONF_THRESHOLD, Detection, count_detections, mean_box_confidence
from .imaging import GrayImage, average_gradient_magnitude

__all__ = [
    "SequenceFeatures",
    "ConfidenceModel",
    "ModelFormatError",
    "MalformedModelError",
    "MissingFieldError",
    "NonFiniteWeightError",
    "extract_features",
    "minmax_normalize",
    "normalize_features",
    "average_over_sets",
    "fit_model",
    "predict_confidence",
    "save_model",
    "load_model",
    "reference_model",
    "FEATURE_ORDER",
]

FEATURE_ORDER = ("C", "G", "N")
FORMAT_VERSION = 1


@dataclass(frozen=True, eq=False)
class SequenceFeatures:
    c: np.ndarray
    n_count: np.ndarray
    g: np.ndarray
    r: Optional[np.ndarray] = None

    def __post_init__(self):
        arrays = {"c": self.c, "n_count": self.n_count, "g": self.g}
        if self.r is not None:
            arrays["r"] = self.r
        for name, values in arrays.items():
            values = np.asarray(values, dtype=np.float64)
            if values.ndim != 1:
                raise ValueError(f"{name} must be 1-D")
            object.__setattr__(self, name, values)
        lengths = {len(getattr(self, name)) for name in arrays}
        if len(lengths) != 1 or 0 in lengths:
            raise ValueError(f"feature arrays must share one non-zero length, got {sorted(lengths)}")
        if self.r is not None and (np.any(self.r < 0) or np.any(self.r > 1)):
            raise ValueError("counting-confidence labels must lie in [0, 1]")

    @property
    def n(self) -> int:
        return len(self.c)

    def with_labels(self, r: Sequence[float]) -> "SequenceFeatures":
        return SequenceFeatures(self.c, self.n_count, self.g, np.asarray(r, dtype=np.float64))


def extract_features(
    frames: Sequence[Tuple[GrayImage, Sequence[Detection]]],
    confidence_threshold: float = DEFAULT_CONF_THRESHOLD,
) -> SequenceFeatures:
    """Raw C, N, G per frame.

    Only detections at or above ``confidence_threshold`` count as aphid
    boxes, for both the count and the mean confidence.
    """
    if not frames:
        raise ValueError("need at least one frame")
    c, n, g = [], [], []
    for image, dets in frames:
        kept = [d for d in dets if d.confidence >= confidence_threshold]
        c.append(mean_box_confidence(kept))
        n.append(count_detections(kept, confidence_threshold))
        g.append(average_gradient_magnitude(image))
    return SequenceFeatures(np.array(c), np.array(n, dtype=np.float64), np.array(g))


def minmax_normalize(values: Sequence[float]) -> np.ndarray:
    """Affine map onto [0, 1]; a constant array maps to 0.5 everywhere."""
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise ValueError("cannot normalize an empty array")
    lo, hi = v.min(), v.max()
    if hi == lo:
        return np.full(v.shape, 0.5)
    return np.clip((v - lo) / (hi - lo), 0.0, 1.0)


def normalize_features(feats: SequenceFeatures) -> SequenceFeatures:
    """Min-max normalize C, N and G within one sequence; labels pass through."""
    return SequenceFeatures(
        minmax_normalize(feats.c), minmax_normalize(feats.n_count), minmax_normalize(feats.g), feats.r
    )


def average_over_sets(sets: Sequence[SequenceFeatures]) -> SequenceFeatures:
    """Element-wise mean over sequences at each time index."""
    if not sets:
        raise ValueError("need at least one sequence")
    n = sets[0].n
    if any(s.n != n for s in sets):
        raise ValueError(f"sequences differ in length: {[s.n for s in sets]}")
    if any(s.r is None for s in sets):
        raise ValueError("every sequence needs counting-confidence labels")

    def mean(name):
        return np.mean(np.stack([getattr(s, name) for s in sets]), axis=0)

    return SequenceFeatures(mean("c"), mean("n_count"), mean("g"), mean("r"))


@dataclass(frozen=True, eq=False)
class ConfidenceModel:
    w0: float
    wC: float
    wG: float
    wN: float
    residuals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    feature_order: Tuple[str, ...] = FEATURE_ORDER

    def __post_init__(self):
        for key in ("w0", "wC", "wG", "wN"):
            value = float(getattr(self, key))
            if not math.isfinite(value):
                raise NonFiniteWeightError(f"{key} is not finite: {value}")
            object.__setattr__(self, key, value)
        object.__setattr__(self, "residuals", np.asarray(self.residuals, dtype=np.float64).ravel())
        if tuple(self.feature_order) != FEATURE_ORDER:
            raise MalformedModelError(f"unsupported feature order {self.feature_order}")

    @property
    def weights(self) -> np.ndarray:
        """[w0, wC, wG, wN]."""
        return np.array([self.w0, self.wC, self.wG, self.wN])

    def predict(self, c, g, n_norm):
        return predict_confidence(self, c, g, n_norm)

    def __eq__(self, other):
        if not isinstance(other, ConfidenceModel):
            return NotImplemented
        return np.array_equal(self.weights, other.weights) and np.array_equal(self.residuals, other.residuals)


def design_matrix(c, g, n_norm) -> np.ndarray:
    c, g, n_norm = (np.asarray(a, dtype=np.float64).ravel() for a in (c, g, n_norm))
    return np.column_stack([np.ones_like(c), c, g, n_norm])


def fit_model(rows: Sequence[Sequence[float]], targets: Sequence[float]) -> ConfidenceModel:
    """Ordinary least squares for ``R = w0 + wC*C + wG*G + wN*N``.

    ``rows`` holds ``(c, g, n_norm)`` triples.  Solved through an SVD
    (``numpy.linalg.lstsq``), which returns the minimum-norm solution when
    the design matrix is rank deficient.
    """
    rows = np.asarray(rows, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64).ravel()
    if rows.ndim != 2 or rows.shape[1] != 3:
        raise ValueError(f"rows must be (k, 3) with columns C, G, N; got shape {rows.shape}")
    if rows.shape[0] != y.size:
        raise ValueError(f"{rows.shape[0]} rows but {y.size} targets")
    if rows.shape[0] < 4:
        raise ValueError(f"need at least 4 rows to fit 4 weights, got {rows.shape[0]}")
    X = design_matrix(rows[:, 0], rows[:, 1], rows[:, 2])
    w, *_ = np.linalg.lstsq(X, y, rcond=None)
    return ConfidenceModel(*w, residuals=y - X @ w)


def fit_sequences(sets: Sequence[SequenceFeatures], average_sets: bool = True) -> ConfidenceModel:
    """Fit on labelled sequences whose C/N/G are already normalized.

    With ``average_sets`` the sequences are first averaged per time index
    (one row per frame position); otherwise every frame of every sequence
    is its own row.
    """
    if average_sets:
        avg = average_over_sets(sets)
        return fit_model(np.column_stack([avg.c, avg.g, avg.n_count]), avg.r)
    if any(s.r is None for s in sets):
        raise ValueError("every sequence needs counting-confidence labels")
    rows = np.concatenate([np.column_stack([s.c, s.g, s.n_count]) for s in sets])
    return fit_model(rows, np.concatenate([s.r for s in sets]))


def predict_confidence(model: ConfidenceModel, c, g, n_norm):
    """Linear prediction clamped to [0, 1]; scalars in, float out, arrays in, array out."""
    raw = model.w0 + model.wC * np.asarray(c, dtype=np.float64) + model.wG * np.asarray(g, dtype=np.float64)
    raw = raw + model.wN * np.asarray(n_norm, dtype=np.float64)
    out = np.clip(raw, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


# Model file: one ``key = value`` per line, '#' comments allowed.


class ModelFormatError(ValueError):
    """Base class for model-file problems."""


class MalformedModelError(ModelFormatError):
    pass


class MissingFieldError(ModelFormatError):
    pass


class NonFiniteWeightError(ModelFormatError):
    pass


_REQUIRED = ("format_version", "feature_order", "w0", "wC", "wG", "wN", "residuals")


def save_model(model: ConfidenceModel) -> bytes:
    residuals = ", ".join(repr(float(v)) for v in model.residuals)
    lines = [
        "# aphidcount counting-confidence model",
        f"format_version = {FORMAT_VERSION}",
        f"feature_order = {','.join(model.feature_order)}",
        f"w0 = {model.w0!r}",
        f"wC = {model.wC!r}",
        f"wG = {model.wG!r}",
        f"wN = {model.wN!r}",
        f"residuals = {residuals}",
    ]
    return ("\n".join(lines) + "\n").encode("utf-8")


def _parse_float(key: str, text: str, lineno: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise MalformedModelError(f"line {lineno}: {key} is not a number: {text!r}") from None
    if not math.isfinite(value):
        raise NonFiniteWeightError(f"line {lineno}: {key} is not finite: {text!r}")
    return value


def load_model(data: Union[bytes, str]) -> ConfidenceModel:
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    fields, where = {}, {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise MalformedModelError(f"line {lineno}: expected 'key = value', got {raw!r}")
        if key in fields:
            raise MalformedModelError(f"line {lineno}: duplicate key {key!r}")
        fields[key], where[key] = value.strip(), lineno
    for key in _REQUIRED:
        if key not in fields:
            raise MissingFieldError(f"missing field {key!r}")
    if fields["format_version"] != str(FORMAT_VERSION):
        raise MalformedModelError(f"unsupported format_version {fields['format_version']!r}")
    order = tuple(p.strip() for p in fields["feature_order"].split(","))
    if order != FEATURE_ORDER:
        raise MalformedModelError(f"feature_order must be {','.join(FEATURE_ORDER)}, got {fields['feature_order']!r}")
    weights = {k: _parse_float(k, fields[k], where[k]) for k in ("w0", "wC", "wG", "wN")}
    residual_text = fields["residuals"]
    residuals = [
        _parse_float("residuals", p.strip(), where["residuals"]) for p in residual_text.split(",") if residual_text
    ]
    return ConfidenceModel(residuals=np.array(residuals), **weights)


def read_model(path: Union[str, Path]) -> ConfidenceModel:
    return load_model(Path(path).read_bytes())


def write_model(path: Union[str, Path], model: ConfidenceModel) -> None:
    Path(path).write_bytes(save_model(model))


def reference_model_bytes() -> bytes:
    return resources.files("aphidcount").joinpath("data/reference_model.txt").read_bytes()


def reference_model() -> ConfidenceModel:
    """The published weights shipped with the package (fit on real trap data)."""
    return load_model(reference_model_bytes())
