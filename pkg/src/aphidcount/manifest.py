"""Sequence manifests and the on-disk layout of a captured (or simulated) sequence.

A manifest lists one frame per line, in time order::

    # frame image detections ground_truth
    0 frame_000.pgm frame_000.det.txt frame_000.gt.txt
    1 frame_001.pgm frame_001.det.txt -

Paths are relative to the manifest's directory and may not contain
whitespace; ``-`` marks a frame without ground truth.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

from .detection import (
    AnnotationFormatError,
    BoundingBox,
    Detection,
    format_detections,
    format_ground_truth,
    parse_detections,
    parse_ground_truth,
)
from .imaging import GrayImage, ImageFormatError, read_image, write_pgm

__all__ = [
    "DataError",
    "ManifestEntry",
    "SequenceManifest",
    "read_manifest",
    "format_manifest",
    "load_sequence",
    "read_detections",
    "read_ground_truth",
    "write_sequence",
    "read_truth",
    "read_frame",
]

PathLike = Union[str, Path]


class DataError(Exception):
    """An input file is missing or malformed; carries the file and line."""

    def __init__(self, path: PathLike, message: str, line: Optional[int] = None):
        self.path, self.line = str(path), line
        where = f"{path}:{line}" if line is not None else str(path)
        super().__init__(f"{where}: {message}")


@dataclass(frozen=True)
class ManifestEntry:
    frame_index: int
    image_path: Path
    detections_path: Path
    gt_path: Optional[Path] = None


@dataclass(frozen=True)
class SequenceManifest:
    path: Path
    entries: Tuple[ManifestEntry, ...]

    @property
    def has_ground_truth(self) -> bool:
        return all(e.gt_path is not None for e in self.entries)

    def __len__(self):
        return len(self.entries)


def read_manifest(path: PathLike) -> SequenceManifest:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DataError(path, exc.strerror or str(exc)) from None
    base = path.parent
    entries: List[ManifestEntry] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) not in (3, 4):
            raise DataError(path, f"expected 'frame image detections [ground_truth]', got {len(parts)} fields", lineno)
        try:
            index = int(parts[0])
        except ValueError:
            raise DataError(path, f"frame index {parts[0]!r} is not an integer", lineno) from None
        if index != len(entries):
            raise DataError(path, f"frame index {index} out of sequence (expected {len(entries)})", lineno)
        files = [base / p for p in parts[1:3]]
        gt = base / parts[3] if len(parts) == 4 and parts[3] != "-" else None
        for f in files + ([gt] if gt else []):
            if not f.is_file():
                raise DataError(path, f"no such file: {f}", lineno)
        entries.append(ManifestEntry(index, files[0], files[1], gt))
    if not entries:
        raise DataError(path, "manifest lists no frames")
    return SequenceManifest(path, tuple(entries))


def format_manifest(entries: Sequence[Tuple[str, str, Optional[str]]]) -> str:
    lines = ["# frame image detections ground_truth"]
    lines += [f"{k} {img} {det} {gt or '-'}" for k, (img, det, gt) in enumerate(entries)]
    return "\n".join(lines) + "\n"


def read_frame(path: Path) -> GrayImage:
    try:
        return read_image(path)
    except OSError as exc:
        raise DataError(path, exc.strerror or str(exc)) from None
    except ImageFormatError as exc:
        raise DataError(path, str(exc)) from None


def _read_text(path: Path) -> str:
    try:
        return path.read_text()
    except (OSError, UnicodeDecodeError) as exc:
        raise DataError(path, str(exc)) from None


def read_detections(path: PathLike, width: float, height: float) -> List[Detection]:
    path = Path(path)
    try:
        return parse_detections(_read_text(path), width, height)
    except AnnotationFormatError as exc:
        raise DataError(path, exc.reason, exc.line) from None


def read_ground_truth(path: PathLike, width: float, height: float) -> List[BoundingBox]:
    path = Path(path)
    try:
        return parse_ground_truth(_read_text(path), width, height)
    except AnnotationFormatError as exc:
        raise DataError(path, exc.reason, exc.line) from None


def load_sequence(manifest: SequenceManifest):
    """Return (frames, detections per frame, ground truth per frame or None)."""
    frames, dets, gts = [], [], []
    for e in manifest.entries:
        img = read_frame(e.image_path)
        frames.append(img)
        dets.append(read_detections(e.detections_path, img.width, img.height))
        if e.gt_path is not None:
            gts.append(read_ground_truth(e.gt_path, img.width, img.height))
    return frames, dets, (gts if manifest.has_ground_truth else None)


def read_truth(path: PathLike) -> int:
    path = Path(path)
    text = _read_text(path).strip()
    try:
        value = int(text)
    except ValueError:
        raise DataError(path, f"expected a single integer, got {text!r}", 1) from None
    if value < 0:
        raise DataError(path, "true count must be non-negative", 1)
    return value


def write_sequence(seq, out_dir: PathLike, prefix: str = "frame") -> Path:
    """Write a :class:`~aphidcount.simulator.SimulatedSequence` to ``out_dir``; return the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for t, (img, gts, dets) in enumerate(zip(seq.frames, seq.visible_gt, seq.detections)):
        stem = f"{prefix}_{t:03d}"
        write_pgm(out / f"{stem}.pgm", img)
        (out / f"{stem}.det.txt").write_text(format_detections(dets, img.width, img.height))
        (out / f"{stem}.gt.txt").write_text(format_ground_truth(gts, img.width, img.height))
        rows.append((f"{stem}.pgm", f"{stem}.det.txt", f"{stem}.gt.txt"))
    manifest = out / "manifest.txt"
    manifest.write_text(format_manifest(rows))
    (out / "truth.txt").write_text(f"{seq.true_count}\n")
    return manifest
