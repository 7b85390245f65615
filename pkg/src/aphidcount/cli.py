"""Command-line entry point: ``aphidcount <subcommand> ...``.

Exit status: 0 on success, 1 on usage errors, 2 on unreadable or malformed
input (the message names the file and, where known, the line).
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import confidence as cm
from .detection import DEFAULT_CONF_THRESHOLD, DEFAULT_SIGMA, format_detections, format_ground_truth
from .evaluation import average_precision, average_precision_range
from .imaging import GrayImage, write_pgm
from .manifest import (
    DataError,
    load_sequence,
    read_detections,
    read_frame,
    read_ground_truth,
    read_manifest,
    read_truth,
    write_sequence,
)
from .pipeline import count_sequence, postprocess, sequence_features, train
from .report import features_csv, svg_curves
from .simulator import SimConfig, simulate_sequence
from .tiling import GridFormatError, format_grid, merge_tiles, parse_grid, plan_tiles, slice_image, tile_annotations

log = logging.getLogger("aphidcount")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _add_detector_flags(p, softnms_default="gaussian"):
    p.add_argument("--conf-threshold", type=float, default=DEFAULT_CONF_THRESHOLD,
                   help="minimum confidence for a box to count (default 0.25)")
    p.add_argument("--iou-threshold", type=float, default=0.5,
                   help="IoU threshold for matching / hard suppression (default 0.5)")
    p.add_argument("--softnms", choices=("off", "linear", "gaussian"), default=softnms_default,
                   help=f"Soft-NMS variant applied to raw detections (default {softnms_default})")
    p.add_argument("--sigma", type=float, default=DEFAULT_SIGMA, help="gaussian Soft-NMS sigma (default 0.5)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="aphidcount", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="generate a synthetic stirring sequence")
    p.add_argument("--out-dir", required=True, type=Path)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--frames", type=int, default=9)
    p.add_argument("--true-count", type=int, default=15)
    p.add_argument("--hidden-fraction", type=float, default=SimConfig.hidden_fraction_initial)
    p.add_argument("--surface-rate", type=float, default=SimConfig.surface_rate)
    p.add_argument("--resubmerge-rate", type=float, default=SimConfig.resubmerge_rate)
    p.add_argument("--width", type=int, default=SimConfig.image_width)
    p.add_argument("--height", type=int, default=SimConfig.image_height)

    p = sub.add_parser("slice", help="cut an image (and ground truth) into overlapping tiles")
    p.add_argument("image", type=Path)
    p.add_argument("--gt", type=Path, help="ground-truth file for the image")
    p.add_argument("--out-dir", required=True, type=Path)
    p.add_argument("--tile-size", type=int, default=640)
    p.add_argument("--overlap", type=float, default=0.2)
    p.add_argument("--filter-nonempty", action="store_true", help="skip tiles without ground-truth boxes")

    p = sub.add_parser("merge", help="fuse per-tile detection files into image coordinates")
    p.add_argument("grid", type=Path, help="grid manifest written by 'slice'")
    p.add_argument("--det-dir", type=Path, help="directory holding <tile>.txt detections (default: grid's)")
    p.add_argument("--out", type=Path, help="output detection file (default: stdout)")
    _add_detector_flags(p, softnms_default="off")

    p = sub.add_parser("features", help="per-frame C, N, G (and R) table for one sequence")
    p.add_argument("manifest", type=Path)
    p.add_argument("--model", type=Path, help="model file for R_pred (default: shipped reference)")
    p.add_argument("--csv", type=Path, help="write CSV here instead of stdout")
    p.add_argument("--svg-plot", type=Path, help="also draw the curves as SVG")
    _add_detector_flags(p)

    p = sub.add_parser("fit", help="fit the counting-confidence model on labelled sequences")
    p.add_argument("manifests", type=Path, nargs="+")
    p.add_argument("--model", type=Path, required=True, help="output model file")
    p.add_argument("--average-sets", action=argparse.BooleanOptionalAction, default=True,
                   help="average normalized sequences per time index before fitting (default on)")
    _add_detector_flags(p)

    p = sub.add_parser("count", help="static / max / fused count for one sequence")
    p.add_argument("manifest", type=Path)
    p.add_argument("--model", type=Path, help="model file (default: shipped reference)")
    p.add_argument("--truth", type=Path, help="file holding the true count, reported alongside")
    p.add_argument("--temperature", type=float, default=1.0)
    _add_detector_flags(p)

    p = sub.add_parser("eval-ap", help="AP@0.5 and AP@[0.5:0.95] over labelled sequences")
    p.add_argument("manifests", type=Path, nargs="+")
    _add_detector_flags(p)
    return parser


def _check_unit(name, value, closed_low=True):
    ok = (0.0 <= value <= 1.0) if closed_low else (0.0 < value <= 1.0)
    if not ok:
        raise UsageError(f"--{name} must lie in {'[' if closed_low else '('}0, 1], got {value}")


def _postprocess_all(dets, args):
    return [postprocess(d, args.softnms, args.sigma, args.iou_threshold) for d in dets]


def _load_model(path: Optional[Path]) -> cm.ConfidenceModel:
    if path is None:
        return cm.reference_model()
    try:
        return cm.read_model(path)
    except OSError as exc:
        raise DataError(path, exc.strerror or str(exc)) from None
    except cm.ModelFormatError as exc:
        raise DataError(path, str(exc)) from None


def _labelled_features(manifest_path: Path, args, need_labels: bool):
    manifest = read_manifest(manifest_path)
    if need_labels and not manifest.has_ground_truth:
        raise DataError(manifest_path, "every frame needs a ground-truth file")
    frames, dets, gts = load_sequence(manifest)
    dets = _postprocess_all(dets, args)
    return sequence_features(frames, dets, gts, args.conf_threshold, args.iou_threshold)


def cmd_simulate(args, out):
    if args.frames < 1 or args.true_count < 0:
        raise UsageError("--frames must be >= 1 and --true-count >= 0")
    try:
        config = replace(
            SimConfig(),
            frames=args.frames,
            true_count=args.true_count,
            hidden_fraction_initial=args.hidden_fraction,
            surface_rate=args.surface_rate,
            resubmerge_rate=args.resubmerge_rate,
            image_width=args.width,
            image_height=args.height,
            trap_radius=min(SimConfig.trap_radius, 0.45 * min(args.width, args.height)),
            seed=args.seed,
        )
        seq = simulate_sequence(config)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    manifest = write_sequence(seq, args.out_dir)
    out.write(f"{manifest}\n")


def cmd_slice(args, out):
    _check_unit("overlap", args.overlap)
    if args.overlap >= 1.0 or args.tile_size <= 0:
        raise UsageError("--overlap must be < 1 and --tile-size positive")
    img = read_frame(args.image)
    grid = plan_tiles(img.width, img.height, args.tile_size, args.overlap)
    boxes = read_ground_truth(args.gt, img.width, img.height) if args.gt else None
    if args.filter_nonempty and boxes is None:
        raise UsageError("--filter-nonempty needs --gt")
    stem = args.image.stem
    args.out_dir.mkdir(parents=True, exist_ok=True)
    written = 0
    for tile, crop in zip(grid.tiles, slice_image(img.pixels, grid)):
        local = tile_annotations(boxes, tile) if boxes is not None else None
        if args.filter_nonempty and not local:
            continue
        name = tile.name(stem)
        write_pgm(args.out_dir / f"{name}.pgm", GrayImage(crop))
        if local is not None:
            (args.out_dir / f"{name}.gt.txt").write_text(format_ground_truth(local, tile.width, tile.height))
        written += 1
    grid_path = args.out_dir / f"{stem}_grid.txt"
    grid_path.write_text(format_grid(grid, stem))
    out.write(f"{grid_path} {written} tiles\n")


def cmd_merge(args, out):
    try:
        grid, stem, names = parse_grid(args.grid.read_text())
    except OSError as exc:
        raise DataError(args.grid, exc.strerror or str(exc)) from None
    except GridFormatError as exc:
        raise DataError(args.grid, str(exc)) from None
    det_dir = args.det_dir or args.grid.parent
    per_tile = []
    for tile, name in zip(grid.tiles, names):
        path = det_dir / f"{name}.txt"
        if not path.exists():
            log.info("no detections for tile %s", name)
            per_tile.append((tile, []))
            continue
        per_tile.append((tile, read_detections(path, tile.width, tile.height)))
    suppression = "nms" if args.softnms == "off" else args.softnms
    merged = merge_tiles(per_tile, grid, suppression, args.iou_threshold, args.sigma)
    text = format_detections(merged, grid.image_width, grid.image_height)
    if args.out:
        args.out.write_text(text)
        out.write(f"{args.out} {len(merged)} detections\n")
    else:
        out.write(text)


def cmd_features(args, out):
    feats = _labelled_features(args.manifest, args, need_labels=False)
    model = _load_model(args.model)
    norm = cm.normalize_features(feats)
    r_pred = np.atleast_1d(cm.predict_confidence(model, norm.c, norm.g, norm.n_count))
    text = features_csv(feats, norm, r_pred, feats.r)
    if args.csv:
        args.csv.write_text(text)
    else:
        out.write(text)
    if args.svg_plot:
        series = {"C": feats.c, "N": feats.n_count, "G": feats.g}
        series["R" if feats.r is not None else "R_pred"] = feats.r if feats.r is not None else r_pred
        args.svg_plot.write_text(svg_curves(series, title=args.manifest.parent.name or "sequence"))


def cmd_fit(args, out):
    sets = [_labelled_features(p, args, need_labels=True) for p in args.manifests]
    if args.average_sets and len({s.n for s in sets}) > 1:
        raise UsageError("--average-sets needs sequences of equal length (use --no-average-sets)")
    try:
        model = train(sets, average_sets=args.average_sets)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    cm.write_model(args.model, model)
    out.write("w0 wC wG wN rows\n")
    out.write(f"{model.w0:.6f} {model.wC:.6f} {model.wG:.6f} {model.wN:.6f} {model.residuals.size}\n")


def cmd_count(args, out):
    if not args.temperature > 0:
        raise UsageError("--temperature must be positive")
    feats = _labelled_features(args.manifest, args, need_labels=False)
    report = count_sequence(_load_model(args.model), feats, args.temperature)
    header = ["static", "max", "fused", "fused_int"]
    values = [str(report.static), str(report.maximum), f"{report.fused:.6f}", str(report.fused_int)]
    if args.truth:
        header.append("true")
        values.append(str(read_truth(args.truth)))
    out.write(" ".join(header) + "\n" + " ".join(values) + "\n")


def cmd_eval_ap(args, out):
    dets, gts = [], []
    for m, path in enumerate(args.manifests):
        manifest = read_manifest(path)
        if not manifest.has_ground_truth:
            raise DataError(path, "every frame needs a ground-truth file")
        # IoU is unchanged by per-axis scaling, so normalized coordinates suffice
        for t, e in enumerate(manifest.entries):
            frame_dets = postprocess(read_detections(e.detections_path, 1.0, 1.0), args.softnms, args.sigma, args.iou_threshold)
            dets += [((m, t), d) for d in frame_dets]
            gts += [((m, t), b) for b in read_ground_truth(e.gt_path, 1.0, 1.0)]
    if not gts:
        raise DataError(args.manifests[0], "no ground-truth boxes; AP is undefined")
    ap50 = average_precision(dets, gts, 0.5)
    ap = average_precision_range(dets, gts)
    out.write(f"AP@0.5 {100 * ap50:.1f}\nAP@[0.5:0.95] {100 * ap:.1f}\n")


COMMANDS = {
    "simulate": cmd_simulate,
    "slice": cmd_slice,
    "merge": cmd_merge,
    "features": cmd_features,
    "fit": cmd_fit,
    "count": cmd_count,
    "eval-ap": cmd_eval_ap,
}


def run(argv: Optional[List[str]] = None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
        if hasattr(args, "conf_threshold"):
            _check_unit("conf-threshold", args.conf_threshold)
            _check_unit("iou-threshold", args.iou_threshold, closed_low=False)
            if not args.sigma > 0:
                raise UsageError("--sigma must be positive")
        COMMANDS[args.command](args, out)
    except UsageError as exc:
        err.write(f"{exc}\n")
        return 1
    except DataError as exc:
        err.write(f"aphidcount: data error: {exc}\n")
        return 2
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
