"""Post-detection pipeline for counting aphids in stirred yellow water traps."""
from .confidence import (
    ConfidenceModel,
    SequenceFeatures,
    average_over_sets,
    extract_features,
    fit_model,
    load_model,
    minmax_normalize,
    predict_confidence,
    reference_model,
    save_model,
)
from .detection import BoundingBox, Detection, count_detections, iou, mean_box_confidence, nms, soft_nms
from .evaluation import MatchResult, average_precision, average_precision_range, counting_confidence, match_detections
from .fusion import CountEstimate, fuse_counts, max_count, static_count
from .imaging import GrayImage, average_gradient_magnitude, box_blur, load_image
from .simulator import SimConfig, SimulatedSequence, render_frame, simulate_detector, simulate_sequence
from .tiling import Tile, TileGrid, merge_tiles, plan_tiles, to_global

__version__ = "0.1.0"
