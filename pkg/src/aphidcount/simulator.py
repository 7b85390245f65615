"""Stochastic stirring sequences with known ground truth.

A trap holds ``true_count`` aphids at fixed positions.  Some start hidden
(submerged or occluded); while the water is stirred, hidden aphids surface
at ``surface_rate`` per frame, and visible ones slip back under at
``resubmerge_rate`` per frame throughout.  Each frame is rendered, blurred
by its scheduled radius (low before stirring, peaking mid-stir, settling
afterwards) and handed to a noisy synthetic detector whose miss rate and
false-positive rate grow with blur.

None of the rates are measurements of real traps; they are knobs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .detection import BoundingBox, Detection
from .imaging import GrayImage, box_blur

__all__ = [
    "SimConfig",
    "SimulatedSequence",
    "simulate_sequence",
    "render_frame",
    "simulate_detector",
    "default_blur_schedule",
    "place_aphids",
]


def default_blur_schedule(frames: int, stir_start: int, stir_end: int, peak: int) -> Tuple[int, ...]:
    """Triangle over the stirring window: 0 outside, rising to ``peak`` mid-stir."""
    radii = []
    half = (stir_end - stir_start) / 2.0 + 1.0
    mid = (stir_start + stir_end) / 2.0
    for t in range(frames):
        if stir_start <= t <= stir_end:
            radii.append(int(round(peak * (1.0 - abs(t - mid) / half))))
        else:
            radii.append(0)
    return tuple(radii)


@dataclass(frozen=True)
class SimConfig:
    image_width: int = 360
    image_height: int = 360
    trap_center: Optional[Tuple[float, float]] = None  # image centre when None
    trap_radius: float = 160.0
    true_count: int = 15
    hidden_fraction_initial: float = 0.5
    frames: int = 9
    surface_rate: float = 0.6
    resubmerge_rate: float = 0.02
    stir_start: int = 1
    stir_end: Optional[int] = None  # frames - 2 when None
    blur_schedule: Optional[Tuple[int, ...]] = None
    peak_blur: int = 4
    # detector
    miss_base: float = 0.02
    miss_blur_coeff: float = 0.02
    fp_base: float = 0.2
    fp_blur_coeff: float = 1.0
    conf_mean: float = 0.8
    conf_blur_coeff: float = 0.01
    conf_spread: float = 0.06
    fp_conf_mean: float = 0.6
    box_jitter: float = 0.5
    # rendering
    aphid_radius: float = 4.0
    background_level: float = 40.0
    trap_level: float = 200.0
    aphid_level: float = 50.0
    noise_sigma: float = 1.5
    texture_sigma: float = 8.0  # fixed fine texture on the trap surface, blurred with the frame
    max_placement_tries: int = 20000
    seed: int = 0

    def __post_init__(self):
        probs = {
            "hidden_fraction_initial": self.hidden_fraction_initial,
            "surface_rate": self.surface_rate,
            "resubmerge_rate": self.resubmerge_rate,
            "miss_base": self.miss_base,
        }
        for name, p in probs.items():
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be a probability, got {p}")
        if self.frames < 1:
            raise ValueError("need at least one frame")
        if self.true_count < 0:
            raise ValueError("true_count must be non-negative")
        if self.image_width < 2 or self.image_height < 2:
            raise ValueError("image must be at least 2x2")
        if min(self.fp_base, self.miss_blur_coeff, self.fp_blur_coeff, self.box_jitter, self.noise_sigma,
               self.texture_sigma) < 0:
            raise ValueError("rates, coefficients and noise levels must be non-negative")
        if self.blur_schedule is not None:
            if len(self.blur_schedule) != self.frames:
                raise ValueError(f"blur_schedule has {len(self.blur_schedule)} entries for {self.frames} frames")
            if any(r < 0 for r in self.blur_schedule):
                raise ValueError("blur radii must be non-negative")

    @property
    def center(self) -> Tuple[float, float]:
        if self.trap_center is not None:
            return self.trap_center
        return (self.image_width / 2.0, self.image_height / 2.0)

    @property
    def stir_window(self) -> Tuple[int, int]:
        end = self.frames - 2 if self.stir_end is None else self.stir_end
        return self.stir_start, end

    @property
    def blur_radii(self) -> Tuple[int, ...]:
        if self.blur_schedule is not None:
            return tuple(int(r) for r in self.blur_schedule)
        start, end = self.stir_window
        return default_blur_schedule(self.frames, start, end, self.peak_blur)

    def aphid_box(self, x: float, y: float) -> BoundingBox:
        r = self.aphid_radius
        return BoundingBox(x - r, y - r, x + r, y + r)


@dataclass(frozen=True, eq=False)
class SimulatedSequence:
    config: SimConfig
    positions: np.ndarray  # (M, 2) aphid centres
    visible: np.ndarray  # (frames, M) bool
    frames: Tuple[GrayImage, ...]
    visible_gt: Tuple[Tuple[BoundingBox, ...], ...]
    detections: Tuple[Tuple[Detection, ...], ...]

    @property
    def true_count(self) -> int:
        return self.config.true_count

    @property
    def blur_radii(self) -> Tuple[int, ...]:
        return self.config.blur_radii


def _sample_in_disk(rng: np.random.Generator, center, radius: float, size: int = 1) -> np.ndarray:
    r = radius * np.sqrt(rng.random(size))
    theta = 2.0 * np.pi * rng.random(size)
    return np.column_stack([center[0] + r * np.cos(theta), center[1] + r * np.sin(theta)])


def _placement_radius(config: SimConfig) -> float:
    # keep every box corner inside the trap circle
    return config.trap_radius - config.aphid_radius * math.sqrt(2.0) - 1.0


def place_aphids(config: SimConfig, rng: np.random.Generator) -> np.ndarray:
    """Uniform positions in the trap with a one-pixel gap between aphids (rejection sampling)."""
    limit = _placement_radius(config)
    if config.true_count and limit <= 0:
        raise ValueError("trap is too small for the aphid size")
    min_dist = 2.0 * config.aphid_radius + 1.0
    placed: List[np.ndarray] = []
    tries = 0
    while len(placed) < config.true_count:
        if tries >= config.max_placement_tries:
            raise ValueError(
                f"could not place {config.true_count} non-overlapping aphids "
                f"after {config.max_placement_tries} tries"
            )
        tries += 1
        p = _sample_in_disk(rng, config.center, limit)[0]
        if all(np.hypot(*(p - q)) >= min_dist for q in placed):
            placed.append(p)
    return np.array(placed, dtype=np.float64).reshape(-1, 2)


@lru_cache(maxsize=8)
def _trap_disk(height: int, width: int, cx: float, cy: float, radius: float, inside: float, outside: float):
    ys, xs = np.mgrid[0:height, 0:width] + 0.5
    disk = np.where((xs - cx) ** 2 + (ys - cy) ** 2 <= radius**2, inside, outside)
    disk.setflags(write=False)
    return disk


def _template(config: SimConfig) -> np.ndarray:
    cx, cy = config.center
    return _trap_disk(
        config.image_height, config.image_width, cx, cy, config.trap_radius, config.trap_level, config.background_level
    ).copy()


def render_frame(
    positions: np.ndarray,
    config: SimConfig,
    blur_radius: int = 0,
    rng: Optional[np.random.Generator] = None,
    texture: Optional[np.ndarray] = None,
) -> GrayImage:
    """Trap template with dark disks at ``positions``, box-blurred, plus Gaussian noise.

    Pixel (col, row) covers [col, col+1) x [row, row+1); a pixel is aphid when
    its centre lies within ``aphid_radius`` of an aphid centre.  Noise is
    skipped when ``rng`` is None or ``noise_sigma`` is 0.  ``texture`` (same
    shape as the image) is added to the template before the aphids are drawn,
    so it is blurred along with everything else.
    """
    img = _template(config)
    if texture is not None:
        img += texture
    r = config.aphid_radius
    for x, y in np.asarray(positions, dtype=np.float64).reshape(-1, 2):
        x0, x1 = max(int(math.floor(x - r)), 0), min(int(math.ceil(x + r)) + 1, config.image_width)
        y0, y1 = max(int(math.floor(y - r)), 0), min(int(math.ceil(y + r)) + 1, config.image_height)
        ys, xs = np.mgrid[y0:y1, x0:x1] + 0.5
        patch = img[y0:y1, x0:x1]
        patch[(xs - x) ** 2 + (ys - y) ** 2 <= r * r] = config.aphid_level
    img = box_blur(img, blur_radius)
    if rng is not None and config.noise_sigma > 0:
        img = img + rng.normal(0.0, config.noise_sigma, img.shape)
    return GrayImage(np.clip(np.rint(img), 0, 255).astype(np.uint8))


def _confidence(rng, mean: float, spread: float) -> float:
    return float(np.clip(rng.normal(mean, spread), 0.0, 1.0))


def simulate_detector(
    visible_gt: Sequence[BoundingBox],
    blur_radius: float,
    config: SimConfig,
    rng: np.random.Generator,
) -> List[Detection]:
    """Noisy detections for one frame.

    Each visible aphid is found with probability ``1 - (miss_base +
    miss_blur_coeff * blur)``, its box jittered and its confidence drawn
    around ``conf_mean - conf_blur_coeff * blur``.  A Poisson number of false
    positives (mean ``fp_base + fp_blur_coeff * blur``) lands uniformly in
    the trap.
    """
    miss = min(max(config.miss_base + config.miss_blur_coeff * blur_radius, 0.0), 1.0)
    mean_conf = config.conf_mean - config.conf_blur_coeff * blur_radius
    dets: List[Detection] = []
    for gt in visible_gt:
        found = rng.random() >= miss
        jitter = rng.normal(0.0, config.box_jitter, 4) if config.box_jitter > 0 else np.zeros(4)
        conf = _confidence(rng, mean_conf, config.conf_spread)
        if not found:
            continue
        x0, y0 = gt.xmin + jitter[0], gt.ymin + jitter[1]
        x1, y1 = max(gt.xmax + jitter[2], x0), max(gt.ymax + jitter[3], y0)
        dets.append(Detection(BoundingBox(x0, y0, x1, y1), conf))

    n_fp = rng.poisson(config.fp_base + config.fp_blur_coeff * blur_radius)
    fp_mean = config.fp_conf_mean - config.conf_blur_coeff * blur_radius
    for x, y in _sample_in_disk(rng, config.center, _placement_radius(config), n_fp):
        dets.append(Detection(config.aphid_box(x, y), _confidence(rng, fp_mean, config.conf_spread)))
    return dets


def simulate_sequence(config: SimConfig, rng: Optional[np.random.Generator] = None) -> SimulatedSequence:
    """Generate one stirring sequence; fully determined by ``config.seed`` unless ``rng`` is given."""
    if rng is None:
        rng = np.random.default_rng(config.seed)
    m = config.true_count
    positions = place_aphids(config, rng)
    start, end = config.stir_window
    radii = config.blur_radii
    shape = (config.image_height, config.image_width)
    texture = rng.normal(0.0, config.texture_sigma, shape) if config.texture_sigma > 0 else None

    visible = np.empty((config.frames, m), dtype=bool)
    visible[0] = rng.random(m) >= config.hidden_fraction_initial
    for t in range(1, config.frames):
        u_surface, u_sink = rng.random(m), rng.random(m)
        state = visible[t - 1].copy()
        if start <= t <= end:
            state |= ~visible[t - 1] & (u_surface < config.surface_rate)
        state &= ~(visible[t - 1] & (u_sink < config.resubmerge_rate))
        visible[t] = state

    frames, gts, dets = [], [], []
    for t in range(config.frames):
        shown = positions[visible[t]]
        frames.append(render_frame(shown, config, radii[t], rng, texture))
        boxes = tuple(config.aphid_box(x, y) for x, y in shown)
        gts.append(boxes)
        dets.append(tuple(simulate_detector(boxes, radii[t], config, rng)))
    return SimulatedSequence(config, positions, visible, tuple(frames), tuple(gts), tuple(dets))
