"""Text outputs: per-frame feature CSV and a small SVG of the factor curves over time."""
from __future__ import annotations

from typing import Dict, Optional, Sequence

import numpy as np

from .confidence import SequenceFeatures

CSV_HEADER = ("t", "C", "N", "G", "C_norm", "N_norm", "G_norm", "R_pred")


def features_csv(
    raw: SequenceFeatures,
    norm: SequenceFeatures,
    r_pred: Sequence[float],
    r_label: Optional[Sequence[float]] = None,
) -> str:
    """One row per frame; ``R_label`` is appended as a last column when labels exist."""
    header = list(CSV_HEADER) + (["R_label"] if r_label is not None else [])
    lines = [",".join(header)]
    for t in range(raw.n):
        row = [
            str(t),
            f"{raw.c[t]:.6f}",
            str(int(raw.n_count[t])),
            f"{raw.g[t]:.6f}",
            f"{norm.c[t]:.6f}",
            f"{norm.n_count[t]:.6f}",
            f"{norm.g[t]:.6f}",
            f"{r_pred[t]:.6f}",
        ]
        if r_label is not None:
            row.append(f"{r_label[t]:.6f}")
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def svg_curves(series: Dict[str, Sequence[float]], title: str = "") -> str:
    """Stacked line panels, one per series, sharing the time axis.

    Each panel is scaled to its own min/max, with the range printed beside
    the name.  Output is plain SVG 1.1 with fixed number formatting.
    """
    names = list(series)
    panel_h, width, left, right, top = 110, 520, 70, 20, 30
    plot_w = width - left - right
    height = top + panel_h * len(names) + 20
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<text x="{left}" y="18" font-size="13">{title}</text>',
    ]
    for k, name in enumerate(names):
        v = np.asarray(series[name], dtype=np.float64)
        y0 = top + k * panel_h
        plot_h = panel_h - 30
        lo, hi = float(v.min()), float(v.max())
        span = hi - lo if hi > lo else 1.0
        xs = [left + (plot_w * t / max(len(v) - 1, 1)) for t in range(len(v))]
        ys = [y0 + 10 + plot_h * (1.0 - (val - lo) / span) for val in v]
        points = " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(xs, ys))
        parts.append(f'<rect x="{left}" y="{y0 + 10}" width="{plot_w}" height="{plot_h}" fill="none" stroke="#bbb"/>')
        parts.append(f'<text x="6" y="{y0 + 14 + plot_h / 2:.2f}">{name}</text>')
        parts.append(f'<text x="6" y="{y0 + 28 + plot_h / 2:.2f}" fill="#666">{lo:.3g}..{hi:.3g}</text>')
        parts.append(f'<polyline points="{points}" fill="none" stroke="#1f5fa8" stroke-width="1.5"/>')
        for x, y in zip(xs, ys):
            parts.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="2.5" fill="#1f5fa8"/>')
    last = top + panel_h * len(names) - 10
    n = len(next(iter(series.values()))) if names else 0
    for t in range(n):
        x = left + plot_w * t / max(n - 1, 1)
        parts.append(f'<text x="{x:.2f}" y="{last + 14}" text-anchor="middle">{t}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
