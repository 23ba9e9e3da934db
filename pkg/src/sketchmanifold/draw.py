"""Anti-aliased stroke rasterization shared by the synthetic generator and
the interactive canvas.

Draw strokes composite by per-pixel maximum of coverage, so the final
raster only depends on the set of strokes, not their order.  Erase strokes
multiply remaining ink by (1 - coverage), driving it to exactly 0 along
the stroke core.
"""

from __future__ import annotations

import numpy as np


def segment_coverage(
    shape: tuple[int, int], p0: tuple[float, float], p1: tuple[float, float], width: float
) -> np.ndarray:
    """Coverage field in [0, 1] of one capsule-shaped segment.

    Distance is taken from pixel centers to the segment; coverage falls
    off linearly over one pixel past the half-width.
    """
    h, w = shape
    x0, y0 = p0
    x1, y1 = p1
    half = max(width, 0.0) / 2.0
    pad = int(np.ceil(half + 2.0))
    xmin = max(int(np.floor(min(x0, x1))) - pad, 0)
    xmax = min(int(np.ceil(max(x0, x1))) + pad + 1, w)
    ymin = max(int(np.floor(min(y0, y1))) - pad, 0)
    ymax = min(int(np.ceil(max(y0, y1))) + pad + 1, h)
    cover = np.zeros(shape)
    if xmin >= xmax or ymin >= ymax:
        return cover
    ys, xs = np.mgrid[ymin:ymax, xmin:xmax]
    dx, dy = x1 - x0, y1 - y0
    seg_sq = dx * dx + dy * dy
    if seg_sq == 0.0:
        t = np.zeros_like(xs, dtype=np.float64)
    else:
        t = ((xs - x0) * dx + (ys - y0) * dy) / seg_sq
        t = np.clip(t, 0.0, 1.0)
    cx = x0 + t * dx
    cy = y0 + t * dy
    dist = np.hypot(xs - cx, ys - cy)
    cover[ymin:ymax, xmin:xmax] = np.clip(half + 0.5 - dist, 0.0, 1.0)
    return cover


def polyline_coverage(
    shape: tuple[int, int], points: np.ndarray, width: float
) -> np.ndarray:
    """Max of segment coverages along an open polyline (>= 2 points)."""
    pts = np.asarray(points, dtype=np.float64)
    cover = np.zeros(shape)
    for a, b in zip(pts[:-1], pts[1:]):
        np.maximum(cover, segment_coverage(shape, tuple(a), tuple(b), width), out=cover)
    return cover


def draw_polyline(
    ink: np.ndarray, points: np.ndarray, width: float, intensity: float = 1.0
) -> np.ndarray:
    """Composite a stroke onto ``ink`` (max blend); returns a new array."""
    cover = polyline_coverage(ink.shape, points, width) * float(intensity)
    return np.maximum(ink, cover)


def erase_polyline(ink: np.ndarray, points: np.ndarray, width: float) -> np.ndarray:
    cover = polyline_coverage(ink.shape, points, width)
    return ink * (1.0 - cover)


def ellipse_points(
    cx: float, cy: float, rx: float, ry: float,
    start: float = 0.0, stop: float = 2.0 * np.pi, segments: int = 64,
) -> np.ndarray:
    """Polyline approximation of an elliptical arc (angles in radians)."""
    theta = np.linspace(start, stop, segments + 1)
    return np.column_stack([cx + rx * np.cos(theta), cy + ry * np.sin(theta)])
