"""Sliding-window face detection with a boosted Haar cascade.

The detector follows the classic recipe: grayscale conversion, integral
images, window evaluation with variance normalization at a ladder of
scales, then grouping of overlapping hits.  `evaluate_window` is the
straight-line single-window reference; `detect_faces` runs the same
math vectorized over all window origins of a scale and must agree with
it exactly.

Feature rectangles are scaled by rounding their corners, which keeps
every scaled rect inside the scaled window.  Weights are not
re-normalized beyond the 1/(window area) factor.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .cascade import Cascade
from .errors import NoFaceError, UsageError
from .geometry import ColorFrame, PixelRect

GROUP_EPS = 0.2


@dataclass(frozen=True)
class GrayFrame:
    width: int
    height: int
    samples: np.ndarray  # (height, width) uint8

    def __post_init__(self):
        if self.samples.shape != (self.height, self.width):
            raise UsageError(
                f"gray samples shape {self.samples.shape} != ({self.height}, {self.width})")


def to_grayscale(color: ColorFrame) -> GrayFrame:
    """Luma conversion: round(0.299 r + 0.587 g + 0.114 b), half rounds up."""
    rgb = color.pixels.astype(np.float64)
    gray = 0.299 * rgb[:, :, 0] + 0.587 * rgb[:, :, 1] + 0.114 * rgb[:, :, 2]
    gray = np.clip(np.floor(gray + 0.5), 0, 255).astype(np.uint8)
    return GrayFrame(width=color.width, height=color.height, samples=gray)


def integral_images(gray: GrayFrame) -> tuple[np.ndarray, np.ndarray]:
    """Summed-area tables of the image and its square, zero-padded on top/left."""
    h, w = gray.samples.shape
    ii = np.zeros((h + 1, w + 1), dtype=np.int64)
    sq = np.zeros((h + 1, w + 1), dtype=np.int64)
    samples = gray.samples.astype(np.int64)
    np.cumsum(np.cumsum(samples, axis=0), axis=1, out=ii[1:, 1:])
    np.cumsum(np.cumsum(samples * samples, axis=0), axis=1, out=sq[1:, 1:])
    return ii, sq


def rect_sum(ii: np.ndarray, x, y, w, h):
    """Pixel sum over rect (x, y, w, h) from 4 corner lookups."""
    return ii[y + h, x + w] - ii[y, x + w] - ii[y + h, x] + ii[y, x]


def _scale_corners(rect, scale: float) -> tuple[int, int, int, int]:
    """Scale a base-window rect to (x1, y1, x2, y2), rounding each corner."""
    x, y, w, h, _ = rect
    x1 = int(np.floor(x * scale + 0.5))
    y1 = int(np.floor(y * scale + 0.5))
    x2 = int(np.floor((x + w) * scale + 0.5))
    y2 = int(np.floor((y + h) * scale + 0.5))
    return x1, y1, x2, y2


def _window_size(c: Cascade, scale: float) -> tuple[int, int]:
    return (int(np.floor(c.base_width * scale + 0.5)),
            int(np.floor(c.base_height * scale + 0.5)))


def _var_norm(ii, sq, ox, oy, win_w, win_h):
    inv = 1.0 / (win_w * win_h)
    s1 = rect_sum(ii, ox, oy, win_w, win_h)
    s2 = rect_sum(sq, ox, oy, win_w, win_h)
    mean = s1 * inv
    var = s2 * inv - mean * mean
    vn = np.sqrt(np.maximum(var, 0.0))
    return inv, np.where(vn == 0.0, 1.0, vn)


def evaluate_window(c: Cascade, ii: np.ndarray, sq: np.ndarray,
                    origin: tuple[int, int], scale: float) -> bool:
    """Single-window cascade evaluation (reference implementation).

    A stump yields its left value iff
        inv * sum_j weight_j * rect_sum(scaled rect_j)  <  threshold * var_norm
    and the window passes a stage iff the stump outputs sum to at least
    the stage threshold.  Returns False on the first failing stage.
    """
    if scale < 1:
        raise UsageError(f"scale must be >= 1, got {scale}")
    ox, oy = origin
    win_w, win_h = _window_size(c, scale)
    height, width = ii.shape[0] - 1, ii.shape[1] - 1
    if ox < 0 or oy < 0 or ox + win_w > width or oy + win_h > height:
        raise UsageError(f"window {origin}+{win_w}x{win_h} out of {width}x{height} frame")
    inv, var_norm = _var_norm(ii, sq, ox, oy, win_w, win_h)
    for stage in c.stages:
        total = 0.0
        for stump in stage.weak_classifiers:
            feature = c.features[stump.feature_index]
            value = 0.0
            for rect in feature.rects:
                x1, y1, x2, y2 = _scale_corners(rect, scale)
                value += rect[4] * rect_sum(ii, ox + x1, oy + y1, x2 - x1, y2 - y1)
            if value * inv < stump.threshold * var_norm:
                total += stump.left_value
            else:
                total += stump.right_value
        if total < stage.stage_threshold:
            return False
    return True


def _scan_scale(c: Cascade, ii, sq, scale: float) -> list[PixelRect]:
    """All passing windows at one scale (vectorized twin of evaluate_window)."""
    height, width = ii.shape[0] - 1, ii.shape[1] - 1
    win_w, win_h = _window_size(c, scale)
    if win_w > width or win_h > height:
        return []
    step = max(1, int(np.floor(scale + 0.5)))
    xs = np.arange(0, width - win_w + 1, step)
    ys = np.arange(0, height - win_h + 1, step)
    if len(xs) == 0 or len(ys) == 0:
        return []
    ox, oy = (g.ravel() for g in np.meshgrid(xs, ys))
    inv, var_norm = _var_norm(ii, sq, ox, oy, win_w, win_h)

    scaled = [
        [(_scale_corners(rect, scale), rect[4]) for rect in feature.rects]
        for feature in c.features
    ]
    for stage in c.stages:
        total = np.zeros(len(ox))
        for stump in stage.weak_classifiers:
            value = np.zeros(len(ox))
            for (x1, y1, x2, y2), weight in scaled[stump.feature_index]:
                value += weight * rect_sum(ii, ox + x1, oy + y1, x2 - x1, y2 - y1)
            total += np.where(value * inv < stump.threshold * var_norm,
                              stump.left_value, stump.right_value)
        alive = total >= stage.stage_threshold
        ox, oy, var_norm = ox[alive], oy[alive], var_norm[alive]
        if len(ox) == 0:
            return []
    return [PixelRect(int(x), int(y), win_w, win_h) for x, y in zip(ox, oy)]


def _similar(a: PixelRect, b: PixelRect) -> bool:
    delta = GROUP_EPS * min(a.w, a.h, b.w, b.h)
    return (abs(a.x - b.x) <= delta
            and abs(a.y - b.y) <= delta
            and abs((a.x + a.w) - (b.x + b.w)) <= delta
            and abs((a.y + a.h) - (b.y + b.h)) <= delta)


def _group_rects(rects: Sequence[PixelRect], min_neighbors: int) -> list[PixelRect]:
    """Union-find grouping by transitive similarity; emits per-group mean rects."""
    n = len(rects)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if _similar(rects[i], rects[j]):
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[max(ri, rj)] = min(ri, rj)

    groups: dict[int, list[PixelRect]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(rects[i])

    out = []
    for members in groups.values():
        if len(members) < min_neighbors:
            continue
        mean = [float(np.mean([getattr(r, f) for r in members]))
                for f in ("x", "y", "w", "h")]
        out.append(PixelRect(*(int(np.floor(v + 0.5)) for v in mean)))
    out.sort(key=lambda r: (-r.area, r.x, r.y, r.w, r.h))
    return out


def detect_faces(c: Cascade, gray: GrayFrame, scale_factor: float = 1.1,
                 min_neighbors: int = 3) -> list[PixelRect]:
    """Multi-scale scan; returns grouped detections sorted by area descending."""
    if scale_factor <= 1:
        raise UsageError(f"scale_factor must be > 1, got {scale_factor}")
    if min_neighbors < 0:
        raise UsageError(f"min_neighbors must be >= 0, got {min_neighbors}")
    ii, sq = integral_images(gray)
    hits: list[PixelRect] = []
    scale = 1.0
    while True:
        win_w, win_h = _window_size(c, scale)
        if win_w > gray.width or win_h > gray.height:
            break
        hits.extend(_scan_scale(c, ii, sq, scale))
        scale *= scale_factor
    return _group_rects(hits, min_neighbors)


def face_region(detections: Sequence[PixelRect],
                override: Optional[PixelRect] = None) -> PixelRect:
    """The override rect when given, else the largest detection."""
    if override is not None:
        return override
    if not detections:
        raise NoFaceError("no face detected and no override rectangle supplied")
    return max(detections, key=lambda r: r.area)
