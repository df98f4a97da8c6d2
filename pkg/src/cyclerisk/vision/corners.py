"""Minimum-eigenvalue corner detection with per-cell capping.

Scores follow the small-eigenvalue criterion on the 2x2 structure tensor,
built from 3x3 Sobel gradients summed over a 5x5 box. Keeping at most
max_per_cell corners per grid cell spreads detections across the frame instead
of letting one textured area take every slot.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from ..errors import InvalidInputError
from .frames import GrayFrame

# Sobel support (1) plus box-sum reach (2): scores this close to the frame
# edge mix in padding, so they are never reported.
_BORDER = 4
_SUM_SIZE = 5
_NMS_SIZE = 3


@dataclass
class CornerSet:
    """Detected corners for one frame: (x, y) subpixel points plus scores."""

    points: np.ndarray  # (n, 2) float64, x then y
    response: np.ndarray  # (n,) float64 min-eigenvalue score
    frame_index: int = 0

    def __len__(self) -> int:
        return int(self.points.shape[0])


def min_eigen_response(img: np.ndarray) -> np.ndarray:
    """Per-pixel smaller eigenvalue of the 5x5-summed structure tensor."""
    f = img.astype(np.float64)
    gx = ndimage.sobel(f, axis=1, mode="nearest") / 8.0
    gy = ndimage.sobel(f, axis=0, mode="nearest") / 8.0
    sxx = ndimage.uniform_filter(gx * gx, size=_SUM_SIZE, mode="nearest")
    sxy = ndimage.uniform_filter(gx * gy, size=_SUM_SIZE, mode="nearest")
    syy = ndimage.uniform_filter(gy * gy, size=_SUM_SIZE, mode="nearest")
    trace = sxx + syy
    root = np.sqrt((sxx - syy) ** 2 + 4.0 * sxy * sxy)
    return (trace - root) / 2.0


def _subpixel_offset(patch: np.ndarray) -> tuple[float, float]:
    """Parabolic peak refinement from a 3x3 score patch, clamped to +-0.5."""
    def axis_offset(a: float, b: float, c: float) -> float:
        denom = a - 2.0 * b + c
        if denom >= 0.0:  # not a local max along this axis
            return 0.0
        return float(np.clip(0.5 * (a - c) / denom, -0.5, 0.5))

    dy = axis_offset(patch[0, 1], patch[1, 1], patch[2, 1])
    dx = axis_offset(patch[1, 0], patch[1, 1], patch[1, 2])
    return dx, dy


def detect_corners(
    frame: GrayFrame,
    max_per_cell: int = 8,
    grid: tuple[int, int] = (4, 4),
    quality: float = 0.01,
) -> CornerSet:
    """Find corners, strongest first, capped per grid cell.

    quality is the fraction of the global best score a local maximum must
    reach to survive. Returned coordinates are subpixel and always strictly
    inside the frame. An untextured frame yields an empty set.
    """
    if max_per_cell < 1:
        raise InvalidInputError(f"max_per_cell must be >= 1, got {max_per_cell}")
    if not 0.0 < quality <= 1.0:
        raise InvalidInputError(f"quality must be in (0, 1], got {quality}")
    rows, cols = grid
    if rows < 1 or cols < 1:
        raise InvalidInputError(f"corner grid must be positive, got {grid}")

    score = min_eigen_response(frame.data)
    h, w = score.shape

    interior = np.zeros_like(score, dtype=bool)
    if h > 2 * _BORDER and w > 2 * _BORDER:
        interior[_BORDER:h - _BORDER, _BORDER:w - _BORDER] = True

    best = float(score[interior].max()) if interior.any() else 0.0
    if best <= 0.0:
        return CornerSet(np.empty((0, 2)), np.empty(0), frame_index=frame.index)

    local_max = score == ndimage.maximum_filter(score, size=_NMS_SIZE, mode="nearest")
    keep = local_max & interior & (score >= quality * best)
    ys, xs = np.nonzero(keep)
    if ys.size == 0:
        return CornerSet(np.empty((0, 2)), np.empty(0), frame_index=frame.index)

    vals = score[ys, xs]
    refined = np.empty((ys.size, 2), dtype=np.float64)
    for i in range(ys.size):
        y, x = int(ys[i]), int(xs[i])
        dx, dy = _subpixel_offset(score[y - 1:y + 2, x - 1:x + 2])
        refined[i] = (x + dx, y + dy)

    # Cell membership comes from the refined position so the per-cell cap
    # holds for the coordinates callers actually see.
    cell_h = -(-h // rows)  # ceil division so edge cells absorb the remainder
    cell_w = -(-w // cols)
    cells = ((refined[:, 1].astype(np.intp) // cell_h) * cols
             + refined[:, 0].astype(np.intp) // cell_w)

    # Deterministic order: score descending, then y, then x.
    order = np.lexsort((xs, ys, -vals))
    chosen: list[int] = []
    taken = np.zeros(rows * cols, dtype=np.int64)
    for idx in order:
        cell = cells[idx]
        if taken[cell] < max_per_cell:
            taken[cell] += 1
            chosen.append(int(idx))

    pts = refined[chosen].reshape(-1, 2)
    resp = vals[np.asarray(chosen, dtype=np.intp)] if chosen else np.empty(0)
    return CornerSet(pts, resp, frame_index=frame.index)
