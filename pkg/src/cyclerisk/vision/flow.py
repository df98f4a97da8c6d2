"""Sparse optical flow: iterative Lucas-Kanade with an optional pyramid.

Each corner is tracked independently. The spatial gradient and its 2x2 normal
matrix come from the earlier frame and stay fixed while the update iterations
re-sample the later frame at the moving position. A point is reported as
untracked when its normal matrix is near singular (no texture to lock onto) or
when the window leaves the frame.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from ..errors import InvalidInputError
from .corners import CornerSet
from .frames import GrayFrame

# Minimum normalized eigenvalue of the gradient normal matrix for a point to
# count as trackable (intensities in 0..255).
_MIN_EIG = 1e-3
_MAX_ITERS = 20
_CONVERGENCE = 0.01  # pixels


@dataclass
class FlowField:
    """Per-corner displacement between two frames.

    points are the source (x, y) positions, vectors the displacements to the
    later frame, and tracked flags which entries converged.
    """

    points: np.ndarray  # (n, 2) float64
    vectors: np.ndarray  # (n, 2) float64
    tracked: np.ndarray  # (n,) bool
    frame_index: int = 0

    def __len__(self) -> int:
        return int(self.points.shape[0])


def _bilinear(img: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Sample img at float coordinates. Callers keep coordinates in bounds."""
    x0 = np.floor(xs).astype(np.intp)
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.clip(x0, 0, img.shape[1] - 2)
    y0 = np.clip(y0, 0, img.shape[0] - 2)
    fx = xs - x0
    fy = ys - y0
    p00 = img[y0, x0]
    p01 = img[y0, x0 + 1]
    p10 = img[y0 + 1, x0]
    p11 = img[y0 + 1, x0 + 1]
    return (p00 * (1 - fx) * (1 - fy) + p01 * fx * (1 - fy)
            + p10 * (1 - fx) * fy + p11 * fx * fy)


def _downsample(img: np.ndarray) -> np.ndarray:
    blurred = ndimage.gaussian_filter(img, sigma=1.0, mode="nearest")
    return blurred[::2, ::2]


def _track_one(
    prev: np.ndarray,
    gx: np.ndarray,
    gy: np.ndarray,
    nxt: np.ndarray,
    point: np.ndarray,
    guess: np.ndarray,
    half: int,
) -> tuple[np.ndarray, bool]:
    h, w = prev.shape
    px, py = point

    if px < half or py < half or px > w - 1 - half or py > h - 1 - half:
        return guess, False

    ox, oy = np.meshgrid(np.arange(-half, half + 1, dtype=np.float64),
                         np.arange(-half, half + 1, dtype=np.float64))
    wx = px + ox
    wy = py + oy

    i_win = _bilinear(prev, wx, wy)
    ix = _bilinear(gx, wx, wy)
    iy = _bilinear(gy, wx, wy)

    gxx = float((ix * ix).sum())
    gxy = float((ix * iy).sum())
    gyy = float((iy * iy).sum())
    trace = gxx + gyy
    det = gxx * gyy - gxy * gxy
    min_eig = (trace - np.sqrt(max(trace * trace - 4.0 * det, 0.0))) / 2.0
    npix = (2 * half + 1) ** 2
    if min_eig / npix < _MIN_EIG:
        return guess, False

    v = guess.astype(np.float64).copy()
    for _ in range(_MAX_ITERS):
        qx = wx + v[0]
        qy = wy + v[1]
        if (qx.min() < 0 or qy.min() < 0
                or qx.max() > w - 1 or qy.max() > h - 1):
            return v, False
        diff = i_win - _bilinear(nxt, qx, qy)
        bx = float((ix * diff).sum())
        by = float((iy * diff).sum())
        dx = (gyy * bx - gxy * by) / det
        dy = (gxx * by - gxy * bx) / det
        v[0] += dx
        v[1] += dy
        if dx * dx + dy * dy < _CONVERGENCE * _CONVERGENCE:
            return v, True
    return v, True  # ran out of iterations but stayed in frame


def lk_flow(
    prev: GrayFrame,
    nxt: GrayFrame,
    corners: CornerSet,
    window: int = 35,
    pyramid_levels: int = 1,
) -> FlowField:
    """Track corners from prev to nxt.

    window is the odd side length of the matching window; pyramid_levels >= 1,
    where 1 means tracking at full resolution only. Untracked entries keep the
    last displacement estimate but are flagged false.
    """
    if window < 3 or window % 2 == 0:
        raise InvalidInputError(f"window must be odd and >= 3, got {window}")
    if pyramid_levels < 1:
        raise InvalidInputError(f"pyramid_levels must be >= 1, got {pyramid_levels}")
    if prev.data.shape != nxt.data.shape:
        raise InvalidInputError("frame sizes differ")

    half = window // 2

    prevs = [prev.as_float()]
    nxts = [nxt.as_float()]
    for _ in range(pyramid_levels - 1):
        if min(prevs[-1].shape) < 2 * window:
            break  # stop the pyramid before windows outgrow the image
        prevs.append(_downsample(prevs[-1]))
        nxts.append(_downsample(nxts[-1]))

    grads = []
    for level_img in prevs:
        grads.append((ndimage.sobel(level_img, axis=1, mode="nearest") / 8.0,
                      ndimage.sobel(level_img, axis=0, mode="nearest") / 8.0))

    n = len(corners)
    vectors = np.zeros((n, 2), dtype=np.float64)
    tracked = np.zeros(n, dtype=bool)

    for i in range(n):
        pt = corners.points[i]
        v = np.zeros(2)
        ok = False
        for level in range(len(prevs) - 1, -1, -1):
            scale = 2.0 ** level
            gx, gy = grads[level]
            v, ok = _track_one(prevs[level], gx, gy, nxts[level],
                               pt / scale, v, half)
            if level > 0:
                v = v * 2.0
            if not ok and level > 0:
                v = np.zeros(2)  # restart the finer level from scratch
        vectors[i] = v
        tracked[i] = ok

    return FlowField(points=corners.points.copy(), vectors=vectors,
                     tracked=tracked, frame_index=prev.index)


__all__ = ["FlowField", "lk_flow"]
