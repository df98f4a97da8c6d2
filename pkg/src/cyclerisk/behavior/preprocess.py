"""Signal conditioning ahead of feature extraction.

Recordings start and end with handling noise (pocketing the phone, mounting
it), so 10 seconds are cut from each end. What remains is re-gridded onto an
exact 10 Hz lattice so window arithmetic downstream is sample-count based.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InsufficientDataError, InvalidInputError
from .stream import SensorStream

TRIM_SECONDS = 10.0
GRID_RATE = 10.0
WINDOW_SIZE = 100
WINDOW_STRIDE = 50

_FIELDS = ("ax", "ay", "az", "gx", "gy", "gz", "speed", "lat", "lon", "acc")


def preprocess(stream: SensorStream, trim: float = TRIM_SECONDS,
               rate: float = GRID_RATE) -> SensorStream:
    """Trim both ends and resample to a uniform lattice.

    Each grid slot takes the nearest sample when one lies strictly within
    half a period; otherwise the previous sample is held and the slot is
    flagged in gap_mask. Raises when fewer than one window of samples
    survives the trim.
    """
    if trim <= 0 or rate <= 0:
        raise InvalidInputError("trim and rate must be positive")
    t = stream.t
    t_start = t[0] + trim
    t_end = t[-1] - trim
    span = t_end - t_start
    n = int(np.floor(span * rate + 1e-9)) + 1 if span >= 0 else 0
    if n < WINDOW_SIZE:
        raise InsufficientDataError(
            f"{n} samples remain after trimming; need at least {WINDOW_SIZE}")

    grid = t_start + np.arange(n) / rate
    right = np.searchsorted(t, grid)
    left = np.clip(right - 1, 0, t.size - 1)
    right = np.clip(right, 0, t.size - 1)
    pick_right = np.abs(t[right] - grid) < np.abs(t[left] - grid)
    nearest = np.where(pick_right, right, left)

    # strict half-period tolerance: a sample exactly 50 ms away does not count
    tol = 0.5 / rate
    within = np.abs(t[nearest] - grid) < tol
    held = np.clip(np.searchsorted(t, grid, side="right") - 1, 0, t.size - 1)
    chosen = np.where(within, nearest, held)

    kw = {name: getattr(stream, name)[chosen] for name in _FIELDS}
    return SensorStream(t=grid, **kw, gap_mask=~within)


@dataclass(frozen=True)
class RawWindow:
    """One analysis window: sample start offset plus its (size, 7) channels."""

    start: int
    data: np.ndarray


def make_windows(stream: SensorStream, size: int = WINDOW_SIZE,
                 stride: int = WINDOW_STRIDE) -> list[RawWindow]:
    """Sliding windows over the channel matrix, half-overlapped by default."""
    if size < 2 or stride < 1:
        raise InvalidInputError("window size must be >= 2 and stride >= 1")
    n = len(stream)
    if n < size:
        raise InsufficientDataError(f"stream has {n} samples; one window needs {size}")
    channels = stream.channel_matrix()
    count = (n - size) // stride + 1
    return [RawWindow(start=k * stride, data=channels[k * stride:k * stride + size])
            for k in range(count)]
