"""The 54-number window descriptor.

Layout, frozen (see docs/formats.md):
  0..27   per channel (ax ay az gx gy gz speed): mean, std, rms, mad
  28..41  per channel: spectral energy, power spectral entropy
  42..53  per acceleration pair (xy, xz, yz): mean, std, rms, mad of the
          elementwise product of the two mean-centered axes

std is the population standard deviation, mad the mean absolute deviation
about the mean. Spectral quantities come from the magnitude-squared DFT over
positive frequencies only; the DC bin is excluded so constant signals carry
zero spectral content.
"""

from __future__ import annotations

import numpy as np

from ..errors import InvalidInputError
from .preprocess import RawWindow
from .stream import CHANNEL_NAMES

_STATS = ("mean", "std", "rms", "mad")
_PAIRS = (("ax", "ay", 0, 1), ("ax", "az", 0, 2), ("ay", "az", 1, 2))


def _build_names() -> tuple[str, ...]:
    names = [f"{ch}_{st}" for ch in CHANNEL_NAMES for st in _STATS]
    for ch in CHANNEL_NAMES:
        names.append(f"{ch}_spec_energy")
        names.append(f"{ch}_spec_entropy")
    for a, b, _, _ in _PAIRS:
        names.extend(f"{a}{b}_prod_{st}" for st in _STATS)
    return tuple(names)


FEATURE_NAMES = _build_names()
N_FEATURES = len(FEATURE_NAMES)
assert N_FEATURES == 54


def _time_stats(x: np.ndarray) -> tuple[float, float, float, float]:
    mu = float(x.mean())
    centered = x - mu
    std = float(np.sqrt((centered ** 2).mean()))
    rms = float(np.sqrt((x ** 2).mean()))
    mad = float(np.abs(centered).mean())
    return mu, std, rms, mad


def _spectral(x: np.ndarray) -> tuple[float, float]:
    n = x.size
    power = np.abs(np.fft.rfft(x)) ** 2
    tail = power[1:]  # DC excluded
    total = float(tail.sum())
    energy = total / n
    if total <= 0.0:
        return energy, 0.0
    q = tail / total
    nz = q[q > 0]
    entropy = float(-(nz * np.log2(nz)).sum())
    return energy, entropy


def extract_features(window) -> np.ndarray:
    """54 descriptors for one (n, 7) window; accepts RawWindow or array."""
    data = window.data if isinstance(window, RawWindow) else np.asarray(window, dtype=np.float64)
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[1] != 7:
        raise InvalidInputError(f"window must be (n, 7), got {data.shape}")
    if data.shape[0] < 4:
        raise InvalidInputError("window too short for spectral statistics")
    if not np.isfinite(data).all():
        raise InvalidInputError("window contains non-finite samples")

    out = np.empty(N_FEATURES)
    for ch in range(7):
        out[4 * ch:4 * ch + 4] = _time_stats(data[:, ch])
    for ch in range(7):
        out[28 + 2 * ch], out[28 + 2 * ch + 1] = _spectral(data[:, ch])
    base = 42
    for _, _, i, j in _PAIRS:
        a = data[:, i] - data[:, i].mean()
        b = data[:, j] - data[:, j].mean()
        out[base:base + 4] = _time_stats(a * b)
        base += 4
    return out


def features_matrix(windows: list) -> np.ndarray:
    """Stack per-window feature vectors into an (m, 54) design matrix."""
    if not windows:
        raise InvalidInputError("no windows to featurize")
    return np.vstack([extract_features(w) for w in windows])
