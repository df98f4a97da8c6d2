"""Recursive feature elimination with a linear machine, plus rank consensus.

The elimination criterion is the squared weight component of a linear SVM:
retrain on what remains, drop the weakest coordinate, repeat. A feature's
rank is the reverse of its elimination time (rank 1 survived longest).
Consensus over the per-class binary rankings keeps the m features with the
smallest rank sum.
"""

from __future__ import annotations

import numpy as np

from ..errors import DegenerateTrainingError, InvalidInputError
from .svm import _smo


def _as_binary(y) -> np.ndarray:
    arr = np.asarray(y)
    uniq = sorted(set(arr.tolist()))
    if len(uniq) != 2:
        raise DegenerateTrainingError(f"binary ranking needs 2 classes, got {len(uniq)}")
    return np.where(arr == uniq[1], 1.0, -1.0)


def rfe_rank(X: np.ndarray, y, C: float = 1.0) -> np.ndarray:
    """Rank features 1 (kept longest) .. d (dropped first) for a binary task."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise InvalidInputError("X must be a nonempty 2-D matrix")
    if not np.isfinite(X).all():
        raise InvalidInputError("X contains non-finite values")
    ypm = _as_binary(y)
    if ypm.size != X.shape[0]:
        raise InvalidInputError("X and y lengths differ")

    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    Xs = (X - mu) / np.where(sd > 1e-12, sd, 1.0)

    d = X.shape[1]
    rank = np.zeros(d, dtype=np.intp)
    remaining = list(range(d))
    while remaining:
        if len(remaining) == 1:
            rank[remaining[0]] = 1
            break
        sub = Xs[:, remaining]
        K = sub @ sub.T
        alpha, _, _ = _smo(K, ypm, C)
        w = sub.T @ (alpha * ypm)
        drop = int(np.argmin(w ** 2))  # first index wins ties
        rank[remaining[drop]] = len(remaining)
        remaining.pop(drop)
    return rank


def ova_rankings(X: np.ndarray, y, C: float = 1.0) -> list[np.ndarray]:
    """One RFE ranking per sorted class label, class-versus-rest."""
    labels = np.array([str(v) for v in y])
    classes = sorted(set(labels.tolist()))
    if len(classes) < 2:
        raise DegenerateTrainingError("need at least two classes to rank")
    out = []
    for c in classes:
        ypm = np.where(labels == c, 1.0, -1.0)
        out.append(rfe_rank(X, ypm, C=C))
    return out


def consensus_select(rankings: list[np.ndarray], m: int) -> np.ndarray:
    """Boolean mask keeping the m features with the best summed rank."""
    if not rankings:
        raise InvalidInputError("no rankings given")
    stack = np.vstack([np.asarray(r, dtype=np.float64) for r in rankings])
    if stack.ndim != 2:
        raise InvalidInputError("rankings must share one schema")
    d = stack.shape[1]
    if not 1 <= m <= d:
        raise InvalidInputError(f"m must be in [1, {d}], got {m}")
    totals = stack.sum(axis=0)
    order = np.lexsort((np.arange(d), totals))  # ties fall to the lower index
    mask = np.zeros(d, dtype=bool)
    mask[order[:m]] = True
    return mask
