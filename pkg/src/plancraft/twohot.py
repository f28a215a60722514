"""Two-hot speed encoding: weight split across the two bracketing bins."""

from __future__ import annotations

import numpy as np

DEFAULT_SPEED_BINS = tuple(np.linspace(0.0, 20.0, 8))


def validate_bins(bins) -> np.ndarray:
    b = np.asarray(bins, dtype=float)
    if b.ndim != 1 or len(b) < 2:
        raise ValueError("speed bins: need K >= 2 values")
    if np.any(np.diff(b) <= 0):
        raise ValueError("speed bins: must be strictly ascending")
    return b


def two_hot_encode(speed: float, bins):
    """Encode a speed as interpolation weights on its two bracketing bins.

    Out-of-range speeds clamp to the boundary bin (single-hot); the second
    return value flags that clamping happened.
    """
    b = validate_bins(bins)
    k = len(b)
    out = np.zeros(k)
    if speed <= b[0]:
        out[0] = 1.0
        return out, speed < b[0]
    if speed >= b[-1]:
        out[-1] = 1.0
        return out, speed > b[-1]
    hi = int(np.searchsorted(b, speed, side="right"))
    lo = hi - 1
    alpha = (speed - b[lo]) / (b[hi] - b[lo])
    out[lo] = 1.0 - alpha
    out[hi] = alpha
    return out, False


def two_hot_decode(probs, bins) -> float:
    """Expected speed under the bin distribution: sum_k p_k * bin_k."""
    b = validate_bins(bins)
    p = np.asarray(probs, dtype=float)
    if p.shape != b.shape:
        raise ValueError("probs/bins length mismatch")
    return float(p @ b)
