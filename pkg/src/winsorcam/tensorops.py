"""Dense array primitives shared by the whole pipeline.

All maps and feature tensors are plain float64 numpy arrays in row-major
order.  Everything here is a pure function: no global state, safe to call
concurrently.

Coordinate convention for resampling: output pixel centers are mapped to
source coordinates with the half-pixel-center rule

    src = (dst + 0.5) * (in_size / out_size) - 0.5

(the ``align_corners=False`` convention of the common image libraries).
Bundle producers that want byte-matched maps must resample the same way.
"""

from __future__ import annotations

import math

import numpy as np

# Default denominator guard for min-max normalization.
DEFAULT_EPSILON = 1e-6


def _as_map(map_2d, name: str = "map") -> np.ndarray:
    arr = np.asarray(map_2d, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.size == 0:
        raise ValueError(f"{name} must be non-empty, got shape {arr.shape}")
    return arr


def _source_grid(n_in: int, n_out: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Half-pixel source coordinates split into (lo index, hi index, frac)."""
    scale = n_in / n_out
    src = (np.arange(n_out, dtype=np.float64) + 0.5) * scale - 0.5
    lo = np.floor(src).astype(np.int64)
    frac = src - lo
    lo_c = np.clip(lo, 0, n_in - 1)
    hi_c = np.clip(lo + 1, 0, n_in - 1)
    return lo_c, hi_c, frac


def interp_bilinear(map_2d, h_out: int, w_out: int) -> np.ndarray:
    """Resample a 2-D map to (h_out, w_out) with bilinear interpolation.

    Edge samples replicate the border row/column, so the output is always a
    convex combination of input values: no overshoot beyond the input's
    min/max, and constant maps stay exactly constant.
    """
    arr = _as_map(map_2d)
    if h_out < 1 or w_out < 1:
        raise ValueError(f"output size must be positive, got {(h_out, w_out)}")
    h_in, w_in = arr.shape
    if (h_out, w_out) == (h_in, w_in):
        return arr.copy()

    y0, y1, ty = _source_grid(h_in, h_out)
    x0, x1, tx = _source_grid(w_in, w_out)

    top = arr[y0][:, x0] * (1.0 - tx) + arr[y0][:, x1] * tx
    bot = arr[y1][:, x0] * (1.0 - tx) + arr[y1][:, x1] * tx
    return top * (1.0 - ty)[:, None] + bot * ty[:, None]


def interp_nearest(map_2d, h_out: int, w_out: int) -> np.ndarray:
    """Resample a 2-D map to (h_out, w_out) with nearest-neighbor sampling.

    Each output pixel takes the source cell containing its mapped center
    (ties fall to the higher index).  Integer upscaling by k replicates each
    source cell into a k-by-k block.
    """
    arr = _as_map(map_2d)
    if h_out < 1 or w_out < 1:
        raise ValueError(f"output size must be positive, got {(h_out, w_out)}")
    h_in, w_in = arr.shape
    if (h_out, w_out) == (h_in, w_in):
        return arr.copy()

    rows = np.floor((np.arange(h_out) + 0.5) * (h_in / h_out)).astype(np.int64)
    cols = np.floor((np.arange(w_out) + 0.5) * (w_in / w_out)).astype(np.int64)
    rows = np.clip(rows, 0, h_in - 1)
    cols = np.clip(cols, 0, w_in - 1)
    return arr[rows][:, cols]


def minmax_normalize(map_nd, epsilon: float = DEFAULT_EPSILON) -> np.ndarray:
    """Rescale values to (value - min) / (max - min + epsilon).

    The epsilon keeps the division defined for constant inputs, which map
    to all zeros.  Output lies in [0, 1).
    """
    arr = np.asarray(map_nd, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("cannot normalize an empty array")
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    lo = arr.min()
    return (arr - lo) / (arr.max() - lo + epsilon)


def quantile_linear(values, p: float) -> float:
    """Linear-interpolation quantile of `values` at percentile p in [0, 100].

    Sorts ascending and interpolates at fractional rank (p/100) * (n - 1),
    so the result is continuous and non-decreasing in p, with p=0 giving the
    minimum and p=100 the maximum.
    """
    arr = np.asarray(values, dtype=np.float64).ravel()
    if arr.size == 0:
        raise ValueError("quantile of an empty sequence is undefined")
    if not 0.0 <= p <= 100.0:
        raise ValueError(f"percentile must lie in [0, 100], got {p}")
    srt = np.sort(arr)
    rank = (p / 100.0) * (srt.size - 1)
    lo = math.floor(rank)
    hi = min(lo + 1, srt.size - 1)
    frac = rank - lo
    return float(srt[lo] + frac * (srt[hi] - srt[lo]))
