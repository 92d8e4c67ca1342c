"""Binarization and localization metrics for saliency maps.

Otsu thresholding turns a continuous heatmap into a foreground mask; IoU
and center-of-mass distance score that mask (or the raw map) against a
ground-truth segmentation.  Heatmap centers of mass are always taken on the
raw map before binarization; ground-truth centers on the binary mask.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensorops import DEFAULT_EPSILON, minmax_normalize

OTSU_BINS = 256


@dataclass(frozen=True)
class CenterOfMass:
    """Intensity-weighted centroid in pixel coordinates (x = column, y = row)."""

    x_c: float
    y_c: float


def quantize_256(map_2d, epsilon: float = DEFAULT_EPSILON) -> np.ndarray:
    """Min-max normalize then quantize to integer bins 0..255.

    The epsilon in the normalization keeps values strictly below 1, so
    floor(value * 256) never leaves the 8-bit range.  Constant maps land
    entirely in bin 0.
    """
    norm = minmax_normalize(np.asarray(map_2d, dtype=np.float64), epsilon)
    q = np.floor(norm * OTSU_BINS).astype(np.int64)
    return np.clip(q, 0, OTSU_BINS - 1)


def otsu_threshold(map_2d, epsilon: float = DEFAULT_EPSILON) -> tuple[int, np.ndarray]:
    """Binarize a 2-D map with Otsu's between-class-variance criterion.

    The map is normalized and quantized to 256 bins; the returned threshold
    t maximizes the between-class variance of the split {bins <= t} vs
    {bins > t}, ties resolved to the lowest t, and the mask is
    (quantized > t).  A constant map degenerates to threshold 0 and an
    all-zero mask.

    The argmax is decided in exact integer arithmetic: with class counts
    c0, c1 and intensity sums s0, s1, the between-class variance is
    proportional to (s0*c1 - s1*c0)^2 / (c0*c1), a ratio of integers.
    """
    arr = np.asarray(map_2d, dtype=np.float64)
    if arr.ndim != 2 or arr.size == 0:
        raise ValueError(f"expected a non-empty 2-D map, got shape {arr.shape}")
    q = quantize_256(arr, epsilon)
    hist = np.bincount(q.ravel(), minlength=OTSU_BINS)

    total_count = int(hist.sum())
    total_sum = int(np.dot(hist, np.arange(OTSU_BINS)))

    best_t = 0
    best_num = 0  # (s0*c1 - s1*c0)^2
    best_den = 1  # c0*c1
    c0 = 0
    s0 = 0
    for t in range(OTSU_BINS):
        c0 += int(hist[t])
        s0 += int(hist[t]) * t
        c1 = total_count - c0
        if c0 == 0 or c1 == 0:
            continue
        s1 = total_sum - s0
        num = (s0 * c1 - s1 * c0) ** 2
        den = c0 * c1
        # exact fraction comparison: num/den > best_num/best_den
        if num * best_den > best_num * den:
            best_num, best_den, best_t = num, den, t

    mask = (q > best_t).astype(np.uint8)
    return best_t, mask


def _check_binary(mask, name: str) -> np.ndarray:
    arr = np.asarray(mask)
    if not np.isin(arr, (0, 1)).all():
        raise ValueError(f"{name} must be strictly binary")
    return arr.astype(bool)


def iou(pred, truth) -> float:
    """Intersection over union, TP / (TP + FP + FN), of two binary masks.

    Both masks empty counts as perfect agreement (1.0); an empty prediction
    against a non-empty truth scores 0.0.
    """
    p = _check_binary(pred, "pred")
    t = _check_binary(truth, "truth")
    if p.shape != t.shape:
        raise ValueError(f"mask shapes differ: {p.shape} vs {t.shape}")
    tp = int(np.count_nonzero(p & t))
    union = int(np.count_nonzero(p | t))
    if union == 0:
        return 1.0
    return tp / union


def center_of_mass(map_2d, epsilon: float = DEFAULT_EPSILON) -> CenterOfMass:
    """Centroid of the min-max-normalized intensity of a 2-D map.

    Constant maps normalize to all zeros, where the centroid is undefined;
    those return the geometric center ((W-1)/2, (H-1)/2).
    """
    arr = np.asarray(map_2d, dtype=np.float64)
    if arr.ndim != 2 or arr.size == 0:
        raise ValueError(f"expected a non-empty 2-D map, got shape {arr.shape}")
    h, w = arr.shape
    intensity = minmax_normalize(arr, epsilon)
    total = intensity.sum()
    if total == 0.0:
        return CenterOfMass((w - 1) / 2.0, (h - 1) / 2.0)
    cols = np.arange(w, dtype=np.float64)
    rows = np.arange(h, dtype=np.float64)
    x_c = float((intensity * cols[None, :]).sum() / total)
    y_c = float((intensity * rows[:, None]).sum() / total)
    return CenterOfMass(x_c, y_c)


def com_distance(a: CenterOfMass, b: CenterOfMass) -> float:
    """Euclidean distance between two centers of mass, in pixels."""
    return float(np.hypot(a.x_c - b.x_c, a.y_c - b.y_c))
