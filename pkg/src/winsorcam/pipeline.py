"""Layer-weighted saliency fusion with percentile-clipped importances.

The stages, in order:

1. per-layer Grad-CAM maps (module `gradcam`)
2. spatial alignment of every map to the largest layer resolution
3. one scalar importance per layer: ReLU(mean or max of its filter weights)
4. one-sided upper clipping of the positive importances at their p-th
   linear-interpolation percentile (threshold T)
5. affine renormalization of the clipped positive scores into [L, H]
   (default [0.1, 1.0]), zeros staying exactly zero
6. weighted sum of the aligned maps

The percentile p is the human-facing knob: low p flattens dominant (often
deep) layers, high p keeps them.  Zero-importance layers contribute exactly
nothing at any p.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .gradcam import LayerGradCam, all_layer_gradcams
from .tensorops import interp_bilinear, interp_nearest, quantile_linear

AGGREGATIONS = ("mean", "max")
INTERPOLATIONS = ("bilinear", "nearest")
DEFAULT_BOUNDS = (0.1, 1.0)
P_GRID_DEFAULT = tuple(float(p) for p in range(0, 101, 10))


class NoPositiveImportanceWarning(UserWarning):
    """No layer has positive importance for the class: the fused map is zero."""


@dataclass
class ImportanceVector:
    """Per-layer importance scores at every pipeline stage."""

    raw: np.ndarray
    winsorized: np.ndarray
    normalized: np.ndarray
    threshold: float
    p: float
    aggregation: str
    bounds: tuple[float, float]


@dataclass
class WinsorCamResult:
    fused: np.ndarray  # (H, W), >= 0
    per_layer_maps: list[np.ndarray]  # aligned to (H, W)
    importance: ImportanceVector
    common_size: tuple[int, int]


def _check_aggregation(aggregation: str) -> str:
    if aggregation not in AGGREGATIONS:
        raise ValueError(f"aggregation must be one of {AGGREGATIONS}, got {aggregation!r}")
    return aggregation


def _check_interp(interp: str) -> str:
    if interp not in INTERPOLATIONS:
        raise ValueError(f"interp must be one of {INTERPOLATIONS}, got {interp!r}")
    return interp


def aggregate_importance(cams: list[LayerGradCam], aggregation: str = "mean") -> np.ndarray:
    """Collapse each layer's filter weights to ReLU(mean) or ReLU(max)."""
    _check_aggregation(aggregation)
    if not cams:
        raise ValueError("need at least one layer")
    if aggregation == "mean":
        vals = [cam.alpha.mean() for cam in cams]
    else:
        vals = [cam.alpha.max() for cam in cams]
    return np.maximum(np.array(vals, dtype=np.float64), 0.0)


def winsorize(gamma, p: float) -> tuple[np.ndarray, float]:
    """Clip positive importances above their p-th percentile; keep zeros zero.

    The threshold is computed over the positive entries only, so inactive
    layers cannot drag it down.  With no positive entries at all the vector
    is returned as zeros and the threshold reported as 0.
    """
    if not 0.0 <= p <= 100.0:
        raise ValueError(f"percentile must lie in [0, 100], got {p}")
    g = np.asarray(gamma, dtype=np.float64)
    positive = g[g > 0]
    if positive.size == 0:
        return np.zeros_like(g), 0.0
    threshold = quantile_linear(positive, p)
    clipped = np.where(g > 0, np.minimum(g, threshold), 0.0)
    return clipped, threshold


def normalize_importance(
    clipped,
    gamma_positive_min: float,
    gamma_positive_max: float,
    bounds: tuple[float, float] = DEFAULT_BOUNDS,
) -> np.ndarray:
    """Affinely map positive clipped scores into [L, H]; zeros stay zero.

    The reference range (gamma_positive_min/max) is the pre-clipping
    positive set, so for p < 100 the top of [L, H] may stay unused.  A
    degenerate range (single distinct positive value) assigns H to every
    positive layer.
    """
    low, high = bounds
    if not low < high:
        raise ValueError(f"bounds must satisfy L < H, got {bounds}")
    if gamma_positive_min > gamma_positive_max:
        raise ValueError("gamma_positive_min exceeds gamma_positive_max")
    c = np.asarray(clipped, dtype=np.float64)
    out = np.zeros_like(c)
    pos = c > 0
    if not pos.any():
        return out
    if gamma_positive_min == gamma_positive_max:
        out[pos] = high
        return out
    span = gamma_positive_max - gamma_positive_min
    scaled = low + (c[pos] - gamma_positive_min) / span * (high - low)
    out[pos] = np.clip(scaled, low, high)  # guard the last-ulp spill only
    return out


def layer_importance(
    cams: list[LayerGradCam],
    p: float,
    aggregation: str = "mean",
    bounds: tuple[float, float] = DEFAULT_BOUNDS,
    range_from_clipped: bool = False,
) -> ImportanceVector:
    """Stages 3-5 in one call: aggregate, winsorize, renormalize.

    `range_from_clipped=True` switches the normalization reference range to
    the post-clipping values (so the clipped maximum always reaches H);
    default False keeps the pre-clipping positive range.
    """
    raw = aggregate_importance(cams, aggregation)
    clipped, threshold = winsorize(raw, p)
    positive = raw[raw > 0]
    if positive.size == 0:
        warnings.warn(
            NoPositiveImportanceWarning("all layer importances are zero; fused map will be all zeros"),
            stacklevel=2,
        )
        normalized = np.zeros_like(raw)
    else:
        ref = clipped[clipped > 0] if range_from_clipped else positive
        normalized = normalize_importance(clipped, float(ref.min()), float(ref.max()), bounds)
    return ImportanceVector(raw, clipped, normalized, float(threshold), float(p), aggregation, bounds)


def common_resolution(cams: list[LayerGradCam]) -> tuple[int, int]:
    return (
        max(cam.map.shape[0] for cam in cams),
        max(cam.map.shape[1] for cam in cams),
    )


def resample(map_2d, h_out: int, w_out: int, interp: str) -> np.ndarray:
    _check_interp(interp)
    if interp == "bilinear":
        return interp_bilinear(map_2d, h_out, w_out)
    return interp_nearest(map_2d, h_out, w_out)


def interpolate_maps(cams: list[LayerGradCam], interp: str = "bilinear") -> tuple[list[np.ndarray], tuple[int, int]]:
    """Upsample every layer map to the shared (max H, max W) canvas."""
    if not cams:
        raise ValueError("need at least one layer")
    h, w = common_resolution(cams)
    return [resample(cam.map, h, w, interp) for cam in cams], (h, w)


def fuse_weighted(maps: list[np.ndarray], weights) -> np.ndarray:
    """Weighted sum of aligned maps, accumulated in fixed layer order."""
    w = np.asarray(weights, dtype=np.float64)
    if len(maps) != w.size:
        raise ValueError(f"{len(maps)} maps but {w.size} weights")
    fused = np.zeros_like(maps[0])
    for weight, layer_map in zip(w, maps):
        fused += weight * layer_map
    return fused


def fuse(cams: list[LayerGradCam], importance: ImportanceVector, interp: str = "bilinear") -> WinsorCamResult:
    """Stage 6: align all maps and sum them under the normalized weights."""
    if len(cams) != importance.normalized.size:
        raise ValueError(f"{len(cams)} layers but {importance.normalized.size} importance weights")
    maps, size = interpolate_maps(cams, interp)
    fused = fuse_weighted(maps, importance.normalized)
    return WinsorCamResult(fused, maps, importance, size)


def winsor_cam(
    source,
    class_index: int,
    p: float,
    aggregation: str = "mean",
    interp: str = "bilinear",
    bounds: tuple[float, float] = DEFAULT_BOUNDS,
    range_from_clipped: bool = False,
) -> WinsorCamResult:
    """Full pipeline from a traced run or bundle to the fused heatmap."""
    cams = all_layer_gradcams(source, class_index)
    importance = layer_importance(cams, p, aggregation, bounds, range_from_clipped)
    return fuse(cams, importance, interp)


def naive_mean_baseline(cams: list[LayerGradCam], interp: str = "bilinear") -> np.ndarray:
    """Unweighted mean of the aligned per-layer maps."""
    maps, _ = interpolate_maps(cams, interp)
    total = np.zeros_like(maps[0])
    for layer_map in maps:
        total += layer_map
    return total / len(maps)


def final_layer_baseline(cams: list[LayerGradCam], interp: str = "bilinear") -> np.ndarray:
    """Deepest layer's Grad-CAM map, aligned to the common canvas."""
    if not cams:
        raise ValueError("need at least one layer")
    h, w = common_resolution(cams)
    return resample(cams[-1].map, h, w, interp)
