"""Per-layer Grad-CAM: gradient-pooled filter weights, weighted activation sum, ReLU.

`all_layer_gradcams` accepts any source exposing
``activation_gradient_pairs(class_index)`` (a traced micro-CNN run or a
loaded saliency bundle) and produces one map per conv layer in network
order.  Layers whose gradients vanish are kept with an all-zero map; the
downstream importance stages treat zero as "does not contribute", not as
missing data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass
class LayerGradCam:
    """Filter weights and class-specific localization map of one conv layer."""

    layer_index: int
    alpha: np.ndarray  # (C,) spatially averaged gradients per channel
    map: np.ndarray  # (H, W), >= 0
    layer_name: str = ""


def layer_gradcam(activations, gradients, layer_index: int = 0, layer_name: str = "") -> LayerGradCam:
    """Grad-CAM of a single layer from its activation/gradient tensors.

    alpha[k] is the exact spatial mean of gradients[k] (summed with
    compensated arithmetic, so permuting the spatial order cannot change
    the result); the map is ReLU(sum_k alpha[k] * activations[k]).
    """
    act = np.asarray(activations, dtype=np.float64)
    grad = np.asarray(gradients, dtype=np.float64)
    if act.ndim != 3 or act.shape != grad.shape:
        raise ValueError(f"expected matching (C, H, W) tensors, got {act.shape} vs {grad.shape}")
    spatial = act.shape[1] * act.shape[2]
    alpha = np.array([math.fsum(g.ravel().tolist()) / spatial for g in grad], dtype=np.float64)
    weighted = np.einsum("k,kuv->uv", alpha, act)
    return LayerGradCam(layer_index, alpha, np.maximum(weighted, 0.0), layer_name)


def all_layer_gradcams(source, class_index: int) -> list[LayerGradCam]:
    """Grad-CAM for every conv layer of a traced run or bundle, in network order."""
    pairs = source.activation_gradient_pairs(class_index)
    if not pairs:
        raise ValueError("source has no conv layers")
    names = getattr(source, "layer_names", None) or [""] * len(pairs)
    return [
        layer_gradcam(act, grad, layer_index=i, layer_name=names[i])
        for i, (act, grad) in enumerate(pairs)
    ]
