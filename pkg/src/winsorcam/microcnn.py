"""Small deterministic CNN with manual forward and backward passes.

Gives the rest of the pipeline a self-contained source of per-layer
activations and class-logit gradients without any deep-learning framework.
Architecture is a plain stack: Conv2d 3x3 (stride 1, pad 1) -> ReLU, with
an optional MaxPool 2x2 after a layer, ending in GlobalAvgPool -> Dense.

The retained activation of each conv layer is its post-ReLU output (the
common hooking point of saliency tooling), and gradients are taken with
respect to exactly that retained tensor: perturbing one activation value
and re-running the layers downstream reproduces them by finite differences.

All arithmetic is float64 with fixed reduction order, so identical inputs
give bit-identical traces and gradients across runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

_MASK64 = (1 << 64) - 1


class SplitMix64:
    """Tiny 64-bit PRNG (splitmix64) for platform-independent weight init."""

    __slots__ = ("_state",)

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_uint64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def next_below(self, n: int) -> int:
        return self.next_uint64() % n

    def uniform(self, low: float, high: float) -> float:
        u = self.next_uint64() >> 11  # 53 random mantissa bits
        return low + (u * 2.0**-53) * (high - low)

    def fill_uniform(self, shape: tuple[int, ...], low: float, high: float) -> np.ndarray:
        flat = [self.uniform(low, high) for _ in range(int(np.prod(shape)))]
        return np.array(flat, dtype=np.float64).reshape(shape)


@dataclass(frozen=True)
class ConvSpec:
    """One conv stage: 3x3 kernel, stride 1, pad 1, ReLU, optional 2x2 maxpool."""

    in_channels: int
    out_channels: int
    pool: bool = False


@dataclass
class MicroCnn:
    """Stack of conv stages followed by GlobalAvgPool -> Dense."""

    conv_specs: tuple[ConvSpec, ...]
    conv_weights: list[np.ndarray]  # each (out, in, 3, 3)
    conv_biases: list[np.ndarray]  # each (out,)
    dense_weight: np.ndarray  # (num_classes, last_out)
    dense_bias: np.ndarray  # (num_classes,)
    seed: int | None = None

    def __post_init__(self):
        if len(self.conv_specs) < 2:
            raise ValueError("need at least 2 conv layers for multi-layer aggregation")
        for i, spec in enumerate(self.conv_specs):
            if i > 0 and spec.in_channels != self.conv_specs[i - 1].out_channels:
                raise ValueError(
                    f"layer {i} expects {spec.in_channels} input channels but layer "
                    f"{i - 1} produces {self.conv_specs[i - 1].out_channels}"
                )
            if self.conv_weights[i].shape != (spec.out_channels, spec.in_channels, 3, 3):
                raise ValueError(f"layer {i} weight shape {self.conv_weights[i].shape} does not match spec")
            if self.conv_biases[i].shape != (spec.out_channels,):
                raise ValueError(f"layer {i} bias shape {self.conv_biases[i].shape} does not match spec")
        last = self.conv_specs[-1].out_channels
        if self.dense_weight.shape[1] != last:
            raise ValueError(f"dense weight expects {self.dense_weight.shape[1]} features, conv stack produces {last}")
        if self.dense_bias.shape != (self.dense_weight.shape[0],):
            raise ValueError("dense bias length does not match class count")

    @property
    def in_channels(self) -> int:
        return self.conv_specs[0].in_channels

    @property
    def num_classes(self) -> int:
        return self.dense_weight.shape[0]

    @property
    def num_conv_layers(self) -> int:
        return len(self.conv_specs)

    @property
    def layer_names(self) -> list[str]:
        return [f"conv{i + 1}" for i in range(len(self.conv_specs))]

    @classmethod
    def initialize(cls, conv_specs: tuple[ConvSpec, ...], num_classes: int, seed: int) -> "MicroCnn":
        """Seeded uniform init in [-1/sqrt(fan_in), 1/sqrt(fan_in)] per layer."""
        rng = SplitMix64(seed)
        weights, biases = [], []
        for spec in conv_specs:
            bound = 1.0 / math.sqrt(spec.in_channels * 9)
            weights.append(rng.fill_uniform((spec.out_channels, spec.in_channels, 3, 3), -bound, bound))
            biases.append(rng.fill_uniform((spec.out_channels,), -bound, bound))
        fan_in = conv_specs[-1].out_channels
        bound = 1.0 / math.sqrt(fan_in)
        dense_w = rng.fill_uniform((num_classes, fan_in), -bound, bound)
        dense_b = rng.fill_uniform((num_classes,), -bound, bound)
        return cls(tuple(conv_specs), weights, biases, dense_w, dense_b, seed=seed)


@dataclass
class ForwardTrace:
    """Retained per-layer state of one inference pass.

    `activations` are the post-ReLU conv outputs (one per conv layer) and
    `logits` the raw class scores.  The remaining fields carry what the
    backward pass needs: pre-ReLU values, argmax indices of each maxpool,
    and the spatial size of the tensor entering global average pooling.
    """

    activations: list[np.ndarray]
    logits: np.ndarray
    pre_activations: list[np.ndarray] = field(repr=False, default_factory=list)
    pool_indices: list[np.ndarray | None] = field(repr=False, default_factory=list)
    feature_dims: tuple[int, int] = (0, 0)


def _conv3x3(weight: np.ndarray, bias: np.ndarray, x: np.ndarray) -> np.ndarray:
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    win = sliding_window_view(xp, (3, 3), axis=(1, 2))  # (Cin, H, W, 3, 3)
    return np.einsum("oikl,iuvkl->ouv", weight, win) + bias[:, None, None]


def _conv3x3_backward_input(weight: np.ndarray, g_pre: np.ndarray) -> np.ndarray:
    gp = np.pad(g_pre, ((0, 0), (2, 2), (2, 2)))
    win = sliding_window_view(gp, (3, 3), axis=(1, 2))  # (Cout, H+2, W+2, 3, 3)
    flipped = weight[:, :, ::-1, ::-1]
    g_xp = np.einsum("oikl,ouvkl->iuv", flipped, win)
    return g_xp[:, 1:-1, 1:-1]


def _maxpool2x2(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    c, h, w = a.shape
    h2, w2 = h // 2, w // 2
    if h2 == 0 or w2 == 0:
        raise ValueError(f"map {a.shape[1:]} too small for 2x2 pooling")
    win = a[:, : h2 * 2, : w2 * 2].reshape(c, h2, 2, w2, 2).transpose(0, 1, 3, 2, 4).reshape(c, h2, w2, 4)
    idx = win.argmax(axis=3)  # first max in window scan order: deterministic
    out = np.take_along_axis(win, idx[..., None], axis=3)[..., 0]
    return out, idx


def _maxpool2x2_backward(g_out: np.ndarray, idx: np.ndarray, act_shape: tuple[int, ...]) -> np.ndarray:
    c, h, w = act_shape
    h2, w2 = g_out.shape[1], g_out.shape[2]
    g_win = np.zeros((c, h2, w2, 4), dtype=np.float64)
    np.put_along_axis(g_win, idx[..., None], g_out[..., None], axis=3)
    g = g_win.reshape(c, h2, w2, 2, 2).transpose(0, 1, 3, 2, 4).reshape(c, h2 * 2, w2 * 2)
    if (h, w) != (h2 * 2, w2 * 2):  # odd input rows/cols never reached the pool
        full = np.zeros((c, h, w), dtype=np.float64)
        full[:, : h2 * 2, : w2 * 2] = g
        g = full
    return g


def forward(model: MicroCnn, image) -> ForwardTrace:
    """Run inference, retaining every conv layer's post-ReLU activation."""
    x = np.asarray(image, dtype=np.float64)
    if x.ndim != 3 or x.shape[0] != model.in_channels:
        raise ValueError(f"expected image of shape ({model.in_channels}, H, W), got {x.shape}")

    activations: list[np.ndarray] = []
    pres: list[np.ndarray] = []
    pool_indices: list[np.ndarray | None] = []
    for li, spec in enumerate(model.conv_specs):
        pre = _conv3x3(model.conv_weights[li], model.conv_biases[li], x)
        act = np.maximum(pre, 0.0)
        pres.append(pre)
        activations.append(act)
        if spec.pool:
            x, idx = _maxpool2x2(act)
            pool_indices.append(idx)
        else:
            x = act
            pool_indices.append(None)

    pooled = x.mean(axis=(1, 2))
    logits = model.dense_weight @ pooled + model.dense_bias
    return ForwardTrace(
        activations=activations,
        logits=logits,
        pre_activations=pres,
        pool_indices=pool_indices,
        feature_dims=(x.shape[1], x.shape[2]),
    )


def forward_from(model: MicroCnn, layer_index: int, activation: np.ndarray) -> np.ndarray:
    """Logits from re-running only the layers downstream of one activation.

    `activation` replaces the retained post-ReLU output of `layer_index`;
    the remaining stages (its optional pool, the later conv layers, and the
    head) run unchanged.  This is the forward pass a finite-difference
    probe of the activation gradients must use.
    """
    n = model.num_conv_layers
    if not 0 <= layer_index < n:
        raise ValueError(f"layer index {layer_index} out of range [0, {n})")
    x = np.asarray(activation, dtype=np.float64)
    if model.conv_specs[layer_index].pool:
        x, _ = _maxpool2x2(x)
    for li in range(layer_index + 1, n):
        pre = _conv3x3(model.conv_weights[li], model.conv_biases[li], x)
        act = np.maximum(pre, 0.0)
        x = _maxpool2x2(act)[0] if model.conv_specs[li].pool else act
    pooled = x.mean(axis=(1, 2))
    return model.dense_weight @ pooled + model.dense_bias


def _backward(model: MicroCnn, trace: ForwardTrace, class_index: int) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Gradients of one logit w.r.t. every post-ReLU and pre-ReLU conv map."""
    if not 0 <= class_index < model.num_classes:
        raise ValueError(f"class index {class_index} out of range [0, {model.num_classes})")
    n = model.num_conv_layers
    fh, fw = trace.feature_dims
    c_last = model.conv_specs[-1].out_channels
    row = model.dense_weight[class_index] / (fh * fw)
    g_x = np.broadcast_to(row[:, None, None], (c_last, fh, fw)).astype(np.float64).copy()

    post_grads = [np.empty(0)] * n
    pre_grads = [np.empty(0)] * n
    for li in reversed(range(n)):
        if model.conv_specs[li].pool:
            g_act = _maxpool2x2_backward(g_x, trace.pool_indices[li], trace.activations[li].shape)
        else:
            g_act = g_x
        post_grads[li] = g_act
        pre_grads[li] = np.where(trace.pre_activations[li] > 0.0, g_act, 0.0)
        if li > 0:
            g_x = _conv3x3_backward_input(model.conv_weights[li], pre_grads[li])
    return post_grads, pre_grads


def backward_to_activations(model: MicroCnn, trace: ForwardTrace, class_index: int) -> list[np.ndarray]:
    """Gradient of logit `class_index` w.r.t. each retained activation A^i.

    One tensor per conv layer, same shape as the activation.  Gradients are
    of the raw logit, never of a softmax probability.
    """
    return _backward(model, trace, class_index)[0]


@dataclass
class TracedRun:
    """A model plus one forward trace; adapts both to the saliency pipeline."""

    model: MicroCnn
    trace: ForwardTrace

    @property
    def layer_names(self) -> list[str]:
        return self.model.layer_names

    def activation_gradient_pairs(self, class_index: int) -> list[tuple[np.ndarray, np.ndarray]]:
        grads = backward_to_activations(self.model, self.trace, class_index)
        return list(zip(self.trace.activations, grads))


def run(model: MicroCnn, image) -> TracedRun:
    return TracedRun(model, forward(model, image))


def save_model(model: MicroCnn, path) -> None:
    """Persist weights in the same archive container as saliency bundles.

    Weights are stored as float64, so save/load round-trips bit-exactly.
    """
    from . import bundle

    manifest = {
        "kind": bundle.WEIGHTS_KIND,
        "format_version": bundle.FORMAT_VERSION,
        "conv_specs": [
            {"in_channels": s.in_channels, "out_channels": s.out_channels, "pool": s.pool}
            for s in model.conv_specs
        ],
        "num_classes": model.num_classes,
        "seed": model.seed,
    }
    tensors: dict[str, np.ndarray] = {}
    for i in range(model.num_conv_layers):
        tensors[f"conv{i + 1}/weight.bin"] = model.conv_weights[i]
        tensors[f"conv{i + 1}/bias.bin"] = model.conv_biases[i]
    tensors["dense/weight.bin"] = model.dense_weight
    tensors["dense/bias.bin"] = model.dense_bias
    bundle.write_archive(path, manifest, tensors, dtype="<f8")


def load_model(path) -> MicroCnn:
    from . import bundle

    manifest, tensors = bundle.read_archive(path)
    if manifest.get("kind") != bundle.WEIGHTS_KIND:
        raise bundle.BundleFormatError(
            f"{path}: kind {manifest.get('kind')!r} is not a weights file", field="kind"
        )
    specs = tuple(
        ConvSpec(int(s["in_channels"]), int(s["out_channels"]), bool(s["pool"]))
        for s in manifest["conv_specs"]
    )
    weights = [tensors[f"conv{i + 1}/weight.bin"] for i in range(len(specs))]
    biases = [tensors[f"conv{i + 1}/bias.bin"] for i in range(len(specs))]
    seed = manifest.get("seed")
    return MicroCnn(
        specs,
        weights,
        biases,
        tensors["dense/weight.bin"],
        tensors["dense/bias.bin"],
        seed=None if seed is None else int(seed),
    )


def run_to_bundle(
    model: MicroCnn,
    image,
    class_index: int,
    mask=None,
    true_class: int | None = None,
    producer: str = "winsorcam-microcnn/0.1",
):
    """Trace the model on an image and pack the result as a saliency bundle."""
    from . import bundle

    trace = forward(model, image)
    grads = backward_to_activations(model, trace, class_index)
    return bundle.make_bundle(
        layer_names=model.layer_names,
        activations=trace.activations,
        gradients=grads,
        image=np.asarray(image, dtype=np.float64),
        class_index=class_index,
        logit=float(trace.logits[class_index]),
        mask=mask,
        producer=producer,
        predicted_class=int(np.argmax(trace.logits)),
        true_class=true_class,
    )


FIXTURE_IMAGE_SIZE = 16
FIXTURE_BLOB_SIZE = 6
FIXTURE_TARGET_CLASS = 0


def make_synthetic_fixture(seed: int) -> tuple[MicroCnn, np.ndarray, np.ndarray]:
    """Deterministic (model, image, mask) triple for desk-scale evaluation.

    The image is a bright square block on a faint noise background and the
    mask marks exactly that block.  The model is mostly random, but channel
    0 of every layer is pinned to a brightness-detecting spine (local mean
    at layer 1, pass-through after) and class 0 of the dense head reads
    only that channel with the other class rows biased far down.  As a
    result the class-0 logit is strictly the largest, every layer has
    positive importance for class 0, and the class evidence sits inside
    the mask at every depth: sharp early, pooled-coarse late.
    """
    rng = SplitMix64(seed)
    size, blob = FIXTURE_IMAGE_SIZE, FIXTURE_BLOB_SIZE
    r0 = 2 + rng.next_below(size - blob - 4)
    c0 = 2 + rng.next_below(size - blob - 4)

    image = rng.fill_uniform((1, size, size), 0.0, 0.05)
    image[0, r0 : r0 + blob, c0 : c0 + blob] = 1.0
    mask = np.zeros((size, size), dtype=np.float64)
    mask[r0 : r0 + blob, c0 : c0 + blob] = 1.0

    specs = (
        ConvSpec(1, 4, pool=False),
        ConvSpec(4, 6, pool=True),
        ConvSpec(6, 6, pool=False),
    )
    model = MicroCnn.initialize(specs, num_classes=3, seed=rng.next_uint64())

    # brightness spine on channel 0: local mean, then center pass-throughs
    model.conv_weights[0][0] = 1.0 / 9.0
    model.conv_biases[0][0] = 0.0
    for li in (1, 2):
        model.conv_weights[li][0] = 0.0
        model.conv_weights[li][0, 0, 1, 1] = 1.0
        model.conv_biases[li][0] = 0.0

    # class 0 reads the spine only; other classes are pushed below zero
    model.dense_weight[FIXTURE_TARGET_CLASS] = 0.0
    model.dense_weight[FIXTURE_TARGET_CLASS, 0] = 1.0
    model.dense_bias[FIXTURE_TARGET_CLASS] = 0.0
    for cls in range(1, model.num_classes):
        model.dense_weight[cls, 0] = 0.0
        model.dense_bias[cls] = -2.0

    return model, image, mask
