"""Saliency bundle container, image I/O, and heatmap rendering.

A bundle is one file carrying everything needed to explain one prediction:
per-layer activations and class-logit gradients, the input image, an
optional ground-truth mask, and a JSON manifest.  The container is
deliberately framework-free so any training stack can emit one with a few
dozen lines of exporter code:

    bytes 0..3   magic ``WCAM``
    bytes 4..7   little-endian uint32: manifest length in bytes
    manifest     UTF-8 JSON (``format_version`` integer required)
    blobs        raw tensors, back to back

The manifest's ``tensors`` table maps blob names (``<layer>/act.bin``,
``<layer>/grad.bin``, ``image.bin``, ``mask.bin``) to dtype, shape and byte
offset within the blob section.  Bundle tensors are little-endian float32
in row-major order; they are widened to float64 on load and all pipeline
math happens in 64-bit.  Unknown manifest fields survive a read/write
round trip untouched.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path

import numpy as np
from PIL import Image

from .metrics import quantize_256
from .tensorops import DEFAULT_EPSILON
from . import pipeline

MAGIC = b"WCAM"
FORMAT_VERSION = 1
BUNDLE_KIND = "saliency-bundle"
WEIGHTS_KIND = "microcnn-weights"
BUNDLE_SUFFIX = ".wcam"
DEFAULT_OVERLAY_ALPHA = 0.5

_ALLOWED_DTYPES = {"<f4": np.dtype("<f4"), "<f8": np.dtype("<f8")}


class BundleFormatError(ValueError):
    """Structured parse/validation failure; `field` names the offending entry."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


# ---------------------------------------------------------------------------
# low-level archive


def write_archive(path, manifest: dict, tensors: dict[str, np.ndarray], dtype: str = "<f4") -> None:
    """Serialize manifest + named tensors into one WCAM archive file."""
    if dtype not in _ALLOWED_DTYPES:
        raise BundleFormatError(f"unsupported dtype {dtype!r}", field="tensors")
    np_dtype = _ALLOWED_DTYPES[dtype]

    table: dict[str, dict] = {}
    blobs: list[bytes] = []
    offset = 0
    for name, arr in tensors.items():
        data = np.ascontiguousarray(np.asarray(arr), dtype=np_dtype).tobytes()
        table[name] = {
            "dtype": dtype,
            "shape": [int(s) for s in np.shape(arr)],
            "offset": offset,
            "nbytes": len(data),
        }
        blobs.append(data)
        offset += len(data)

    doc = dict(manifest)
    doc["format_version"] = int(manifest.get("format_version", FORMAT_VERSION))
    doc["tensors"] = table
    encoded = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")

    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(encoded)))
        fh.write(encoded)
        for blob in blobs:
            fh.write(blob)


def read_archive(path) -> tuple[dict, dict[str, np.ndarray]]:
    """Parse a WCAM archive into (manifest, float64 tensors)."""
    raw = Path(path).read_bytes()
    if len(raw) < 8 or raw[:4] != MAGIC:
        raise BundleFormatError(f"{path}: not a WCAM archive (bad magic)", field="magic")
    (manifest_len,) = struct.unpack("<I", raw[4:8])
    if len(raw) < 8 + manifest_len:
        raise BundleFormatError(f"{path}: truncated manifest", field="manifest")
    try:
        manifest = json.loads(raw[8 : 8 + manifest_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise BundleFormatError(f"{path}: manifest is not valid JSON ({exc})", field="manifest") from exc

    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise BundleFormatError(
            f"{path}: format_version {version!r} unsupported (expected {FORMAT_VERSION})",
            field="format_version",
        )
    table = manifest.get("tensors")
    if not isinstance(table, dict):
        raise BundleFormatError(f"{path}: manifest has no tensors table", field="tensors")

    blob_section = raw[8 + manifest_len :]
    tensors: dict[str, np.ndarray] = {}
    for name, entry in table.items():
        if not isinstance(entry, dict) or not {"shape", "offset", "nbytes"} <= set(entry):
            raise BundleFormatError(f"{path}: tensor {name!r} entry is malformed", field=name)
        dtype = entry.get("dtype", "<f4")
        if dtype not in _ALLOWED_DTYPES:
            raise BundleFormatError(f"{path}: tensor {name!r} has unsupported dtype {dtype!r}", field=name)
        shape = tuple(int(s) for s in entry["shape"])
        np_dtype = _ALLOWED_DTYPES[dtype]
        expected = int(np.prod(shape)) * np_dtype.itemsize if shape else np_dtype.itemsize
        if entry["nbytes"] != expected:
            raise BundleFormatError(
                f"{path}: tensor {name!r} declares {entry['nbytes']} bytes but shape {shape} needs {expected}",
                field=name,
            )
        start, end = entry["offset"], entry["offset"] + entry["nbytes"]
        if end > len(blob_section):
            raise BundleFormatError(f"{path}: tensor {name!r} blob is truncated", field=name)
        arr = np.frombuffer(blob_section[start:end], dtype=np_dtype).reshape(shape)
        values = arr.astype(np.float64)
        if not np.isfinite(values).all():
            raise BundleFormatError(f"{path}: tensor {name!r} contains non-finite values", field=name)
        tensors[name] = values
    return manifest, tensors


# ---------------------------------------------------------------------------
# saliency bundles


@dataclass
class SaliencyBundle:
    """In-memory saliency bundle; tensor values are float32-representable."""

    manifest: dict
    layer_names: list[str]
    activations: list[np.ndarray]  # per layer, (C, H, W)
    gradients: list[np.ndarray]  # per layer, same shapes
    image: np.ndarray  # (C, H, W)
    mask: np.ndarray | None = None  # (H, W) uint8 in {0, 1}
    bundle_id: str = field(default="", compare=False)

    @property
    def class_index(self) -> int:
        return int(self.manifest["class_index"])

    @property
    def logit(self) -> float:
        return float(self.manifest["logit"])

    @property
    def has_mask(self) -> bool:
        return self.mask is not None

    @property
    def predicted_class(self) -> int | None:
        value = self.manifest.get("predicted_class")
        return None if value is None else int(value)

    @property
    def true_class(self) -> int | None:
        value = self.manifest.get("true_class")
        return None if value is None else int(value)

    def activation_gradient_pairs(self, class_index: int) -> list[tuple[np.ndarray, np.ndarray]]:
        if class_index != self.class_index:
            raise ValueError(
                f"bundle stores gradients for class {self.class_index}, cannot serve class {class_index}"
            )
        return list(zip(self.activations, self.gradients))


def make_bundle(
    layer_names: list[str],
    activations: list[np.ndarray],
    gradients: list[np.ndarray],
    image: np.ndarray,
    class_index: int,
    logit: float,
    mask: np.ndarray | None = None,
    producer: str = "winsorcam",
    predicted_class: int | None = None,
    true_class: int | None = None,
    extra_manifest: dict | None = None,
) -> SaliencyBundle:
    """Assemble a bundle, quantizing all tensors to their on-disk precision."""
    if not (len(layer_names) == len(activations) == len(gradients)):
        raise ValueError("layer_names, activations and gradients must align")

    def f32(arr):
        return np.asarray(arr, dtype=np.float32).astype(np.float64)

    acts = [f32(a) for a in activations]
    grads = [f32(g) for g in gradients]
    img = f32(image)
    manifest = dict(extra_manifest or {})
    manifest.update(
        {
            "format_version": FORMAT_VERSION,
            "kind": BUNDLE_KIND,
            "class_index": int(class_index),
            "logit": float(logit),
            "producer": producer,
            "activation_capture": "post_relu",
            "layers": [{"name": n, "shape": [int(s) for s in a.shape]} for n, a in zip(layer_names, acts)],
            "image": {"tensor": "image.bin", "shape": [int(s) for s in img.shape]},
        }
    )
    if predicted_class is not None:
        manifest["predicted_class"] = int(predicted_class)
    if true_class is not None:
        manifest["true_class"] = int(true_class)

    mask_u8 = None
    if mask is not None:
        mask_arr = np.asarray(mask)
        if not np.isin(mask_arr, (0, 1)).all():
            raise ValueError("mask must be strictly binary")
        mask_u8 = mask_arr.astype(np.uint8)
        manifest["mask"] = {"tensor": "mask.bin", "shape": [int(s) for s in mask_u8.shape]}

    bundle = SaliencyBundle(manifest, list(layer_names), acts, grads, img, mask_u8)
    _validate_bundle(bundle, source="<memory>")
    return bundle


def _validate_bundle(bundle: SaliencyBundle, source: str) -> None:
    manifest = bundle.manifest
    for key in ("class_index", "logit", "layers"):
        if key not in manifest:
            raise BundleFormatError(f"{source}: manifest is missing {key!r}", field=key)
    if len(manifest["layers"]) != len(bundle.activations):
        raise BundleFormatError(f"{source}: manifest layer count does not match tensors", field="layers")
    post_relu = manifest.get("activation_capture") == "post_relu"
    for name, act, grad, entry in zip(
        bundle.layer_names, bundle.activations, bundle.gradients, manifest["layers"]
    ):
        if act.shape != grad.shape:
            raise BundleFormatError(
                f"{source}: layer {name!r} activation shape {act.shape} != gradient shape {grad.shape}",
                field=name,
            )
        if tuple(entry["shape"]) != act.shape:
            raise BundleFormatError(
                f"{source}: layer {name!r} manifest shape {tuple(entry['shape'])} != blob shape {act.shape}",
                field=name,
            )
        if post_relu and act.size and act.min() < 0:
            raise BundleFormatError(
                f"{source}: layer {name!r} declares post-ReLU capture but has negative activations",
                field=name,
            )
    if bundle.image.ndim != 3:
        raise BundleFormatError(f"{source}: image must be (C, H, W)", field="image.bin")
    if bundle.mask is not None:
        if not np.isin(bundle.mask, (0, 1)).all():
            raise BundleFormatError(f"{source}: mask must be strictly binary", field="mask.bin")
        if bundle.mask.shape != bundle.image.shape[1:]:
            raise BundleFormatError(
                f"{source}: mask shape {bundle.mask.shape} != image spatial shape {bundle.image.shape[1:]}",
                field="mask.bin",
            )


def write_bundle(bundle: SaliencyBundle, path) -> None:
    """Write a bundle archive; reading it back is bit-identical."""
    _validate_bundle(bundle, source="<memory>")
    tensors: dict[str, np.ndarray] = {}
    for name, act, grad in zip(bundle.layer_names, bundle.activations, bundle.gradients):
        tensors[f"{name}/act.bin"] = act
        tensors[f"{name}/grad.bin"] = grad
    tensors["image.bin"] = bundle.image
    if bundle.mask is not None:
        tensors["mask.bin"] = bundle.mask.astype(np.float64)
    manifest = {k: v for k, v in bundle.manifest.items() if k != "tensors"}
    write_archive(path, manifest, tensors, dtype="<f4")


def read_bundle(path) -> SaliencyBundle:
    """Load and validate a bundle archive."""
    manifest, tensors = read_archive(path)
    if manifest.get("kind") != BUNDLE_KIND:
        raise BundleFormatError(f"{path}: kind {manifest.get('kind')!r} is not a saliency bundle", field="kind")
    layers = manifest.get("layers")
    if not isinstance(layers, list) or not layers:
        raise BundleFormatError(f"{path}: manifest must list at least one layer", field="layers")

    names, acts, grads = [], [], []
    for entry in layers:
        if not isinstance(entry, dict) or "name" not in entry or "shape" not in entry:
            raise BundleFormatError(f"{path}: layer entry {entry!r} is malformed", field="layers")
        name = entry["name"]
        for blob_name, target in ((f"{name}/act.bin", acts), (f"{name}/grad.bin", grads)):
            if blob_name not in tensors:
                raise BundleFormatError(f"{path}: missing tensor {blob_name!r}", field=blob_name)
            target.append(tensors[blob_name])
        names.append(name)

    if "image.bin" not in tensors:
        raise BundleFormatError(f"{path}: missing tensor 'image.bin'", field="image.bin")
    mask = None
    if "mask.bin" in tensors:
        mask_values = tensors["mask.bin"]
        if not np.isin(mask_values, (0.0, 1.0)).all():
            raise BundleFormatError(f"{path}: mask must be strictly binary", field="mask.bin")
        mask = mask_values.astype(np.uint8)

    bundle = SaliencyBundle(
        manifest=manifest,
        layer_names=names,
        activations=acts,
        gradients=grads,
        image=tensors["image.bin"],
        mask=mask,
        bundle_id=Path(path).stem,
    )
    _validate_bundle(bundle, source=str(path))
    return bundle


# ---------------------------------------------------------------------------
# rendering


@dataclass
class HeatmapImage:
    """8-bit RGB raster ready for PNG export."""

    width: int
    height: int
    pixels: np.ndarray  # (H, W, 3) uint8


@lru_cache(maxsize=1)
def colormap() -> np.ndarray:
    """The 256-entry blue->green->red lookup table, as float RGB in [0, 1]."""
    with resources.files("winsorcam.data").joinpath("colormap_blue_green_red.json").open("rb") as fh:
        doc = json.load(fh)
    table = np.array(doc["rgb"], dtype=np.float64)
    if table.shape != (256, 3):
        raise ValueError(f"colormap table has shape {table.shape}, expected (256, 3)")
    return table / 255.0


def _quantize_u8(rgb_float: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(rgb_float * 255.0), 0, 255).astype(np.uint8)


def render_heatmap(map_2d, epsilon: float = DEFAULT_EPSILON) -> HeatmapImage:
    """Colormapped rendering of a raw 2-D map (normalize, look up, quantize)."""
    idx = quantize_256(map_2d, epsilon)
    rgb = colormap()[idx]
    h, w = idx.shape
    return HeatmapImage(width=w, height=h, pixels=_quantize_u8(rgb))


def render_overlay(
    image: np.ndarray,
    heatmap: np.ndarray,
    alpha: float = DEFAULT_OVERLAY_ALPHA,
    interp: str = "bilinear",
    epsilon: float = DEFAULT_EPSILON,
) -> HeatmapImage:
    """Blend a colormapped heatmap over an image: (1-alpha)*image + alpha*color.

    The heatmap is resampled to the image resolution with the chosen kernel
    and min-max normalized before the colormap lookup; blending happens in
    float and is quantized to 8 bits only at the very end.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 3 or img.shape[0] not in (1, 3):
        raise ValueError(f"expected image of shape (1|3, H, W), got {img.shape}")
    h, w = img.shape[1], img.shape[2]
    base = np.clip(img, 0.0, 1.0)
    if base.shape[0] == 1:
        base = np.repeat(base, 3, axis=0)
    base_rgb = base.transpose(1, 2, 0)  # (H, W, 3)

    aligned = pipeline.resample(heatmap, h, w, interp)
    color = colormap()[quantize_256(aligned, epsilon)]
    blended = (1.0 - alpha) * base_rgb + alpha * color
    return HeatmapImage(width=w, height=h, pixels=_quantize_u8(blended))


def render_binary(mask) -> HeatmapImage:
    """Black/white rendering of a binary mask (foreground white)."""
    m = np.asarray(mask)
    if not np.isin(m, (0, 1)).all():
        raise ValueError("mask must be strictly binary")
    gray = (m.astype(np.uint8) * 255)[..., None].repeat(3, axis=2)
    return HeatmapImage(width=m.shape[1], height=m.shape[0], pixels=gray)


def png_bytes(image: HeatmapImage) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(image.pixels, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def export_heatmap_png(map_or_image, path) -> None:
    """Write a raw 2-D map (auto-colormapped) or a rendered image as PNG."""
    if isinstance(map_or_image, HeatmapImage):
        rendered = map_or_image
    else:
        rendered = render_heatmap(map_or_image)
    try:
        Path(path).write_bytes(png_bytes(rendered))
    except OSError as exc:
        raise OSError(f"cannot write PNG to {path}: {exc}") from exc


def load_image(path) -> np.ndarray:
    """Read an image file into a (C, H, W) float64 array scaled to [0, 1]."""
    with Image.open(path) as img:
        rgb = img.convert("RGB")
        arr = np.asarray(rgb, dtype=np.float64) / 255.0
    return arr.transpose(2, 0, 1)


def load_mask_image(path) -> np.ndarray:
    """Read a mask image: any nonzero pixel counts as foreground."""
    with Image.open(path) as img:
        arr = np.asarray(img.convert("L"))
    return (arr > 0).astype(np.uint8)
