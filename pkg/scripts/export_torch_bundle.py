#!/usr/bin/env python3
"""Dump a winsorcam-compatible saliency bundle from a PyTorch model.

Deliberately framework-only: it writes the WCAM container with nothing but
`struct`, `json` and `numpy`, to show that any training stack can produce
bundles without importing winsorcam.  Adapt `TARGET_LAYERS` and the model
loading to your project.

Usage:
    python scripts/export_torch_bundle.py image.png out.wcam [--class-index 3]

Container layout (see README for the full schema):
    b"WCAM" | uint32 LE manifest length | manifest JSON | raw blobs
Blobs are little-endian float32, C-order; the manifest's "tensors" table
names each blob's dtype, shape, offset and byte length.
"""

import argparse
import json
import struct

import numpy as np


def write_wcam(path, manifest, tensors):
    """tensors: dict name -> float32 ndarray, insertion order preserved."""
    table, blobs, offset = {}, [], 0
    for name, arr in tensors.items():
        data = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        table[name] = {"dtype": "<f4", "shape": list(arr.shape), "offset": offset, "nbytes": len(data)}
        blobs.append(data)
        offset += len(data)
    manifest = dict(manifest, format_version=1, tensors=table)
    encoded = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(b"WCAM")
        fh.write(struct.pack("<I", len(encoded)))
        fh.write(encoded)
        for blob in blobs:
            fh.write(blob)


def main():
    import torch
    import torchvision.models as models
    from PIL import Image

    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("image")
    parser.add_argument("output")
    parser.add_argument("--class-index", type=int, default=None, help="default: argmax logit")
    args = parser.parse_args()

    model = models.resnet18(weights=None)
    model.eval()

    # post-ReLU capture points, shallow to deep
    target_layers = {
        "layer1": model.layer1,
        "layer2": model.layer2,
        "layer3": model.layer3,
        "layer4": model.layer4,
    }

    with Image.open(args.image) as img:
        rgb = np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0
    x = torch.from_numpy(rgb.transpose(2, 0, 1)).unsqueeze(0)

    acts = {}
    hooks = [
        layer.register_forward_hook(lambda m, i, out, name=name: acts.__setitem__(name, out))
        for name, layer in target_layers.items()
    ]
    logits = model(x)
    for hook in hooks:
        hook.remove()

    class_index = int(logits.argmax()) if args.class_index is None else args.class_index
    grads = torch.autograd.grad(logits[0, class_index], list(acts.values()))

    tensors = {}
    layers = []
    for (name, act), grad in zip(acts.items(), grads):
        a = act.detach().numpy()[0]
        tensors[f"{name}/act.bin"] = np.maximum(a, 0.0)  # hooks here are post-ReLU already
        tensors[f"{name}/grad.bin"] = grad.numpy()[0]
        layers.append({"name": name, "shape": list(a.shape)})
    tensors["image.bin"] = x.numpy()[0]

    manifest = {
        "kind": "saliency-bundle",
        "class_index": class_index,
        "logit": float(logits[0, class_index]),
        "producer": "export_torch_bundle/resnet18",
        "activation_capture": "post_relu",
        "layers": layers,
        "image": {"tensor": "image.bin", "shape": list(x.shape[1:])},
        "predicted_class": int(logits.argmax()),
    }
    write_wcam(args.output, manifest, tensors)
    print(f"wrote {args.output}: {len(layers)} layers, class {class_index}")


if __name__ == "__main__":
    main()
