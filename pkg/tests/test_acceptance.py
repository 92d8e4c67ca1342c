"""Acceptance gate: one test per release criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines.  Tolerances are pinned here and nowhere else.
"""

import json
import struct
import time

import numpy as np
import pytest

import winsorcam as wc
from winsorcam.bundle import MAGIC, BundleFormatError
from winsorcam.cli import main
from winsorcam.evaluation import METHOD_FINAL, METHOD_WINSOR, sweep_records
from winsorcam.pipeline import (
    aggregate_importance,
    naive_mean_baseline,
    normalize_importance,
    winsorize,
)
from winsorcam.tensorops import minmax_normalize, quantile_linear

from conftest import central_difference, sample_fd_positions
from test_metrics import otsu_oracle


def check(name: str, condition: bool, detail: str = "") -> None:
    status = "PASS" if condition else "FAIL"
    suffix = f"  [{detail}]" if detail else ""
    print(f"{status}: {name}{suffix}")
    assert condition, f"{name}{suffix}"


@pytest.fixture(scope="module")
def bundle_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("acceptance_bundles")
    for seed in range(3):
        model, image, mask = wc.make_synthetic_fixture(seed)
        wc.write_bundle(wc.run_to_bundle(model, image, 0, mask=mask, true_class=0), root / f"fixture{seed}.wcam")
    return root


def test_gradient_oracle(fd_model):
    """Analytic activation gradients match central finite differences."""
    started = time.monotonic()
    rng = np.random.default_rng(7)
    image = rng.uniform(0, 1, size=(1, 8, 8))
    trace = wc.forward(fd_model, image)
    grads = wc.backward_to_activations(fd_model, trace, 1)
    worst = 0.0
    for layer in range(fd_model.num_conv_layers):
        for pos in sample_fd_positions(rng, fd_model, trace, layer, 100):
            fd = central_difference(fd_model, layer, trace.activations[layer], pos, 1)
            analytic = grads[layer][pos]
            worst = max(worst, abs(fd - analytic) / max(abs(analytic), abs(fd), 1e-8))
    elapsed = time.monotonic() - started
    check(
        "gradient oracle: finite differences, 100 positions/layer",
        worst <= 1e-4 and elapsed < 10.0,
        f"max rel err {worst:.3e}, {elapsed:.2f}s",
    )


def test_gradcam_closed_form(fd_model):
    """GlobalAvgPool->Dense head: final-layer gradient is the weight row / pooled size."""
    rng = np.random.default_rng(13)
    image = rng.uniform(0, 1, size=(1, 8, 8))
    trace = wc.forward(fd_model, image)
    grads = wc.backward_to_activations(fd_model, trace, 2)
    fh, fw = trace.feature_dims
    expected = np.broadcast_to((fd_model.dense_weight[2] / (fh * fw))[:, None, None], grads[-1].shape)
    gradient_ok = bool((grads[-1] == expected).all())

    act = trace.activations[-1]
    alpha_hand = np.array([g.mean() for g in grads[-1]])
    map_hand = np.maximum(sum(a * ch for a, ch in zip(alpha_hand, act)), 0.0)
    cam = wc.layer_gradcam(act, grads[-1])
    map_err = float(np.abs(cam.map - map_hand).max())
    alpha_err = float(np.abs(cam.alpha - alpha_hand).max())
    check(
        "grad-cam closed form: weight row / pooled size, hand-derived map",
        gradient_ok and map_err <= 1e-9 and alpha_err <= 1e-9,
        f"map err {map_err:.2e}, alpha err {alpha_err:.2e}",
    )


def test_winsorization_algebra():
    """Threshold monotone in p; zeros preserved; weights in {0} u [0.1, 1.0]; p=100 identity."""
    rng = np.random.default_rng(99)
    grid = [float(p) for p in range(0, 101, 10)]
    ok = True
    for _ in range(1000):
        n = int(rng.integers(1, 16))
        gamma = rng.uniform(0, 10, size=n) * (rng.uniform(size=n) > 0.25)
        thresholds = [winsorize(gamma, p)[1] for p in grid]
        ok &= all(a <= b + 1e-12 for a, b in zip(thresholds, thresholds[1:]))

        p = float(rng.uniform(0, 100))
        clipped, _ = winsorize(gamma, p)
        positive = gamma[gamma > 0]
        if positive.size:
            normalized = normalize_importance(clipped, positive.min(), positive.max())
        else:
            normalized = np.zeros_like(gamma)
        ok &= bool((clipped[gamma == 0] == 0.0).all() and (normalized[gamma == 0] == 0.0).all())
        active = normalized[normalized != 0.0]
        ok &= bool(((active >= 0.1) & (active <= 1.0)).all())

        clipped100, _ = winsorize(gamma, 100.0)
        ok &= bool((clipped100 == gamma).all())
        if not ok:
            break
    check("winsorization algebra on 1000 random importance vectors", ok)


def test_step5_equivalence(fixture_run, fixture_cams):
    """Max aggregation at p=0 reproduces the naive mean after normalization."""
    gamma = aggregate_importance(fixture_cams, "max")
    assert (gamma > 0).all(), "fixture must give every layer positive importance"
    fused = wc.winsor_cam(fixture_run, 0, 0.0, "max", "bilinear").fused
    mean_map = naive_mean_baseline(fixture_cams, "bilinear")
    deviation = float(
        np.abs(minmax_normalize(fused, 1e-12) - minmax_normalize(mean_map, 1e-12)).max()
    )
    check("p=0/max-aggregation equivalence with the naive mean", deviation <= 1e-9, f"max dev {deviation:.2e}")


def test_single_layer_collapse():
    """One conv layer: pipeline output is that layer's normalized Grad-CAM, exactly."""
    rng = np.random.default_rng(5)
    act = np.abs(rng.normal(size=(3, 6, 6)))
    grad = rng.normal(size=(3, 6, 6)) + 0.1
    bundle = wc.make_bundle(["only"], [act], [grad], np.abs(rng.normal(size=(1, 6, 6))), 0, 1.0)
    cam = wc.layer_gradcam(bundle.activations[0], bundle.gradients[0])
    result = wc.winsor_cam(bundle, 0, 42.0)
    identical = bool((minmax_normalize(result.fused) == minmax_normalize(cam.map)).all())
    check("single-layer collapse to plain grad-cam", identical)


def test_otsu_oracle():
    """Chosen threshold equals exhaustive search over all 256 bins."""
    rng = np.random.default_rng(2024)
    mismatches = 0
    for _ in range(500):
        heat = rng.uniform(0, 1, size=(16, 16)) ** rng.uniform(0.4, 3.0)
        threshold, _ = wc.otsu_threshold(heat)
        if threshold != otsu_oracle(heat):
            mismatches += 1
    check("otsu threshold vs exhaustive 256-bin search, 500 maps", mismatches == 0, f"{mismatches} mismatches")


def test_metric_fixtures():
    """Pinned metric values: IoU trio, point-mass CoM, 3-4-5 distance."""
    square = np.zeros((4, 4), dtype=np.uint8)
    square[1:3, 1:3] = 1
    shifted = np.zeros((4, 4), dtype=np.uint8)
    shifted[0, 0] = 1
    pred = np.array([[1, 1], [0, 0]], dtype=np.uint8)
    truth = np.array([[1, 0], [1, 0]], dtype=np.uint8)
    heat = np.zeros((8, 8))
    heat[3, 5] = 1.0
    com = wc.center_of_mass(heat)
    ok = (
        wc.iou(square, square) == 1.0
        and wc.iou(square, shifted) == 0.0
        and wc.iou(pred, truth) == 1 / 3
        and (com.x_c, com.y_c) == (5.0, 3.0)
        and wc.com_distance(wc.CenterOfMass(0, 0), wc.CenterOfMass(3, 4)) == 5.0
    )
    check("metric fixtures (IoU 1 / 0 / 1-3, CoM point mass, 3-4-5 distance)", ok)


def test_quantile_oracle():
    """Linear-interpolation quantile vs an independent sort-and-interpolate."""
    rng = np.random.default_rng(31337)
    worst = 0.0
    for _ in range(1000):
        values = rng.normal(scale=rng.uniform(0.1, 100), size=int(rng.integers(1, 400)))
        p = float(rng.uniform(0, 100))
        ref = float(np.quantile(values, p / 100.0))
        worst = max(worst, abs(quantile_linear(values, p) - ref) / max(1.0, abs(ref)))
    check("quantile vs independent oracle on 1000 vectors", worst <= 1e-12, f"max rel err {worst:.2e}")


def test_end_to_end_protocol(bundle_dir):
    """Best-over-p Winsor-CAM IoU beats or ties final-layer Grad-CAM on the fixture."""
    started = time.monotonic()
    bundle = wc.read_bundle(bundle_dir / "fixture0.wcam")
    records = sweep_records(bundle)
    second = sweep_records(bundle)
    deterministic = all(
        (a.iou, a.com_distance_px) == (b.iou, b.com_distance_px) for a, b in zip(records, second)
    )
    best_winsor = max(r.iou for r in records if r.method == METHOD_WINSOR)
    final_layer = next(r.iou for r in records if r.method == METHOD_FINAL)
    elapsed = time.monotonic() - started
    check(
        "end-to-end protocol: best-over-p winsor IoU >= final-layer IoU",
        best_winsor >= final_layer and deterministic and elapsed < 30.0,
        f"winsor {best_winsor:.4f} vs final {final_layer:.4f}, {elapsed:.2f}s",
    )


def test_cli_determinism(bundle_dir, tmp_path):
    """Two full CLI passes over the fixture directory emit identical bytes."""
    outputs = []
    for tag in ("one", "two"):
        root = tmp_path / tag
        code = main(["compute", str(bundle_dir / "fixture0.wcam"), "--p", "50", "--out", str(root / "compute")])
        code |= main(["sweep", str(bundle_dir / "fixture0.wcam"), "--out", str(root / "sweep")])
        code |= main(["evaluate", str(bundle_dir), "--out", str(root / "evaluate")])
        assert code == 0
        outputs.append(
            {
                str(path.relative_to(root)): path.read_bytes()
                for path in sorted(root.rglob("*"))
                if path.is_file()
            }
        )
    same_names = sorted(outputs[0]) == sorted(outputs[1])
    same_bytes = same_names and all(outputs[0][name] == outputs[1][name] for name in outputs[0])
    check(
        "CLI determinism: byte-identical heatmaps, JSON and CSV across runs",
        same_bytes,
        f"{len(outputs[0])} files",
    )


def test_bundle_round_trip(bundle_dir, tmp_path):
    """write-then-read is the identity; corrupted files raise structured errors."""
    path = bundle_dir / "fixture0.wcam"
    bundle = wc.read_bundle(path)
    rewritten = tmp_path / "rewritten.wcam"
    wc.write_bundle(bundle, rewritten)
    bit_identical = rewritten.read_bytes() == path.read_bytes()

    raw = path.read_bytes()
    truncated = tmp_path / "truncated.wcam"
    truncated.write_bytes(raw[:-7])
    try:
        wc.read_bundle(truncated)
        truncation_ok = False
    except BundleFormatError as exc:
        truncation_ok = exc.field is not None and "truncat" in str(exc)

    (mlen,) = struct.unpack("<I", raw[4:8])
    manifest = json.loads(raw[8 : 8 + mlen])
    manifest["tensors"]["conv2/grad.bin"]["shape"] = [6, 16, 17]
    encoded = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode()
    inconsistent = tmp_path / "inconsistent.wcam"
    inconsistent.write_bytes(MAGIC + struct.pack("<I", len(encoded)) + encoded + raw[8 + mlen :])
    try:
        wc.read_bundle(inconsistent)
        mismatch_ok = False
    except BundleFormatError as exc:
        mismatch_ok = exc.field == "conv2/grad.bin"

    check(
        "bundle round-trip bit-identical; corrupted blobs raise structured errors",
        bit_identical and truncation_ok and mismatch_ok,
    )
