"""Scoring of saliency maps against ground-truth masks, and result records.

Per image, a sweep produces one record per percentile plus one for each
fixed baseline (final-layer map and naive mean over layers).  IoU compares
the Otsu-binarized map against the mask; the center-of-mass distance uses
the raw map, binarizing only the ground truth.  Maps are resampled to the
mask's resolution (the image grid) before scoring, so distances are in
input pixels.

Aggregation across a bundle directory reports mean and population standard
deviation per method, with Winsor-CAM represented by its per-image best
value over the percentile grid, optionally split by prediction correctness.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .bundle import (
    DEFAULT_OVERLAY_ALPHA,
    SaliencyBundle,
    png_bytes,
    render_binary,
    render_heatmap,
    render_overlay,
)
from .gradcam import LayerGradCam, all_layer_gradcams
from .metrics import center_of_mass, com_distance, iou, otsu_threshold
from .pipeline import (
    DEFAULT_BOUNDS,
    P_GRID_DEFAULT,
    WinsorCamResult,
    final_layer_baseline,
    fuse,
    layer_importance,
    naive_mean_baseline,
    resample,
)

METHOD_WINSOR = "winsor"
METHOD_FINAL = "final_layer"
METHOD_NAIVE = "naive_mean"

RECORD_CSV_COLUMNS = (
    "bundle_id",
    "method",
    "aggregation",
    "interp",
    "p",
    "iou",
    "com_distance_px",
    "best_iou",
    "best_distance",
)
SUMMARY_CSV_COLUMNS = (
    "split",
    "method",
    "n_images",
    "iou_mean",
    "iou_std",
    "com_distance_mean",
    "com_distance_std",
)


@dataclass
class EvalRecord:
    bundle_id: str
    method: str
    aggregation: str
    interp: str
    p: float | None
    iou: float
    com_distance_px: float
    best_iou: bool = False
    best_distance: bool = False


def render_views(
    bundle: SaliencyBundle,
    saliency_map: np.ndarray,
    interp: str = "bilinear",
    alpha: float = DEFAULT_OVERLAY_ALPHA,
) -> dict[str, bytes]:
    """PNG bytes of the three views of one saliency map.

    `fused` is the colormapped map, `overlay` blends it over the input
    image, `binary` is its Otsu foreground mask; all three aligned to the
    input image resolution with the given kernel.
    """
    h, w = bundle.image.shape[1], bundle.image.shape[2]
    aligned = resample(saliency_map, h, w, interp)
    _, predicted_mask = otsu_threshold(aligned)
    return {
        "fused": png_bytes(render_heatmap(aligned)),
        "overlay": png_bytes(render_overlay(bundle.image, saliency_map, alpha, interp)),
        "binary": png_bytes(render_binary(predicted_mask)),
    }


def importance_document(result: WinsorCamResult, interp: str, layer_names: list[str]) -> dict:
    importance = result.importance
    return {
        "p": importance.p,
        "aggregation": importance.aggregation,
        "interp": interp,
        "bounds": list(importance.bounds),
        "threshold": importance.threshold,
        "layers": layer_names,
        "raw": importance.raw.tolist(),
        "winsorized": importance.winsorized.tolist(),
        "normalized": importance.normalized.tolist(),
    }


def render_artifacts(
    bundle: SaliencyBundle,
    result: WinsorCamResult,
    interp: str = "bilinear",
    alpha: float = DEFAULT_OVERLAY_ALPHA,
) -> dict[str, bytes]:
    """The four per-run artifact files, as bytes keyed by file name.

    Single source of truth for both the CLI's output files and the HTTP
    service's image responses.
    """
    views = render_views(bundle, result.fused, interp, alpha)
    doc = importance_document(result, interp, bundle.layer_names)
    return {
        "heatmap.png": views["fused"],
        "overlay.png": views["overlay"],
        "binary.png": views["binary"],
        "importance.json": (json.dumps(doc, indent=1, sort_keys=True) + "\n").encode("utf-8"),
    }


def score_map(saliency_map: np.ndarray, mask: np.ndarray, interp: str = "bilinear") -> tuple[float, float]:
    """(IoU, CoM distance) of one saliency map against a binary mask."""
    mask_arr = np.asarray(mask)
    aligned = resample(saliency_map, mask_arr.shape[0], mask_arr.shape[1], interp)
    _, predicted = otsu_threshold(aligned)
    overlap = iou(predicted, mask_arr)
    distance = com_distance(center_of_mass(aligned), center_of_mass(mask_arr.astype(np.float64)))
    return overlap, distance


def sweep_records(
    bundle: SaliencyBundle,
    p_grid=P_GRID_DEFAULT,
    aggregation: str = "mean",
    interp: str = "bilinear",
    bounds: tuple[float, float] = DEFAULT_BOUNDS,
    cams: list[LayerGradCam] | None = None,
) -> list[EvalRecord]:
    """One record per percentile plus the two p-free baselines."""
    if bundle.mask is None:
        raise ValueError(f"bundle {bundle.bundle_id or '<memory>'} has no ground-truth mask")
    if cams is None:
        cams = all_layer_gradcams(bundle, bundle.class_index)

    records = []
    for p in p_grid:
        result = fuse(cams, layer_importance(cams, float(p), aggregation, bounds), interp)
        overlap, distance = score_map(result.fused, bundle.mask, interp)
        records.append(
            EvalRecord(bundle.bundle_id, METHOD_WINSOR, aggregation, interp, float(p), overlap, distance)
        )

    best_iou = max(r.iou for r in records)
    best_distance = min(r.com_distance_px for r in records)
    next(r for r in records if r.iou == best_iou).best_iou = True
    next(r for r in records if r.com_distance_px == best_distance).best_distance = True

    for method, baseline_map in (
        (METHOD_FINAL, final_layer_baseline(cams, interp)),
        (METHOD_NAIVE, naive_mean_baseline(cams, interp)),
    ):
        overlap, distance = score_map(baseline_map, bundle.mask, interp)
        records.append(EvalRecord(bundle.bundle_id, method, aggregation, interp, None, overlap, distance))
    return records


def best_winsor_metrics(records: list[EvalRecord]) -> tuple[float, float]:
    """Per-image oracle selection: highest IoU and lowest distance over p."""
    winsor = [r for r in records if r.method == METHOD_WINSOR]
    return max(r.iou for r in winsor), min(r.com_distance_px for r in winsor)


def _method_metrics(records: list[EvalRecord], method: str) -> tuple[float, float]:
    if method == METHOD_WINSOR:
        return best_winsor_metrics(records)
    record = next(r for r in records if r.method == method)
    return record.iou, record.com_distance_px


def summarize(per_bundle: dict[str, list[EvalRecord]], correctness: dict[str, bool | None]) -> list[dict]:
    """Mean +- population stddev rows per (split, method).

    `correctness` maps bundle id to True/False when the bundle manifest
    carries both predicted and true class, else None; the correct/incorrect
    splits appear only when at least one bundle is labeled.
    """
    splits: dict[str, list[str]] = {"all": sorted(per_bundle)}
    labeled = {bid: flag for bid, flag in correctness.items() if flag is not None}
    if labeled:
        splits["correct"] = sorted(b for b, flag in labeled.items() if flag)
        splits["incorrect"] = sorted(b for b, flag in labeled.items() if not flag)

    rows = []
    for split, bundle_ids in splits.items():
        for method in (METHOD_WINSOR, METHOD_FINAL, METHOD_NAIVE):
            pairs = [_method_metrics(per_bundle[bid], method) for bid in bundle_ids]
            if not pairs:
                rows.append(
                    {
                        "split": split,
                        "method": method,
                        "n_images": 0,
                        "iou_mean": None,
                        "iou_std": None,
                        "com_distance_mean": None,
                        "com_distance_std": None,
                    }
                )
                continue
            ious = np.array([p[0] for p in pairs])
            dists = np.array([p[1] for p in pairs])
            rows.append(
                {
                    "split": split,
                    "method": method,
                    "n_images": len(pairs),
                    "iou_mean": float(ious.mean()),
                    "iou_std": float(ious.std()),  # population stddev
                    "com_distance_mean": float(dists.mean()),
                    "com_distance_std": float(dists.std()),
                }
            )
    return rows


def prediction_correct(bundle: SaliencyBundle) -> bool | None:
    if bundle.predicted_class is None or bundle.true_class is None:
        return None
    return bundle.predicted_class == bundle.true_class


def _csv_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def records_to_csv(records: list[EvalRecord]) -> str:
    lines = [",".join(RECORD_CSV_COLUMNS)]
    for r in records:
        row = asdict(r)
        lines.append(",".join(_csv_cell(row[c]) for c in RECORD_CSV_COLUMNS))
    return "\n".join(lines) + "\n"


def summary_to_csv(rows: list[dict]) -> str:
    lines = [",".join(SUMMARY_CSV_COLUMNS)]
    for row in rows:
        lines.append(",".join(_csv_cell(row[c]) for c in SUMMARY_CSV_COLUMNS))
    return "\n".join(lines) + "\n"


def records_to_json(records: list[EvalRecord]) -> str:
    return json.dumps([asdict(r) for r in records], indent=1, sort_keys=True) + "\n"


def summary_to_json(rows: list[dict]) -> str:
    return json.dumps(rows, indent=1, sort_keys=True) + "\n"


def format_summary_table(rows: list[dict]) -> str:
    """Fixed-width human-readable view of the summary rows."""
    header = f"{'split':<10} {'method':<12} {'n':>4} {'IoU':>16} {'CoM distance':>20}"
    lines = [header, "-" * len(header)]
    for row in rows:
        if row["n_images"] == 0:
            lines.append(f"{row['split']:<10} {row['method']:<12} {0:>4} {'-':>16} {'-':>20}")
            continue
        iou_txt = f"{row['iou_mean']:.3f} ± {row['iou_std']:.3f}"
        dist_txt = f"{row['com_distance_mean']:.3f} ± {row['com_distance_std']:.3f}"
        lines.append(f"{row['split']:<10} {row['method']:<12} {row['n_images']:>4} {iou_txt:>16} {dist_txt:>20}")
    return "\n".join(lines)
