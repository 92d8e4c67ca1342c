"""Batch command line: compute heatmaps, sweep percentiles, evaluate directories.

Exit codes: 0 success, 2 usage error (nothing written), 3 data error.
With --json-errors, failures go to stderr as one structured JSON line
instead of plain text, for scripting.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import evaluation
from .bundle import BUNDLE_SUFFIX, BundleFormatError, read_bundle
from .pipeline import (
    AGGREGATIONS,
    DEFAULT_BOUNDS,
    INTERPOLATIONS,
    P_GRID_DEFAULT,
    winsor_cam,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3


class UsageError(argparse.ArgumentTypeError):
    """Bad flag values; argparse reports these cleanly when raised in type=."""


class DataError(Exception):
    pass


def _parse_bounds(text: str) -> tuple[float, float]:
    try:
        low, high = (float(part) for part in text.split(","))
    except ValueError as exc:
        raise UsageError(f"--bounds expects 'L,H', got {text!r}") from exc
    if not low < high:
        raise UsageError(f"--bounds requires L < H, got {text!r}")
    return low, high


def _parse_p_grid(text: str) -> tuple[float, ...]:
    try:
        grid = tuple(float(part) for part in text.split(","))
    except ValueError as exc:
        raise UsageError(f"--p-grid expects comma-separated numbers, got {text!r}") from exc
    if not grid:
        raise UsageError("--p-grid must not be empty")
    for p in grid:
        _check_p(p)
    return grid


def _check_p(p: float) -> float:
    if not 0.0 <= p <= 100.0:
        raise UsageError(f"percentile must lie in [0, 100], got {p}")
    return p


def _check_alpha(alpha: float) -> float:
    if not 0.0 <= alpha <= 1.0:
        raise UsageError(f"--alpha must lie in [0, 1], got {alpha}")
    return alpha


def _read_bundle_or_fail(path: str):
    try:
        return read_bundle(path)
    except FileNotFoundError as exc:
        raise DataError(f"bundle not found: {path}") from exc
    except BundleFormatError as exc:
        raise DataError(str(exc)) from exc


def _write(out_dir: Path, name: str, data: bytes) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / name).write_bytes(data)


def cmd_compute(args) -> int:
    _check_p(args.p)
    _check_alpha(args.alpha)
    bundle = _read_bundle_or_fail(args.bundle)
    result = winsor_cam(bundle, bundle.class_index, args.p, args.agg, args.interp, args.bounds)
    artifacts = evaluation.render_artifacts(bundle, result, args.interp, args.alpha)
    out_dir = Path(args.out)
    for name, data in artifacts.items():
        _write(out_dir, name, data)
    print(f"wrote {', '.join(sorted(artifacts))} to {out_dir}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    bundle = _read_bundle_or_fail(args.bundle)
    if bundle.mask is None:
        raise DataError(f"bundle {args.bundle} has no ground-truth mask; sweep needs one")
    records = evaluation.sweep_records(bundle, args.p_grid, args.agg, args.interp, args.bounds)
    out_dir = Path(args.out)
    _write(out_dir, "records.json", evaluation.records_to_json(records).encode("utf-8"))
    _write(out_dir, "records.csv", evaluation.records_to_csv(records).encode("utf-8"))

    best_iou = next(r for r in records if r.best_iou)
    best_dist = next(r for r in records if r.best_distance)
    print(f"best IoU {best_iou.iou:.4f} at p={best_iou.p:g}")
    print(f"best CoM distance {best_dist.com_distance_px:.4f} px at p={best_dist.p:g}")
    for record in records:
        if record.p is None:
            print(f"{record.method}: IoU {record.iou:.4f}, CoM distance {record.com_distance_px:.4f} px")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    root = Path(args.bundle_dir)
    if not root.is_dir():
        raise DataError(f"not a directory: {root}")
    paths = sorted(root.glob(f"*{BUNDLE_SUFFIX}"))
    if not paths:
        raise DataError(f"no {BUNDLE_SUFFIX} bundles in {root}")

    per_bundle: dict[str, list[evaluation.EvalRecord]] = {}
    correctness: dict[str, bool | None] = {}
    skipped = []
    for path in paths:
        bundle = _read_bundle_or_fail(str(path))
        if bundle.mask is None:
            skipped.append(bundle.bundle_id)
            continue
        per_bundle[bundle.bundle_id] = evaluation.sweep_records(
            bundle, args.p_grid, args.agg, args.interp, args.bounds
        )
        correctness[bundle.bundle_id] = evaluation.prediction_correct(bundle)
    if skipped:
        print(f"skipped (no mask): {', '.join(skipped)}", file=sys.stderr)
    if not per_bundle:
        raise DataError(f"no bundle in {root} carries a ground-truth mask")

    all_records = [r for bid in sorted(per_bundle) for r in per_bundle[bid]]
    summary = evaluation.summarize(per_bundle, correctness)
    out_dir = Path(args.out)
    _write(out_dir, "records.json", evaluation.records_to_json(all_records).encode("utf-8"))
    _write(out_dir, "records.csv", evaluation.records_to_csv(all_records).encode("utf-8"))
    _write(out_dir, "summary.json", evaluation.summary_to_json(summary).encode("utf-8"))
    _write(out_dir, "summary.csv", evaluation.summary_to_csv(summary).encode("utf-8"))
    print(evaluation.format_summary_table(summary))
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(args.bundle_dir, ui_dir=args.ui_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="winsorcam",
        description="Multi-layer saliency maps with a tunable percentile knob.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--agg", choices=AGGREGATIONS, default="mean", help="layer importance aggregation")
        p.add_argument("--interp", choices=INTERPOLATIONS, default="bilinear", help="upsampling kernel")
        p.add_argument("--bounds", type=_parse_bounds, default=DEFAULT_BOUNDS, metavar="L,H",
                       help="normalization range for positive layer weights (default 0.1,1.0)")
        p.add_argument("--json-errors", action="store_true", help="emit errors as one-line JSON on stderr")

    compute = sub.add_parser("compute", help="render heatmap/overlay/binary plus importance JSON")
    compute.add_argument("bundle", help="path to a saliency bundle")
    compute.add_argument("--p", type=float, required=True, help="winsorization percentile in [0, 100]")
    compute.add_argument("--alpha", type=float, default=0.5, help="overlay blend factor in [0, 1]")
    compute.add_argument("--out", required=True, help="output directory")
    add_common(compute)
    compute.set_defaults(func=cmd_compute)

    sweep = sub.add_parser("sweep", help="metrics at every grid percentile plus baselines")
    sweep.add_argument("bundle", help="path to a saliency bundle with a ground-truth mask")
    sweep.add_argument("--p-grid", type=_parse_p_grid, default=P_GRID_DEFAULT, metavar="P0,P1,...",
                       help="percentile grid (default 0,10,...,100)")
    sweep.add_argument("--out", required=True, help="output directory")
    add_common(sweep)
    sweep.set_defaults(func=cmd_sweep)

    evaluate = sub.add_parser("evaluate", help="aggregate metrics over a directory of bundles")
    evaluate.add_argument("bundle_dir", help="directory of saliency bundles")
    evaluate.add_argument("--p-grid", type=_parse_p_grid, default=P_GRID_DEFAULT, metavar="P0,P1,...")
    evaluate.add_argument("--out", required=True, help="output directory")
    add_common(evaluate)
    evaluate.set_defaults(func=cmd_evaluate)

    serve = sub.add_parser("serve", help="run the local HTTP service and UI")
    serve.add_argument("--bundle-dir", required=True, help="directory of saliency bundles")
    serve.add_argument("--host", default="127.0.0.1", help="bind address (default loopback)")
    serve.add_argument("--port", type=int, default=8765)
    serve.add_argument("--ui-dir", default=None, help="directory of built UI assets to serve at /")
    serve.set_defaults(func=cmd_serve)
    return parser


def _emit_error(kind: str, message: str, as_json: bool) -> None:
    if as_json:
        print(json.dumps({"error": kind, "message": message}), file=sys.stderr)
    else:
        print(f"winsorcam: {kind}: {message}", file=sys.stderr)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already reported; normalize the code
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    json_errors = getattr(args, "json_errors", False)
    try:
        return args.func(args)
    except UsageError as exc:
        _emit_error("usage", str(exc), json_errors)
        return EXIT_USAGE
    except DataError as exc:
        _emit_error("data", str(exc), json_errors)
        return EXIT_DATA
    except BundleFormatError as exc:
        _emit_error("data", str(exc), json_errors)
        return EXIT_DATA


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
