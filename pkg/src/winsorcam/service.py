"""Local HTTP service for interactive exploration of saliency bundles.

Versioned JSON/image API under /v1, consumed by the browser UI:

    GET /v1/bundles                                  catalog listing
    GET /v1/heatmap?bundle&p&agg&interp&view&method  PNG bytes
    GET /v1/importances?bundle&p&agg                 per-layer weights
    GET /v1/metrics?bundle&p&agg&interp              IoU / CoM vs the mask

The percentile-independent prefix of the pipeline (per-layer Grad-CAM maps
and their interpolated versions) is cached per bundle, so slider-driven
requests only redo the cheap winsorize/normalize/fuse tail.  Responses are
pure functions of (bundle bytes, query params): the heatmap endpoint
returns byte-identical PNGs to the CLI's files for the same parameters.

Binds to loopback by default; this is a desk tool, not a deployment.
"""

from __future__ import annotations

import threading
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Query, Response
from fastapi.responses import HTMLResponse
from fastapi.staticfiles import StaticFiles

from . import evaluation
from .bundle import BUNDLE_SUFFIX, DEFAULT_OVERLAY_ALPHA, SaliencyBundle, read_bundle
from .gradcam import LayerGradCam, all_layer_gradcams
from .pipeline import (
    AGGREGATIONS,
    INTERPOLATIONS,
    WinsorCamResult,
    final_layer_baseline,
    fuse_weighted,
    interpolate_maps,
    layer_importance,
    naive_mean_baseline,
)

VIEWS = ("fused", "overlay", "binary")
METHODS = (evaluation.METHOD_WINSOR, evaluation.METHOD_FINAL, evaluation.METHOD_NAIVE)

_PLACEHOLDER_PAGE = """<!doctype html>
<html><head><title>winsorcam service</title></head>
<body>
<h1>winsorcam service</h1>
<p>The API is live under <code>/v1</code> (try <a href="/v1/bundles">/v1/bundles</a>).</p>
<p>No UI assets are mounted. Build the frontend (<code>npm run build</code> in
<code>frontend/</code>) and restart with <code>--ui-dir frontend/dist</code>.</p>
</body></html>
"""


class SessionCatalog:
    """Bundles loaded at startup plus caches for the p-independent pipeline prefix."""

    def __init__(self, bundle_dir):
        self.bundle_dir = Path(bundle_dir)
        self.bundles: dict[str, SaliencyBundle] = {}
        for path in sorted(self.bundle_dir.glob(f"*{BUNDLE_SUFFIX}")):
            bundle = read_bundle(path)
            self.bundles[bundle.bundle_id] = bundle
        self._cams: dict[tuple[str, int], list[LayerGradCam]] = {}
        self._maps: dict[tuple[str, int, str], tuple[list[np.ndarray], tuple[int, int]]] = {}
        self._lock = threading.Lock()

    def ids(self) -> list[str]:
        return sorted(self.bundles)

    def get(self, bundle_id: str) -> SaliencyBundle:
        try:
            return self.bundles[bundle_id]
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown bundle {bundle_id!r}")

    def cams(self, bundle_id: str) -> list[LayerGradCam]:
        bundle = self.get(bundle_id)
        key = (bundle_id, bundle.class_index)
        with self._lock:  # compute each bundle's Grad-CAM list exactly once
            if key not in self._cams:
                self._cams[key] = all_layer_gradcams(bundle, bundle.class_index)
            return self._cams[key]

    def interpolated(self, bundle_id: str, interp: str) -> tuple[list[np.ndarray], tuple[int, int]]:
        bundle = self.get(bundle_id)
        key = (bundle_id, bundle.class_index, interp)
        cams = self.cams(bundle_id)
        with self._lock:
            if key not in self._maps:
                self._maps[key] = interpolate_maps(cams, interp)
            return self._maps[key]


def _check_choice(value: str, allowed: tuple[str, ...], name: str) -> str:
    if value not in allowed:
        raise HTTPException(status_code=400, detail=f"{name} must be one of {list(allowed)}, got {value!r}")
    return value


def _check_p(p: float) -> float:
    if not 0.0 <= p <= 100.0:
        raise HTTPException(status_code=400, detail=f"p must lie in [0, 100], got {p}")
    return p


def create_app(bundle_dir, ui_dir=None) -> FastAPI:
    catalog = SessionCatalog(bundle_dir)
    app = FastAPI(title="winsorcam", version="1")
    app.state.catalog = catalog

    def winsor_result(bundle_id: str, p: float, agg: str, interp: str) -> WinsorCamResult:
        cams = catalog.cams(bundle_id)
        maps, size = catalog.interpolated(bundle_id, interp)
        importance = layer_importance(cams, p, agg)
        return WinsorCamResult(fuse_weighted(maps, importance.normalized), maps, importance, size)

    @app.get("/v1/bundles")
    def list_bundles():
        out = []
        for bundle_id in catalog.ids():
            bundle = catalog.bundles[bundle_id]
            out.append(
                {
                    "id": bundle_id,
                    "layers": bundle.layer_names,
                    "has_mask": bundle.has_mask,
                    "class": bundle.class_index,
                }
            )
        return out

    @app.get("/v1/heatmap")
    def heatmap(
        bundle: str,
        p: float = Query(default=50.0),
        agg: str = Query(default="mean"),
        interp: str = Query(default="bilinear"),
        view: str = Query(default="overlay"),
        method: str = Query(default=evaluation.METHOD_WINSOR),
        alpha: float = Query(default=DEFAULT_OVERLAY_ALPHA, ge=0.0, le=1.0),
    ):
        _check_p(p)
        _check_choice(agg, AGGREGATIONS, "agg")
        _check_choice(interp, INTERPOLATIONS, "interp")
        _check_choice(view, VIEWS, "view")
        _check_choice(method, METHODS, "method")
        loaded = catalog.get(bundle)
        if method == evaluation.METHOD_WINSOR:
            saliency = winsor_result(bundle, p, agg, interp).fused
        elif method == evaluation.METHOD_FINAL:
            saliency = final_layer_baseline(catalog.cams(bundle), interp)
        else:
            saliency = naive_mean_baseline(catalog.cams(bundle), interp)
        views = evaluation.render_views(loaded, saliency, interp, alpha)
        return Response(content=views[view], media_type="image/png")

    @app.get("/v1/importances")
    def importances(bundle: str, p: float = Query(default=50.0), agg: str = Query(default="mean")):
        _check_p(p)
        _check_choice(agg, AGGREGATIONS, "agg")
        catalog.get(bundle)
        importance = layer_importance(catalog.cams(bundle), p, agg)
        return {
            "raw": importance.raw.tolist(),
            "winsorized": importance.winsorized.tolist(),
            "normalized": importance.normalized.tolist(),
            "threshold": importance.threshold,
        }

    @app.get("/v1/metrics")
    def metrics(
        bundle: str,
        p: float = Query(default=50.0),
        agg: str = Query(default="mean"),
        interp: str = Query(default="bilinear"),
    ):
        _check_p(p)
        _check_choice(agg, AGGREGATIONS, "agg")
        _check_choice(interp, INTERPOLATIONS, "interp")
        loaded = catalog.get(bundle)
        if loaded.mask is None:
            raise HTTPException(status_code=409, detail=f"bundle {bundle!r} has no ground-truth mask")
        cams = catalog.cams(bundle)
        fused = winsor_result(bundle, p, agg, interp).fused
        iou_value, dist = evaluation.score_map(fused, loaded.mask, interp)
        final_iou, final_dist = evaluation.score_map(final_layer_baseline(cams, interp), loaded.mask, interp)
        naive_iou, naive_dist = evaluation.score_map(naive_mean_baseline(cams, interp), loaded.mask, interp)
        return {
            "iou": iou_value,
            "com_distance_px": dist,
            "baselines": {
                "final_layer": {"iou": final_iou, "com_distance_px": final_dist},
                "naive_mean": {"iou": naive_iou, "com_distance_px": naive_dist},
            },
        }

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")
    else:

        @app.get("/", response_class=HTMLResponse)
        def index():
            return _PLACEHOLDER_PAGE

    return app
