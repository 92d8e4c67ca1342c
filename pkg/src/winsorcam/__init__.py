"""Human-tunable multi-layer CNN saliency maps with percentile clipping."""

from .tensorops import (
    DEFAULT_EPSILON,
    interp_bilinear,
    interp_nearest,
    minmax_normalize,
    quantile_linear,
)
from .microcnn import (
    ConvSpec,
    ForwardTrace,
    MicroCnn,
    SplitMix64,
    TracedRun,
    backward_to_activations,
    forward,
    forward_from,
    load_model,
    make_synthetic_fixture,
    run,
    run_to_bundle,
    save_model,
)
from .gradcam import LayerGradCam, all_layer_gradcams, layer_gradcam
from .pipeline import (
    AGGREGATIONS,
    DEFAULT_BOUNDS,
    INTERPOLATIONS,
    P_GRID_DEFAULT,
    ImportanceVector,
    NoPositiveImportanceWarning,
    WinsorCamResult,
    aggregate_importance,
    final_layer_baseline,
    fuse,
    layer_importance,
    naive_mean_baseline,
    normalize_importance,
    winsor_cam,
    winsorize,
)
from .metrics import CenterOfMass, center_of_mass, com_distance, iou, otsu_threshold
from .bundle import (
    BundleFormatError,
    HeatmapImage,
    SaliencyBundle,
    export_heatmap_png,
    load_image,
    load_mask_image,
    make_bundle,
    read_bundle,
    render_binary,
    render_heatmap,
    render_overlay,
    write_bundle,
)

__version__ = "0.1.0"

__all__ = [
    "AGGREGATIONS",
    "BundleFormatError",
    "CenterOfMass",
    "ConvSpec",
    "DEFAULT_BOUNDS",
    "DEFAULT_EPSILON",
    "ForwardTrace",
    "HeatmapImage",
    "INTERPOLATIONS",
    "ImportanceVector",
    "LayerGradCam",
    "MicroCnn",
    "NoPositiveImportanceWarning",
    "P_GRID_DEFAULT",
    "SaliencyBundle",
    "SplitMix64",
    "TracedRun",
    "WinsorCamResult",
    "aggregate_importance",
    "all_layer_gradcams",
    "backward_to_activations",
    "center_of_mass",
    "com_distance",
    "export_heatmap_png",
    "final_layer_baseline",
    "forward",
    "forward_from",
    "fuse",
    "interp_bilinear",
    "interp_nearest",
    "iou",
    "layer_gradcam",
    "layer_importance",
    "load_image",
    "load_mask_image",
    "load_model",
    "make_bundle",
    "make_synthetic_fixture",
    "minmax_normalize",
    "naive_mean_baseline",
    "normalize_importance",
    "otsu_threshold",
    "quantile_linear",
    "read_bundle",
    "render_binary",
    "render_heatmap",
    "render_overlay",
    "run",
    "run_to_bundle",
    "save_model",
    "winsor_cam",
    "winsorize",
    "write_bundle",
]
