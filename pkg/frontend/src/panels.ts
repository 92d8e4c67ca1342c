// Side-by-side compare view: the tunable map at the current p next to the
// two fixed baselines. Baseline panel URLs contain no p, so they are
// invariant under slider moves by construction.

import { heatmapUrl, type Method, type Metrics, type MetricPair } from "./api.js";
import type { ViewState } from "./state.js";

export interface PanelSpec {
  method: Method;
  title: string;
  url: string;
}

export function comparePanels(state: ViewState, base = ""): PanelSpec[] {
  return [
    { method: "winsor", title: `Winsor-CAM (p=${state.p})`, url: heatmapUrl(state, "winsor", base) },
    { method: "final_layer", title: "Final-layer Grad-CAM", url: heatmapUrl(state, "final_layer", base) },
    { method: "naive_mean", title: "Naive mean", url: heatmapUrl(state, "naive_mean", base) },
  ];
}

/** Metric readout for one panel, straight from the /v1/metrics payload. */
export function panelMetrics(method: Method, metrics: Metrics): MetricPair {
  if (method === "winsor") return { iou: metrics.iou, com_distance_px: metrics.com_distance_px };
  return metrics.baselines[method];
}

export function formatMetrics(pair: MetricPair | null): string {
  if (pair === null) return "";
  return `IoU ${pair.iou.toFixed(3)} · CoM ${pair.com_distance_px.toFixed(2)} px`;
}
