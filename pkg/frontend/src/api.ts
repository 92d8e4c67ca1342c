// Typed client for the /v1 API. The UI never computes saliency itself:
// every pixel and metric displayed comes from these endpoints, so UI and
// CLI can never disagree.

import { clampP, type ViewState } from "./state.js";

export interface BundleInfo {
  id: string;
  layers: string[];
  has_mask: boolean;
  class: number;
}

export interface Importances {
  raw: number[];
  winsorized: number[];
  normalized: number[];
  threshold: number;
}

export interface MetricPair {
  iou: number;
  com_distance_px: number;
}

export interface Metrics extends MetricPair {
  baselines: { final_layer: MetricPair; naive_mean: MetricPair };
}

export type Method = "winsor" | "final_layer" | "naive_mean";

function requireBundle(state: ViewState): string {
  if (state.bundle === null) throw new Error("no bundle selected");
  return state.bundle;
}

/**
 * Canonical heatmap URL. Baseline methods are p-independent, so their URLs
 * deliberately omit p: a slider move cannot even change the request.
 */
export function heatmapUrl(state: ViewState, method: Method = "winsor", base = ""): string {
  const params = new URLSearchParams();
  params.set("bundle", requireBundle(state));
  if (method === "winsor") params.set("p", String(clampP(state.p)));
  params.set("agg", state.agg);
  params.set("interp", state.interp);
  params.set("view", state.view);
  if (method !== "winsor") params.set("method", method);
  return `${base}/v1/heatmap?${params.toString()}`;
}

export function importancesUrl(state: ViewState, base = ""): string {
  const params = new URLSearchParams();
  params.set("bundle", requireBundle(state));
  params.set("p", String(clampP(state.p)));
  params.set("agg", state.agg);
  return `${base}/v1/importances?${params.toString()}`;
}

export function metricsUrl(state: ViewState, base = ""): string {
  const params = new URLSearchParams();
  params.set("bundle", requireBundle(state));
  params.set("p", String(clampP(state.p)));
  params.set("agg", state.agg);
  params.set("interp", state.interp);
  return `${base}/v1/metrics?${params.toString()}`;
}

async function getJson<T>(url: string): Promise<T> {
  const response = await fetch(url);
  if (!response.ok) throw new Error(`${url} -> ${response.status}`);
  return (await response.json()) as T;
}

export function fetchBundles(base = ""): Promise<BundleInfo[]> {
  return getJson<BundleInfo[]>(`${base}/v1/bundles`);
}

export function fetchImportances(state: ViewState, base = ""): Promise<Importances> {
  return getJson<Importances>(importancesUrl(state, base));
}

/** Resolves to null when the bundle has no ground-truth mask (HTTP 409). */
export async function fetchMetrics(state: ViewState, base = ""): Promise<Metrics | null> {
  const response = await fetch(metricsUrl(state, base));
  if (response.status === 409) return null;
  if (!response.ok) throw new Error(`metrics -> ${response.status}`);
  return (await response.json()) as Metrics;
}

export async function fetchHeatmapBlob(state: ViewState, method: Method = "winsor", base = ""): Promise<Blob> {
  const response = await fetch(heatmapUrl(state, method, base));
  if (!response.ok) throw new Error(`heatmap -> ${response.status}`);
  return await response.blob();
}
