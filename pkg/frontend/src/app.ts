// Workbench wiring: one ViewState drives everything, every change funnels
// through the debounced scheduler, and the URL mirrors the state so any
// view can be restored by loading the same address.

import {
  fetchBundles,
  fetchHeatmapBlob,
  fetchImportances,
  fetchMetrics,
  type BundleInfo,
  type Metrics,
} from "./api.js";
import { allZero, importanceBars, renderImportanceChart } from "./chart.js";
import { comparePanels, formatMetrics, panelMetrics } from "./panels.js";
import { clampP, fromQuery, toQuery, type ViewState } from "./state.js";
import { UpdateScheduler } from "./scheduler.js";

const DEBOUNCE_MS = 100;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

const bundleSelect = el<HTMLSelectElement>("bundle-select");
const slider = el<HTMLInputElement>("p-slider");
const pReadout = el<HTMLSpanElement>("p-readout");
const fineToggle = el<HTMLInputElement>("fine-step");
const aggSelect = el<HTMLSelectElement>("agg-select");
const interpSelect = el<HTMLSelectElement>("interp-select");
const viewSelect = el<HTMLSelectElement>("view-select");
const mainImage = el<HTMLImageElement>("main-image");
const chartCanvas = el<HTMLCanvasElement>("importance-chart");
const chartEmpty = el<HTMLDivElement>("chart-empty");
const thresholdReadout = el<HTMLSpanElement>("threshold-readout");
const metricsBox = el<HTMLDivElement>("metrics-box");
const errorBanner = el<HTMLDivElement>("error-banner");
const compareRoot = el<HTMLDivElement>("compare-panels");

let state: ViewState = fromQuery(window.location.search);
let bundles: BundleInfo[] = [];
let lastMetrics: Metrics | null = null;
let mainImageUrl: string | null = null;
const baselineUrls = new Map<string, string>();

function syncControls(): void {
  bundleSelect.value = state.bundle ?? "";
  slider.value = String(state.p);
  pReadout.textContent = String(state.p); // exactly the value sent to the service
  aggSelect.value = state.agg;
  interpSelect.value = state.interp;
  viewSelect.value = state.view;
}

function syncUrl(): void {
  window.history.replaceState(null, "", `?${toQuery(state)}`);
}

function showError(message: string): void {
  errorBanner.textContent = message;
  errorBanner.hidden = false;
}

function clearError(): void {
  errorBanner.hidden = true;
}

function renderMetrics(): void {
  if (lastMetrics === null) {
    metricsBox.textContent = "no ground-truth mask: metrics unavailable";
    return;
  }
  metricsBox.textContent = formatMetrics(panelMetrics("winsor", lastMetrics));
}

function renderCompare(): void {
  if (state.bundle === null) return;
  const panels = comparePanels(state);
  for (const panel of panels) {
    const img = compareRoot.querySelector<HTMLImageElement>(`img[data-method="${panel.method}"]`);
    const title = compareRoot.querySelector<HTMLElement>(`[data-title="${panel.method}"]`);
    const metricLine = compareRoot.querySelector<HTMLElement>(`[data-metrics="${panel.method}"]`);
    if (title) title.textContent = panel.title;
    if (img && panel.method === "winsor") {
      // winsor panel shares the main image blob; assigned in refresh()
    } else if (img && baselineUrls.get(panel.method) !== panel.url) {
      baselineUrls.set(panel.method, panel.url);
      img.src = panel.url; // p-free URL: unchanged by slider moves
    }
    if (metricLine) {
      metricLine.textContent = lastMetrics ? formatMetrics(panelMetrics(panel.method, lastMetrics)) : "";
    }
  }
}

const scheduler = new UpdateScheduler(DEBOUNCE_MS, (generation) => {
  void refresh(generation);
});

async function refresh(generation: number): Promise<void> {
  if (state.bundle === null) return;
  try {
    const [blob, importances, metrics] = await Promise.all([
      fetchHeatmapBlob(state),
      fetchImportances(state),
      fetchMetrics(state),
    ]);
    if (!scheduler.isCurrent(generation)) return; // superseded: discard
    clearError();

    if (mainImageUrl !== null) URL.revokeObjectURL(mainImageUrl);
    mainImageUrl = URL.createObjectURL(blob);
    mainImage.src = mainImageUrl;
    const winsorPanel = compareRoot.querySelector<HTMLImageElement>('img[data-method="winsor"]');
    if (winsorPanel) winsorPanel.src = mainImageUrl;

    const info = bundles.find((b) => b.id === state.bundle);
    const bars = importanceBars(info ? info.layers : importances.normalized.map((_, i) => `L${i + 1}`),
      importances.normalized);
    chartEmpty.hidden = !allZero(bars);
    renderImportanceChart(chartCanvas, bars);
    thresholdReadout.textContent = importances.threshold.toPrecision(4);

    lastMetrics = metrics;
    renderMetrics();
    renderCompare();
  } catch (err) {
    if (!scheduler.isCurrent(generation)) return;
    showError(`request failed: ${String(err)}; keeping previous view`);
  }
}

function update(partial: Partial<ViewState>, immediate = false): void {
  state = { ...state, ...partial, p: clampP(partial.p ?? state.p) };
  syncControls();
  syncUrl();
  if (immediate) scheduler.scheduleNow();
  else scheduler.schedule();
}

function wireControls(): void {
  slider.addEventListener("input", () => update({ p: Number(slider.value) }));
  fineToggle.addEventListener("change", () => {
    slider.step = fineToggle.checked ? "1" : "10";
    update({ p: Number(slider.value) });
  });
  bundleSelect.addEventListener("change", () => {
    baselineUrls.clear();
    update({ bundle: bundleSelect.value }, true);
  });
  aggSelect.addEventListener("change", () => {
    baselineUrls.clear();
    update({ agg: aggSelect.value as ViewState["agg"] });
  });
  interpSelect.addEventListener("change", () => {
    baselineUrls.clear();
    update({ interp: interpSelect.value as ViewState["interp"] });
  });
  viewSelect.addEventListener("change", () => {
    baselineUrls.clear();
    update({ view: viewSelect.value as ViewState["view"] });
  });
}

async function start(): Promise<void> {
  wireControls();
  try {
    bundles = await fetchBundles();
  } catch (err) {
    showError(`cannot reach the service: ${String(err)}`);
    return;
  }
  bundleSelect.innerHTML = bundles
    .map((b) => `<option value="${b.id}">${b.id} (${b.layers.length} layers${b.has_mask ? ", mask" : ""})</option>`)
    .join("");
  if (bundles.length === 0) {
    showError("no bundles in the served directory");
    return;
  }
  if (state.bundle === null || !bundles.some((b) => b.id === state.bundle)) {
    state = { ...state, bundle: bundles[0].id }; // no dangling bundle id
  }
  slider.step = "10";
  update({}, true);
}

void start();
