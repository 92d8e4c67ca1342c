// View state and its URL-query round trip. Any reachable state serializes
// into the query string and restores from it, so what-if views are shareable.

export type Aggregation = "mean" | "max";
export type Interp = "bilinear" | "nearest";
export type ViewMode = "fused" | "overlay" | "binary";

export interface ViewState {
  bundle: string | null;
  p: number; // always clamped to [0, 100]
  agg: Aggregation;
  interp: Interp;
  view: ViewMode;
}

export const DEFAULT_STATE: ViewState = {
  bundle: null,
  p: 50,
  agg: "mean",
  interp: "bilinear",
  view: "overlay",
};

const AGGREGATIONS: Aggregation[] = ["mean", "max"];
const INTERPOLATIONS: Interp[] = ["bilinear", "nearest"];
const VIEWS: ViewMode[] = ["fused", "overlay", "binary"];

export function clampP(p: number): number {
  if (!Number.isFinite(p)) return DEFAULT_STATE.p;
  return Math.min(100, Math.max(0, p));
}

function pick<T extends string>(value: string | null, allowed: T[], fallback: T): T {
  return allowed.includes(value as T) ? (value as T) : fallback;
}

/** Canonical query string (no leading "?"), fixed parameter order. */
export function toQuery(state: ViewState): string {
  const params = new URLSearchParams();
  if (state.bundle !== null) params.set("bundle", state.bundle);
  params.set("p", String(clampP(state.p)));
  params.set("agg", state.agg);
  params.set("interp", state.interp);
  params.set("view", state.view);
  return params.toString();
}

/** Tolerant restore: bad or missing fields fall back to defaults. */
export function fromQuery(query: string): ViewState {
  const params = new URLSearchParams(query.startsWith("?") ? query.slice(1) : query);
  const rawP = params.get("p");
  return {
    bundle: params.get("bundle"),
    p: rawP === null ? DEFAULT_STATE.p : clampP(Number(rawP)),
    agg: pick(params.get("agg"), AGGREGATIONS, DEFAULT_STATE.agg),
    interp: pick(params.get("interp"), INTERPOLATIONS, DEFAULT_STATE.interp),
    view: pick(params.get("view"), VIEWS, DEFAULT_STATE.view),
  };
}
