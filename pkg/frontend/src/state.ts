// Explorer state and its URL (de)serialization.
//
// Slider values map one-to-one onto the weights sent to the service, so a
// shared URL reproduces the identical request byte for byte.  The pinned
// snapshot's weights travel in the URL too; its results are re-fetched on
// load (the service is pure, so the same index yields the same rows).

import { AxisInfo, QueryRequest, ResultRow } from "./types";

export const SLIDER_MIN = -2;
export const SLIDER_MAX = 2;
export const SLIDER_STEP = 0.05;
export const DETENTS = [-1, 0, 1];

export interface PinnedSnapshot {
  weights: Record<string, number>;
  results: ResultRow[];
}

export interface ExplorerState {
  queryId: string | null;
  weights: Record<string, number>;
  k: number;
  excludeSelf: boolean;
  pinnedWeights: Record<string, number> | null;
}

export function clampWeight(value: number): number {
  if (!Number.isFinite(value)) return 0;
  const bounded = Math.min(SLIDER_MAX, Math.max(SLIDER_MIN, value));
  // snap to the 0.05 grid; round once to kill float residue like 0.15000000000000002
  return Math.round(bounded / SLIDER_STEP) * SLIDER_STEP === 0
    ? 0
    : Number((Math.round(bounded / SLIDER_STEP) * SLIDER_STEP).toFixed(2));
}

export function defaultState(axes: AxisInfo[]): ExplorerState {
  const weights: Record<string, number> = {};
  for (const axis of axes) weights[axis.name] = 1;
  return { queryId: null, weights, k: 10, excludeSelf: true, pinnedWeights: null };
}

export function serializeState(state: ExplorerState): string {
  const params = new URLSearchParams();
  if (state.queryId) params.set("q", state.queryId);
  params.set("k", String(state.k));
  params.set("self", state.excludeSelf ? "0" : "1"); // self=1 means include self
  for (const [axis, value] of Object.entries(state.weights)) {
    params.set(`w.${axis}`, String(value));
  }
  if (state.pinnedWeights) {
    for (const [axis, value] of Object.entries(state.pinnedWeights)) {
      params.set(`pin.${axis}`, String(value));
    }
  }
  return params.toString();
}

export function deserializeState(query: string, axes: AxisInfo[]): ExplorerState {
  const params = new URLSearchParams(query);
  const state = defaultState(axes);
  const q = params.get("q");
  if (q) state.queryId = q;
  const k = Number(params.get("k"));
  if (Number.isInteger(k) && k >= 1 && k <= 1000) state.k = k;
  if (params.get("self") === "1") state.excludeSelf = false;
  const known = new Set(axes.map((a) => a.name));
  let pinned: Record<string, number> | null = null;
  for (const [key, raw] of params.entries()) {
    if (key.startsWith("w.")) {
      const axis = key.slice(2);
      if (known.has(axis)) state.weights[axis] = clampWeight(Number(raw));
    } else if (key.startsWith("pin.")) {
      const axis = key.slice(4);
      if (known.has(axis)) {
        pinned = pinned ?? {};
        pinned[axis] = clampWeight(Number(raw));
      }
    }
  }
  state.pinnedWeights = pinned;
  return state;
}

// The request sent to POST /query; slider values pass through unchanged.
export function buildRequest(state: ExplorerState): QueryRequest {
  if (!state.queryId) throw new Error("no query item selected");
  return {
    query_id: state.queryId,
    weights: { ...state.weights },
    k: state.k,
    exclude_self: state.excludeSelf,
  };
}

export function buildPinnedRequest(state: ExplorerState): QueryRequest | null {
  if (!state.queryId || !state.pinnedWeights) return null;
  return {
    query_id: state.queryId,
    weights: { ...state.pinnedWeights },
    k: state.k,
    exclude_self: state.excludeSelf,
  };
}
