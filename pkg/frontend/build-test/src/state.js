"use strict";
// Explorer state and its URL (de)serialization.
//
// Slider values map one-to-one onto the weights sent to the service, so a
// shared URL reproduces the identical request byte for byte.  The pinned
// snapshot's weights travel in the URL too; its results are re-fetched on
// load (the service is pure, so the same index yields the same rows).
Object.defineProperty(exports, "__esModule", { value: true });
exports.DETENTS = exports.SLIDER_STEP = exports.SLIDER_MAX = exports.SLIDER_MIN = void 0;
exports.clampWeight = clampWeight;
exports.defaultState = defaultState;
exports.serializeState = serializeState;
exports.deserializeState = deserializeState;
exports.buildRequest = buildRequest;
exports.buildPinnedRequest = buildPinnedRequest;
exports.SLIDER_MIN = -2;
exports.SLIDER_MAX = 2;
exports.SLIDER_STEP = 0.05;
exports.DETENTS = [-1, 0, 1];
function clampWeight(value) {
    if (!Number.isFinite(value))
        return 0;
    const bounded = Math.min(exports.SLIDER_MAX, Math.max(exports.SLIDER_MIN, value));
    // snap to the 0.05 grid; round once to kill float residue like 0.15000000000000002
    return Math.round(bounded / exports.SLIDER_STEP) * exports.SLIDER_STEP === 0
        ? 0
        : Number((Math.round(bounded / exports.SLIDER_STEP) * exports.SLIDER_STEP).toFixed(2));
}
function defaultState(axes) {
    const weights = {};
    for (const axis of axes)
        weights[axis.name] = 1;
    return { queryId: null, weights, k: 10, excludeSelf: true, pinnedWeights: null };
}
function serializeState(state) {
    const params = new URLSearchParams();
    if (state.queryId)
        params.set("q", state.queryId);
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
function deserializeState(query, axes) {
    const params = new URLSearchParams(query);
    const state = defaultState(axes);
    const q = params.get("q");
    if (q)
        state.queryId = q;
    const k = Number(params.get("k"));
    if (Number.isInteger(k) && k >= 1 && k <= 1000)
        state.k = k;
    if (params.get("self") === "1")
        state.excludeSelf = false;
    const known = new Set(axes.map((a) => a.name));
    let pinned = null;
    for (const [key, raw] of params.entries()) {
        if (key.startsWith("w.")) {
            const axis = key.slice(2);
            if (known.has(axis))
                state.weights[axis] = clampWeight(Number(raw));
        }
        else if (key.startsWith("pin.")) {
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
function buildRequest(state) {
    if (!state.queryId)
        throw new Error("no query item selected");
    return {
        query_id: state.queryId,
        weights: { ...state.weights },
        k: state.k,
        exclude_self: state.excludeSelf,
    };
}
function buildPinnedRequest(state) {
    if (!state.queryId || !state.pinnedWeights)
        return null;
    return {
        query_id: state.queryId,
        weights: { ...state.pinnedWeights },
        k: state.k,
        exclude_self: state.excludeSelf,
    };
}
