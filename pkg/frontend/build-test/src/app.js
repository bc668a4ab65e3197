"use strict";
// Wiring: sliders -> debounced query -> table, plus pin/compare and URL sync.
Object.defineProperty(exports, "__esModule", { value: true });
const api_1 = require("./api");
const deltas_1 = require("./deltas");
const render_1 = require("./render");
const state_1 = require("./state");
const DEBOUNCE_MS = 150;
function byId(id) {
    const node = document.getElementById(id);
    if (!node)
        throw new Error(`missing element #${id}`);
    return node;
}
function syncUrl(app) {
    const serialized = (0, state_1.serializeState)(app.state);
    history.replaceState(null, "", `${location.pathname}?${serialized}`);
}
function renderAll(app) {
    const resultsPanel = byId("results");
    const comparePanel = byId("compare");
    const leftPanel = byId("left-topk");
    if (!app.lastResponse) {
        resultsPanel.replaceChildren();
        return;
    }
    const axisOrder = app.axes.map((a) => a.name);
    const rows = (0, render_1.buildRowViews)(app.lastResponse, axisOrder, app.queryLabels);
    let deltaMap = null;
    if (app.pinnedResults) {
        const { current, leftTopK } = (0, deltas_1.computeDeltas)(app.lastResponse.results, app.pinnedResults);
        deltaMap = new Map(current.map((d) => [d.itemId, d]));
        (0, render_1.renderLeftTopK)(leftPanel, leftTopK);
        const pinnedRows = (0, render_1.buildRowViews)({ ...app.lastResponse, results: app.pinnedResults }, axisOrder, app.queryLabels);
        (0, render_1.renderTable)(comparePanel, pinnedRows, null, axisOrder, {});
        byId("compare-wrap").classList.add("visible");
    }
    else {
        comparePanel.replaceChildren();
        leftPanel.replaceChildren();
        byId("compare-wrap").classList.remove("visible");
    }
    (0, render_1.renderTable)(resultsPanel, rows, deltaMap, axisOrder, {
        onPivot: (itemId) => {
            app.state.queryId = itemId;
            (byId("query-id")).value = itemId;
            void refresh(app);
        },
    });
    byId("timing").textContent = `${app.lastResponse.timing_ms.toFixed(1)} ms`;
}
async function lookupQueryLabels(app) {
    // one k=1 query without self-exclusion: rank 1 is the item itself
    if (!app.state.queryId) {
        app.queryLabels = null;
        return;
    }
    const reply = await app.client.query({
        query_id: app.state.queryId,
        weights: {},
        k: 1,
        exclude_self: false,
    });
    app.queryLabels =
        reply.ok && reply.body && reply.body.results.length
            ? reply.body.results[0].labels
            : null;
}
async function refresh(app) {
    const errorPanel = byId("error-panel");
    if (!app.state.queryId)
        return;
    syncUrl(app);
    let request;
    try {
        request = (0, state_1.buildRequest)(app.state);
    }
    catch (err) {
        (0, render_1.renderError)(errorPanel, null, String(err));
        return;
    }
    const reply = await app.client.query(request);
    if (reply.stale)
        return; // a newer request already rendered
    if (!reply.ok) {
        (0, render_1.renderError)(errorPanel, reply.status, reply.errorText);
        return;
    }
    (0, render_1.renderError)(errorPanel, null, "");
    app.lastResponse = reply.body;
    await lookupQueryLabels(app);
    renderAll(app);
}
async function refreshPinned(app) {
    const request = (0, state_1.buildPinnedRequest)(app.state);
    if (!request) {
        app.pinnedResults = null;
        return;
    }
    const reply = await app.client.query(request);
    if (reply.ok && reply.body)
        app.pinnedResults = reply.body.results;
}
function buildSliders(app, onChange) {
    const panel = byId("sliders");
    panel.replaceChildren();
    const detents = document.createElement("datalist");
    detents.id = "weight-detents";
    for (const v of state_1.DETENTS) {
        const option = document.createElement("option");
        option.value = String(v);
        detents.appendChild(option);
    }
    panel.appendChild(detents);
    for (const axis of app.axes) {
        const row = document.createElement("div");
        row.className = "slider-row";
        const label = document.createElement("label");
        label.textContent = axis.name;
        const value = document.createElement("span");
        value.className = "slider-value";
        value.textContent = String(app.state.weights[axis.name] ?? 0);
        const input = document.createElement("input");
        input.type = "range";
        input.min = String(state_1.SLIDER_MIN);
        input.max = String(state_1.SLIDER_MAX);
        input.step = String(state_1.SLIDER_STEP);
        input.value = String(app.state.weights[axis.name] ?? 0);
        input.setAttribute("list", "weight-detents");
        input.addEventListener("input", () => {
            const snapped = (0, state_1.clampWeight)(Number(input.value));
            app.state.weights[axis.name] = snapped;
            value.textContent = String(snapped);
            onChange();
        });
        row.append(label, input, value);
        panel.appendChild(row);
    }
}
async function boot() {
    const client = new api_1.QueryClient("");
    const errorPanel = byId("error-panel");
    const axesReply = await client.axes();
    if (!axesReply.ok || !axesReply.body) {
        (0, render_1.renderError)(errorPanel, axesReply.status, axesReply.errorText);
        return;
    }
    const axes = axesReply.body.axes;
    const app = {
        client,
        axes,
        state: (0, state_1.deserializeState)(location.search.replace(/^\?/, ""), axes),
        lastResponse: null,
        pinnedResults: null,
        queryLabels: null,
    };
    if (Object.keys(app.state.weights).length === 0) {
        app.state = { ...(0, state_1.defaultState)(axes), ...app.state };
    }
    byId("corpus-info").textContent =
        `${axesReply.body.item_count} items, corpora: ${axesReply.body.corpora.join(", ")}`;
    const queryInput = byId("query-id");
    const kInput = byId("k");
    const selfToggle = byId("exclude-self");
    queryInput.value = app.state.queryId ?? "";
    kInput.value = String(app.state.k);
    selfToggle.checked = app.state.excludeSelf;
    const debouncedRefresh = (0, api_1.debounce)(() => void refresh(app), DEBOUNCE_MS);
    buildSliders(app, debouncedRefresh);
    queryInput.addEventListener("change", () => {
        app.state.queryId = queryInput.value.trim() || null;
        void refresh(app);
    });
    kInput.addEventListener("change", () => {
        const k = Number(kInput.value);
        if (Number.isInteger(k) && k >= 1 && k <= 1000) {
            app.state.k = k;
            void refresh(app);
        }
    });
    selfToggle.addEventListener("change", () => {
        app.state.excludeSelf = selfToggle.checked;
        void refresh(app);
    });
    const pinButton = byId("pin");
    const unpinButton = byId("unpin");
    pinButton.addEventListener("click", () => {
        if (!app.lastResponse)
            return;
        app.state.pinnedWeights = { ...app.state.weights };
        app.pinnedResults = app.lastResponse.results;
        syncUrl(app);
        renderAll(app);
    });
    unpinButton.addEventListener("click", () => {
        app.state.pinnedWeights = null;
        app.pinnedResults = null;
        syncUrl(app);
        renderAll(app);
    });
    // restore a shared session: pinned weights in the URL are re-queried
    if (app.state.pinnedWeights && app.state.queryId) {
        await refreshPinned(app);
    }
    if (app.state.queryId) {
        await refresh(app);
    }
}
document.addEventListener("DOMContentLoaded", () => {
    void boot();
});
