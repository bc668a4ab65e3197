// Wiring: sliders -> debounced query -> table, plus pin/compare and URL sync.

import { QueryClient, debounce } from "./api";
import { computeDeltas, RankDelta } from "./deltas";
import {
  buildRowViews,
  renderError,
  renderLeftTopK,
  renderTable,
} from "./render";
import {
  DETENTS,
  ExplorerState,
  SLIDER_MAX,
  SLIDER_MIN,
  SLIDER_STEP,
  buildPinnedRequest,
  buildRequest,
  clampWeight,
  defaultState,
  deserializeState,
  serializeState,
} from "./state";
import { AxisInfo, QueryResponse, ResultRow } from "./types";

const DEBOUNCE_MS = 150;

interface AppWithLabels {
  client: QueryClient;
  axes: AxisInfo[];
  state: ExplorerState;
  lastResponse: QueryResponse | null;
  pinnedResults: ResultRow[] | null;
  // the query item is usually excluded from its own results, so its labels
  // (for same-speaker flagging) come from one k=1 self lookup
  queryLabels: Record<string, string> | null;
}

function byId<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function syncUrl(app: AppWithLabels): void {
  const serialized = serializeState(app.state);
  history.replaceState(null, "", `${location.pathname}?${serialized}`);
}

function renderAll(app: AppWithLabels): void {
  const resultsPanel = byId<HTMLElement>("results");
  const comparePanel = byId<HTMLElement>("compare");
  const leftPanel = byId<HTMLElement>("left-topk");
  if (!app.lastResponse) {
    resultsPanel.replaceChildren();
    return;
  }
  const axisOrder = app.axes.map((a) => a.name);
  const rows = buildRowViews(app.lastResponse, axisOrder, app.queryLabels);
  let deltaMap: Map<string, RankDelta> | null = null;
  if (app.pinnedResults) {
    const { current, leftTopK } = computeDeltas(
      app.lastResponse.results,
      app.pinnedResults
    );
    deltaMap = new Map(current.map((d) => [d.itemId, d]));
    renderLeftTopK(leftPanel, leftTopK);
    const pinnedRows = buildRowViews(
      { ...app.lastResponse, results: app.pinnedResults },
      axisOrder,
      app.queryLabels
    );
    renderTable(comparePanel, pinnedRows, null, axisOrder, {});
    byId<HTMLElement>("compare-wrap").classList.add("visible");
  } else {
    comparePanel.replaceChildren();
    leftPanel.replaceChildren();
    byId<HTMLElement>("compare-wrap").classList.remove("visible");
  }
  renderTable(resultsPanel, rows, deltaMap, axisOrder, {
    onPivot: (itemId) => {
      app.state.queryId = itemId;
      (byId<HTMLInputElement>("query-id")).value = itemId;
      void refresh(app);
    },
  });
  byId<HTMLElement>("timing").textContent = `${app.lastResponse.timing_ms.toFixed(
    1
  )} ms`;
}

async function lookupQueryLabels(app: AppWithLabels): Promise<void> {
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

async function refresh(app: AppWithLabels): Promise<void> {
  const errorPanel = byId<HTMLElement>("error-panel");
  if (!app.state.queryId) return;
  syncUrl(app);
  let request;
  try {
    request = buildRequest(app.state);
  } catch (err) {
    renderError(errorPanel, null, String(err));
    return;
  }
  const reply = await app.client.query(request);
  if (reply.stale) return; // a newer request already rendered
  if (!reply.ok) {
    renderError(errorPanel, reply.status, reply.errorText);
    return;
  }
  renderError(errorPanel, null, "");
  app.lastResponse = reply.body;
  await lookupQueryLabels(app);
  renderAll(app);
}

async function refreshPinned(app: AppWithLabels): Promise<void> {
  const request = buildPinnedRequest(app.state);
  if (!request) {
    app.pinnedResults = null;
    return;
  }
  const reply = await app.client.query(request);
  if (reply.ok && reply.body) app.pinnedResults = reply.body.results;
}

function buildSliders(app: AppWithLabels, onChange: () => void): void {
  const panel = byId<HTMLElement>("sliders");
  panel.replaceChildren();
  const detents = document.createElement("datalist");
  detents.id = "weight-detents";
  for (const v of DETENTS) {
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
    input.min = String(SLIDER_MIN);
    input.max = String(SLIDER_MAX);
    input.step = String(SLIDER_STEP);
    input.value = String(app.state.weights[axis.name] ?? 0);
    input.setAttribute("list", "weight-detents");
    input.addEventListener("input", () => {
      const snapped = clampWeight(Number(input.value));
      app.state.weights[axis.name] = snapped;
      value.textContent = String(snapped);
      onChange();
    });
    row.append(label, input, value);
    panel.appendChild(row);
  }
}

async function boot(): Promise<void> {
  const client = new QueryClient("");
  const errorPanel = byId<HTMLElement>("error-panel");
  const axesReply = await client.axes();
  if (!axesReply.ok || !axesReply.body) {
    renderError(errorPanel, axesReply.status, axesReply.errorText);
    return;
  }
  const axes = axesReply.body.axes;
  const app: AppWithLabels = {
    client,
    axes,
    state: deserializeState(location.search.replace(/^\?/, ""), axes),
    lastResponse: null,
    pinnedResults: null,
    queryLabels: null,
  };
  if (Object.keys(app.state.weights).length === 0) {
    app.state = { ...defaultState(axes), ...app.state };
  }
  byId<HTMLElement>("corpus-info").textContent =
    `${axesReply.body.item_count} items, corpora: ${axesReply.body.corpora.join(", ")}`;

  const queryInput = byId<HTMLInputElement>("query-id");
  const kInput = byId<HTMLInputElement>("k");
  const selfToggle = byId<HTMLInputElement>("exclude-self");
  queryInput.value = app.state.queryId ?? "";
  kInput.value = String(app.state.k);
  selfToggle.checked = app.state.excludeSelf;

  const debouncedRefresh = debounce(() => void refresh(app), DEBOUNCE_MS);
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

  const pinButton = byId<HTMLButtonElement>("pin");
  const unpinButton = byId<HTMLButtonElement>("unpin");
  pinButton.addEventListener("click", () => {
    if (!app.lastResponse) return;
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
