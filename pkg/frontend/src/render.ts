// Row view-models and DOM rendering.
//
// buildRowViews is pure so tests can assert the table mirrors the service
// response exactly: ids, ranks, scores and per-axis cosines all come
// straight from the JSON body.

import { QueryResponse, ResultRow } from "./types";
import { RankDelta } from "./deltas";

export interface AxisBar {
  axis: string;
  value: number; // signed cosine, -1..+1, verbatim from the response
  widthPct: number; // |value| * 50, bar grows from a centered zero line
  negative: boolean;
}

export interface RowView {
  rank: number;
  itemId: string;
  corpus: string;
  sentence: string;
  speaker: string;
  score: number;
  bars: AxisBar[];
  sameSpeakerAsQuery: boolean;
}

export function buildRowViews(
  response: QueryResponse,
  axisOrder: string[],
  queryLabels: Record<string, string> | null
): RowView[] {
  const querySpeaker = queryLabels ? queryLabels["speaker"] : undefined;
  return response.results.map((row: ResultRow) => ({
    rank: row.rank,
    itemId: row.item_id,
    corpus: row.corpus,
    sentence: row.labels["sentence"] ?? "",
    speaker: row.labels["speaker"] ?? "",
    score: row.score,
    bars: axisOrder.map((axis) => {
      const value = row.per_axis[axis] ?? 0;
      return {
        axis,
        value,
        widthPct: Math.min(50, Math.abs(value) * 50),
        negative: value < 0,
      };
    }),
    sameSpeakerAsQuery:
      querySpeaker !== undefined &&
      querySpeaker !== "" &&
      row.labels["speaker"] === querySpeaker,
  }));
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function barCell(bar: AxisBar): HTMLElement {
  const cell = el("td", "axis-cell");
  const track = el("div", "bar-track");
  const fill = el("div", bar.negative ? "bar-fill negative" : "bar-fill positive");
  fill.style.width = `${bar.widthPct}%`;
  if (bar.negative) {
    fill.style.right = "50%";
  } else {
    fill.style.left = "50%";
  }
  track.appendChild(el("div", "bar-zero"));
  track.appendChild(fill);
  cell.appendChild(track);
  cell.appendChild(el("span", "bar-value", bar.value.toFixed(3)));
  cell.title = `${bar.axis}: ${bar.value}`;
  return cell;
}

export interface RenderHooks {
  onPivot?: (itemId: string) => void;
}

export function renderTable(
  container: HTMLElement,
  rows: RowView[],
  deltaByItem: Map<string, RankDelta> | null,
  axisOrder: string[],
  hooks: RenderHooks = {}
): void {
  container.replaceChildren();
  if (rows.length === 0) {
    container.appendChild(el("p", "empty-note", "no results"));
    return;
  }
  const table = el("table", "results");
  const head = el("tr");
  const columns = ["#", "id", "corpus", "sentence", "speaker", "score"];
  for (const column of columns) head.appendChild(el("th", undefined, column));
  for (const axis of axisOrder) head.appendChild(el("th", undefined, axis));
  if (deltaByItem) head.appendChild(el("th", undefined, "Δ rank"));
  head.appendChild(el("th"));
  table.appendChild(head);

  for (const row of rows) {
    const tr = el("tr", row.sameSpeakerAsQuery ? "same-speaker" : undefined);
    tr.appendChild(el("td", "rank", String(row.rank)));
    tr.appendChild(el("td", "item-id", row.itemId));
    tr.appendChild(el("td", undefined, row.corpus));
    tr.appendChild(el("td", undefined, row.sentence));
    const speaker = el("td", undefined, row.speaker);
    if (row.sameSpeakerAsQuery) speaker.append(" ⚑");
    tr.appendChild(speaker);
    tr.appendChild(el("td", "score", row.score.toFixed(4)));
    for (const bar of row.bars) tr.appendChild(barCell(bar));
    if (deltaByItem) {
      const delta = deltaByItem.get(row.itemId);
      tr.appendChild(
        el("td", `delta ${delta ? delta.kind : ""}`, delta ? delta.label : "")
      );
    }
    const pivot = el("td");
    const button = el("button", "pivot", "query this");
    button.addEventListener("click", () => hooks.onPivot?.(row.itemId));
    pivot.appendChild(button);
    tr.appendChild(pivot);
    table.appendChild(tr);
  }
  container.appendChild(table);
}

export function renderLeftTopK(container: HTMLElement, left: RankDelta[]): void {
  container.replaceChildren();
  if (left.length === 0) return;
  const note = el("div", "left-topk");
  note.appendChild(el("strong", undefined, "left top-k: "));
  note.append(left.map((d) => d.itemId).join(", "));
  container.appendChild(note);
}

// Server error bodies are shown verbatim; the UI never rewrites them.
export function renderError(
  panel: HTMLElement,
  status: number | null,
  bodyText: string
): void {
  panel.replaceChildren();
  if (status === null && bodyText === "") {
    panel.classList.remove("visible");
    return;
  }
  panel.classList.add("visible");
  panel.appendChild(
    el("div", "error-status", status === null ? "network error" : `HTTP ${status}`)
  );
  panel.appendChild(el("pre", "error-body", bodyText));
}
