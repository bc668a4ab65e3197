"use strict";
// Flip-compare rank deltas between the current response and a pinned one.
// Every delta is an integer difference of two server-reported ranks; the
// client never rescores anything.
Object.defineProperty(exports, "__esModule", { value: true });
exports.computeDeltas = computeDeltas;
function computeDeltas(current, pinned) {
    const pinnedRank = new Map();
    for (const row of pinned)
        pinnedRank.set(row.item_id, row.rank);
    const currentIds = new Set(current.map((row) => row.item_id));
    const deltas = current.map((row) => {
        const before = pinnedRank.get(row.item_id);
        if (before === undefined) {
            return { itemId: row.item_id, kind: "entered", amount: 0, label: "new" };
        }
        const moved = before - row.rank; // positive: climbed toward rank 1
        if (moved > 0) {
            return { itemId: row.item_id, kind: "up", amount: moved, label: `↑ ${moved}` };
        }
        if (moved < 0) {
            return {
                itemId: row.item_id,
                kind: "down",
                amount: -moved,
                label: `↓ ${-moved}`,
            };
        }
        return { itemId: row.item_id, kind: "same", amount: 0, label: "=" };
    });
    const leftTopK = pinned
        .filter((row) => !currentIds.has(row.item_id))
        .map((row) => ({
        itemId: row.item_id,
        kind: "left",
        amount: 0,
        label: "left top-k",
    }));
    return { current: deltas, leftTopK };
}
