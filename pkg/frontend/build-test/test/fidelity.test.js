"use strict";
Object.defineProperty(exports, "__esModule", { value: true });
// UI fidelity against the live service on a fixed demo index: the rendered
// table's ids/ranks equal the /query response, and flip-compare deltas
// equal hand-computed rank differences between two responses.
const node_assert_1 = require("node:assert");
const node_test_1 = require("node:test");
const node_child_process_1 = require("node:child_process");
const node_fs_1 = require("node:fs");
const node_os_1 = require("node:os");
const node_path_1 = require("node:path");
const deltas_1 = require("../src/deltas");
const render_1 = require("../src/render");
const state_1 = require("../src/state");
const PY = process.env.FAXIS_PYTHON ?? "python3";
let workDir;
let server = null;
let base = "";
function cli(...args) {
    (0, node_child_process_1.execFileSync)(PY, ["-m", "faxis.cli", ...args], { stdio: "pipe" });
}
function buildDemoIndex(dir) {
    const synth = (0, node_path_1.join)(dir, "synth");
    cli("synth", "--out", synth, "--speakers", "4", "--sentences", "6", "--dialects", "2", "--d-enc", "32", "--latent-dim", "8", "--noise", "0.1", "--seed", "5");
    cli("train", "--features", (0, node_path_1.join)(synth, "features.jsonl"), "--axis", "semantic", "--objective", "distill", "--teacher", (0, node_path_1.join)(synth, "teacher_semantic.fpeb"), "--dim", "8", "--steps", "150", "--lr", "0.1", "--batch-size", "16", "--seed", "5", "--out", (0, node_path_1.join)(dir, "sem.fphd"));
    cli("train", "--features", (0, node_path_1.join)(synth, "features.jsonl"), "--axis", "speaker_id", "--objective", "supcon_labels", "--dim", "8", "--steps", "150", "--lr", "0.1", "--batch-size", "16", "--seed", "6", "--out", (0, node_path_1.join)(dir, "spk.fphd"));
    cli("embed", "--features", (0, node_path_1.join)(synth, "features.jsonl"), "--heads", `${(0, node_path_1.join)(dir, "sem.fphd")},${(0, node_path_1.join)(dir, "spk.fphd")}`, "--out", (0, node_path_1.join)(dir, "emb"));
    cli("build-index", "--embeddings", (0, node_path_1.join)(dir, "emb", "embeddings.jsonl"), "--out", (0, node_path_1.join)(dir, "idx"));
    return (0, node_path_1.join)(dir, "idx");
}
function startServer(indexDir) {
    return new Promise((resolve, reject) => {
        server = (0, node_child_process_1.spawn)(PY, [
            "-m", "faxis.cli", "serve", "--index", indexDir, "--port", "0",
        ]);
        let buffer = "";
        const timer = setTimeout(() => reject(new Error(`service did not start: ${buffer}`)), 20000);
        server.stdout.on("data", (chunk) => {
            buffer += chunk.toString();
            const match = buffer.match(/http:\/\/[\d.]+:(\d+)/);
            if (match) {
                clearTimeout(timer);
                resolve(`http://127.0.0.1:${match[1]}`);
            }
        });
        server.stderr.on("data", (chunk) => {
            buffer += chunk.toString();
        });
        server.on("exit", (code) => {
            clearTimeout(timer);
            reject(new Error(`service exited early (${code}): ${buffer}`));
        });
    });
}
async function postQuery(payload) {
    const resp = await fetch(`${base}/query`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(payload),
    });
    const text = await resp.text();
    node_assert_1.strict.ok(resp.ok, `query failed: ${text}`);
    return JSON.parse(text);
}
(0, node_test_1.before)(async () => {
    workDir = (0, node_fs_1.mkdtempSync)((0, node_path_1.join)((0, node_os_1.tmpdir)(), "faxis-ui-"));
    const indexDir = buildDemoIndex(workDir);
    base = await startServer(indexDir);
});
(0, node_test_1.after)(() => {
    if (server)
        server.kill();
    (0, node_fs_1.rmSync)(workDir, { recursive: true, force: true });
});
// The fixed sharable-session URL under test.
const STATE_URL = "q=spk000-sen000&k=10&self=0&w.semantic=1&w.speaker_id=-1&pin.semantic=1&pin.speaker_id=1";
(0, node_test_1.test)("state url -> request -> rendered rows match the raw service response", async () => {
    const axesResp = await fetch(`${base}/axes`);
    const axes = (await axesResp.json()).axes;
    node_assert_1.strict.deepEqual(axes.map((a) => a.name), ["semantic", "speaker_id"]);
    const state = (0, state_1.deserializeState)(STATE_URL, axes);
    node_assert_1.strict.deepEqual(state.weights, { semantic: 1, speaker_id: -1 });
    const request = (0, state_1.buildRequest)(state);
    const body = await postQuery(request);
    const rows = (0, render_1.buildRowViews)(body, axes.map((a) => a.name), null);
    node_assert_1.strict.deepEqual(rows.map((r) => r.itemId), body.results.map((r) => r.item_id));
    node_assert_1.strict.deepEqual(rows.map((r) => r.rank), body.results.map((r) => r.rank));
    node_assert_1.strict.deepEqual(rows.map((r) => r.score), body.results.map((r) => r.score));
    // per-axis bars hold the verbatim cosines
    for (let i = 0; i < rows.length; i++) {
        node_assert_1.strict.equal(rows[i].bars[0].value, body.results[i].per_axis["semantic"]);
        node_assert_1.strict.equal(rows[i].bars[1].value, body.results[i].per_axis["speaker_id"]);
    }
    // identical url -> identical request -> identical table (purity)
    const again = await postQuery((0, state_1.buildRequest)((0, state_1.deserializeState)(STATE_URL, axes)));
    node_assert_1.strict.deepEqual(again.results.map((r) => [r.item_id, r.rank, r.score]), body.results.map((r) => [r.item_id, r.rank, r.score]));
});
(0, node_test_1.test)("flip-compare deltas equal hand-computed rank differences", async () => {
    const axesResp = await fetch(`${base}/axes`);
    const axes = (await axesResp.json()).axes;
    const state = (0, state_1.deserializeState)(STATE_URL, axes);
    const current = await postQuery((0, state_1.buildRequest)(state));
    node_assert_1.strict.ok(state.pinnedWeights);
    const pinned = await postQuery({
        ...(0, state_1.buildRequest)(state),
        weights: state.pinnedWeights,
    });
    const { current: deltas, leftTopK } = (0, deltas_1.computeDeltas)(current.results, pinned.results);
    // hand recomputation from the two raw responses
    const pinnedRanks = new Map(pinned.results.map((r) => [r.item_id, r.rank]));
    for (let i = 0; i < current.results.length; i++) {
        const row = current.results[i];
        const before = pinnedRanks.get(row.item_id);
        const delta = deltas[i];
        node_assert_1.strict.equal(delta.itemId, row.item_id);
        if (before === undefined) {
            node_assert_1.strict.equal(delta.kind, "entered");
        }
        else if (before - row.rank > 0) {
            node_assert_1.strict.equal(delta.kind, "up");
            node_assert_1.strict.equal(delta.amount, before - row.rank);
        }
        else if (before - row.rank < 0) {
            node_assert_1.strict.equal(delta.kind, "down");
            node_assert_1.strict.equal(delta.amount, row.rank - before);
        }
        else {
            node_assert_1.strict.equal(delta.kind, "same");
        }
    }
    const currentIds = new Set(current.results.map((r) => r.item_id));
    node_assert_1.strict.deepEqual(leftTopK.map((d) => d.itemId).sort(), pinned.results
        .filter((r) => !currentIds.has(r.item_id))
        .map((r) => r.item_id)
        .sort());
    // under the negative speaker weight the same-speaker items that dominated
    // the positive pin must slide down or leave the top-k entirely
    const querySpeaker = "spk000";
    const sameSpeakerPinned = pinned.results.filter((r) => r.labels["speaker"] === querySpeaker && r.item_id !== "spk000-sen000");
    node_assert_1.strict.ok(sameSpeakerPinned.length > 0, "pin should contain same-speaker rows");
    for (const row of sameSpeakerPinned) {
        const delta = deltas.find((d) => d.itemId === row.item_id);
        const left = leftTopK.some((d) => d.itemId === row.item_id);
        node_assert_1.strict.ok(left || (delta !== undefined && delta.kind === "down"), `same-speaker ${row.item_id} should fall under negative weight`);
    }
});
