"use strict";
// Service client with newest-wins sequencing and a debounce helper.
//
// At most one query result is ever delivered out of order: each request
// gets a sequence number and a response is dropped when a newer one has
// already been delivered.
Object.defineProperty(exports, "__esModule", { value: true });
exports.QueryClient = void 0;
exports.debounce = debounce;
class QueryClient {
    constructor(base = "") {
        this.issued = 0;
        this.delivered = 0;
        this.base = base.replace(/\/$/, "");
    }
    async axes() {
        return this.get("/axes");
    }
    async get(path) {
        try {
            const resp = await fetch(this.base + path);
            const text = await resp.text();
            if (!resp.ok) {
                return { ok: false, status: resp.status, body: null, errorText: text, stale: false };
            }
            return { ok: true, status: resp.status, body: JSON.parse(text), errorText: "", stale: false };
        }
        catch (err) {
            return { ok: false, status: null, body: null, errorText: String(err), stale: false };
        }
    }
    // Stale responses (older than the newest delivered one) come back with
    // stale=true and must be ignored by the caller.
    async query(request) {
        const seq = ++this.issued;
        let reply;
        try {
            const resp = await fetch(this.base + "/query", {
                method: "POST",
                headers: { "Content-Type": "application/json" },
                body: JSON.stringify(request),
            });
            const text = await resp.text();
            reply = resp.ok
                ? { ok: true, status: resp.status, body: JSON.parse(text), errorText: "", stale: false }
                : { ok: false, status: resp.status, body: null, errorText: text, stale: false };
        }
        catch (err) {
            reply = { ok: false, status: null, body: null, errorText: String(err), stale: false };
        }
        if (seq <= this.delivered) {
            reply.stale = true;
            return reply;
        }
        this.delivered = seq;
        return reply;
    }
}
exports.QueryClient = QueryClient;
function debounce(fn, waitMs) {
    let timer = null;
    const wrapped = (...args) => {
        if (timer !== null)
            clearTimeout(timer);
        timer = setTimeout(() => {
            timer = null;
            fn(...args);
        }, waitMs);
    };
    wrapped.cancel = () => {
        if (timer !== null)
            clearTimeout(timer);
        timer = null;
    };
    return wrapped;
}
