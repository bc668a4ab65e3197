// Service client with newest-wins sequencing and a debounce helper.
//
// At most one query result is ever delivered out of order: each request
// gets a sequence number and a response is dropped when a newer one has
// already been delivered.

import { AxesResponse, QueryRequest, QueryResponse } from "./types";

export interface ServiceReply<T> {
  ok: boolean;
  status: number | null; // null on network failure
  body: T | null;
  errorText: string;
  stale: boolean;
}

export class QueryClient {
  private base: string;
  private issued = 0;
  private delivered = 0;

  constructor(base = "") {
    this.base = base.replace(/\/$/, "");
  }

  async axes(): Promise<ServiceReply<AxesResponse>> {
    return this.get<AxesResponse>("/axes");
  }

  private async get<T>(path: string): Promise<ServiceReply<T>> {
    try {
      const resp = await fetch(this.base + path);
      const text = await resp.text();
      if (!resp.ok) {
        return { ok: false, status: resp.status, body: null, errorText: text, stale: false };
      }
      return { ok: true, status: resp.status, body: JSON.parse(text) as T, errorText: "", stale: false };
    } catch (err) {
      return { ok: false, status: null, body: null, errorText: String(err), stale: false };
    }
  }

  // Stale responses (older than the newest delivered one) come back with
  // stale=true and must be ignored by the caller.
  async query(request: QueryRequest): Promise<ServiceReply<QueryResponse>> {
    const seq = ++this.issued;
    let reply: ServiceReply<QueryResponse>;
    try {
      const resp = await fetch(this.base + "/query", {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(request),
      });
      const text = await resp.text();
      reply = resp.ok
        ? { ok: true, status: resp.status, body: JSON.parse(text) as QueryResponse, errorText: "", stale: false }
        : { ok: false, status: resp.status, body: null, errorText: text, stale: false };
    } catch (err) {
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

export function debounce<A extends unknown[]>(
  fn: (...args: A) => void,
  waitMs: number
): ((...args: A) => void) & { cancel: () => void } {
  let timer: ReturnType<typeof setTimeout> | null = null;
  const wrapped = (...args: A) => {
    if (timer !== null) clearTimeout(timer);
    timer = setTimeout(() => {
      timer = null;
      fn(...args);
    }, waitMs);
  };
  wrapped.cancel = () => {
    if (timer !== null) clearTimeout(timer);
    timer = null;
  };
  return wrapped;
}
