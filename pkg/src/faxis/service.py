"""Minimal HTTP query service over a loaded index.

JSON over HTTP/1.1, bound to localhost by default: a desk-scale
exploration surface, not production infrastructure.  Responses are pure
functions of (index, request) apart from the timing field; the index is
immutable and shared lock-free across request threads, and a reload swaps
the reference atomically so in-flight requests finish on the old index.

Endpoints:
  GET  /axes         axis schema, item count, label fields, corpus tags
  POST /query        weight-conditioned retrieval (see QueryRequest)
  POST /flip-report  preference-flip evaluation over index-resident queries
"""

from __future__ import annotations

import json
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Mapping

import numpy as np

from .core import (
    INGEST_NORM_TOL,
    AxisSchema,
    PartitionedEmbedding,
    QueryWeights,
    concat,
)
from .errors import FaxisError, MissingLabel, UnknownAxis, UnknownId
from .evaluation import QuerySet, preference_flip_report, report_to_json
from .index import Index, query as index_query

DEFAULT_PORT = 7878

_CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".map": "application/json",
    ".json": "application/json",
    ".svg": "image/svg+xml",
}


class RequestError(FaxisError):
    """Maps a request problem onto an HTTP status code."""

    def __init__(self, status: int, message: str):
        super().__init__(message)
        self.status = status


def _parse_weights(obj, schema: AxisSchema) -> QueryWeights:
    if not isinstance(obj, Mapping):
        raise RequestError(400, "weights must be an object of axis: number")
    try:
        weights = QueryWeights({k: float(v) for k, v in obj.items()})
    except (TypeError, ValueError):
        raise RequestError(400, "weights must map axis names to numbers") from None
    try:
        weights.resolve(schema)
    except UnknownAxis as exc:
        raise RequestError(400, str(exc)) from exc
    return weights


def _parse_query_embedding(obj, schema: AxisSchema) -> PartitionedEmbedding:
    if not isinstance(obj, Mapping):
        raise RequestError(400, "query_embedding must map axis names to vectors")
    parts = {}
    for name, dim in schema.axes:
        if name not in obj:
            raise RequestError(400, f"query_embedding missing axis {name!r}")
        vec = np.asarray(obj[name], dtype=np.float64)
        if vec.ndim != 1 or vec.shape[0] != dim:
            raise RequestError(
                400, f"axis {name!r} expects a vector of dim {dim}"
            )
        norm = float(np.linalg.norm(vec))
        if abs(norm - 1.0) > INGEST_NORM_TOL:
            raise RequestError(
                422,
                f"axis {name!r} vector has norm {norm:.6f}; clients must "
                f"pre-normalize to unit length (tolerance {INGEST_NORM_TOL})",
            )
        parts[name] = vec
    extras = [k for k in obj if k not in schema.names]
    if extras:
        raise RequestError(
            400, f"unknown axis {extras[0]!r}; valid axes: {list(schema.names)}"
        )
    return concat(schema, parts)


def _parse_filter(obj):
    if obj is None:
        return None
    if not isinstance(obj, Mapping):
        raise RequestError(400, "filter must be an object")
    corpus = obj.get("corpus")
    equals = obj.get("label_equals", {}) or {}
    not_equals = obj.get("label_not_equals", {}) or {}
    if not isinstance(equals, Mapping) or not isinstance(not_equals, Mapping):
        raise RequestError(400, "label_equals/label_not_equals must be objects")

    def predicate(item_corpus: str, labels: Mapping[str, str]) -> bool:
        if corpus is not None and item_corpus != corpus:
            return False
        for key, value in equals.items():
            if labels.get(key) != value:
                return False
        for key, value in not_equals.items():
            if labels.get(key) == value:
                return False
        return True

    return predicate


def handle_axes(index: Index | None) -> tuple[int, dict]:
    if index is None:
        return 503, {"error": "no index loaded"}
    return 200, {
        "axes": [{"name": n, "dim": d} for n, d in index.schema.axes],
        "item_count": len(index),
        "label_fields": index.label_fields(),
        "corpora": index.corpora(),
    }


def handle_query(index: Index | None, body: Mapping) -> tuple[int, dict]:
    if index is None:
        return 503, {"error": "no index loaded"}
    if not isinstance(body, Mapping):
        raise RequestError(400, "request body must be a JSON object")
    has_id = "query_id" in body
    has_embedding = "query_embedding" in body
    if has_id == has_embedding:
        raise RequestError(400, "provide exactly one of query_id, query_embedding")
    k = body.get("k", 10)
    if not isinstance(k, int) or not 1 <= k <= 1000:
        raise RequestError(400, "k must be an integer in [1, 1000]")
    weights = _parse_weights(body.get("weights", {}), index.schema)
    exclude_self = bool(body.get("exclude_self", True))
    filter_fn = _parse_filter(body.get("filter"))

    exclude_ids = None
    if has_id:
        query_id = str(body["query_id"])
        try:
            record = index.record(query_id)
        except UnknownId as exc:
            raise RequestError(404, str(exc)) from exc
        embedding = record.embedding
        if exclude_self:
            exclude_ids = {query_id}
    else:
        embedding = _parse_query_embedding(body["query_embedding"], index.schema)

    start = time.perf_counter()
    hits = index_query(
        index, embedding, weights, k, filter=filter_fn, exclude_ids=exclude_ids
    )
    elapsed_ms = (time.perf_counter() - start) * 1000.0
    results = []
    for hit in hits:
        item = index.record(hit.item_id)
        results.append(
            {
                "item_id": hit.item_id,
                "corpus": item.corpus,
                "labels": dict(item.labels),
                "score": hit.score,
                "rank": hit.rank,
                "per_axis": dict(hit.per_axis),
            }
        )
    return 200, {
        "results": results,
        "weights": dict(weights.weights),
        "empty_after_filter": hits.empty_after_filter,
        "timing_ms": elapsed_ms,
    }


def handle_flip_report(index: Index | None, body: Mapping) -> tuple[int, dict]:
    if index is None:
        return 503, {"error": "no index loaded"}
    if not isinstance(body, Mapping):
        raise RequestError(400, "request body must be a JSON object")
    settings_raw = body.get("settings")
    if not isinstance(settings_raw, list) or not settings_raw:
        raise RequestError(400, "settings must be a non-empty list of weight objects")
    settings = [_parse_weights(s, index.schema) for s in settings_raw]
    sentence_key = str(body.get("sentence_key", "sentence"))
    speaker_key = str(body.get("speaker_key", "speaker"))
    exclude_self = bool(body.get("exclude_self", True))
    ids = body.get("query_ids")
    corpus = body.get("query_corpus")
    try:
        queryset = QuerySet.from_index(
            index,
            corpus=corpus,
            ids=[str(i) for i in ids] if ids is not None else None,
            sentence_key=sentence_key,
            speaker_key=speaker_key,
        )
    except FaxisError as exc:
        raise RequestError(400, str(exc)) from exc
    try:
        report = preference_flip_report(
            queryset, index, settings, exclude_self=exclude_self
        )
    except MissingLabel as exc:
        raise RequestError(400, str(exc)) from exc
    return 200, report_to_json(report)


class FaxisHandler(BaseHTTPRequestHandler):
    server_version = "faxis/0.1"
    protocol_version = "HTTP/1.1"

    @property
    def index(self) -> Index | None:
        return getattr(self.server, "index", None)

    @property
    def ui_dir(self) -> Path | None:
        return getattr(self.server, "ui_dir", None)

    def log_message(self, format, *args):  # quiet by default
        if getattr(self.server, "verbose", False):
            super().log_message(format, *args)

    def _send_json(self, status: int, payload: dict) -> None:
        body = json.dumps(payload, sort_keys=True).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _read_body(self) -> Mapping:
        length = int(self.headers.get("Content-Length", 0))
        raw = self.rfile.read(length) if length else b""
        if not raw:
            raise RequestError(400, "empty request body")
        try:
            return json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise RequestError(400, f"malformed JSON body: {exc}") from exc

    def do_GET(self):
        if self.path.rstrip("/") == "/axes":
            status, payload = handle_axes(self.index)
            self._send_json(status, payload)
            return
        if self._serve_static():
            return
        self._send_json(404, {"error": f"no such endpoint {self.path!r}"})

    def do_POST(self):
        try:
            body = self._read_body()
            if self.path.rstrip("/") == "/query":
                status, payload = handle_query(self.index, body)
            elif self.path.rstrip("/") == "/flip-report":
                status, payload = handle_flip_report(self.index, body)
            else:
                status, payload = 404, {"error": f"no such endpoint {self.path!r}"}
        except RequestError as exc:
            status, payload = exc.status, {"error": str(exc)}
        except FaxisError as exc:
            status, payload = 400, {"error": str(exc)}
        self._send_json(status, payload)

    def _serve_static(self) -> bool:
        ui_dir = self.ui_dir
        if ui_dir is None:
            return False
        path = self.path.split("?", 1)[0]
        if path in ("", "/"):
            path = "/index.html"
        candidate = (ui_dir / path.lstrip("/")).resolve()
        try:
            candidate.relative_to(ui_dir.resolve())
        except ValueError:
            return False
        if not candidate.is_file():
            return False
        body = candidate.read_bytes()
        self.send_response(200)
        self.send_header(
            "Content-Type",
            _CONTENT_TYPES.get(candidate.suffix, "application/octet-stream"),
        )
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)
        return True


def make_server(
    index: Index | None,
    host: str = "127.0.0.1",
    port: int = 0,
    ui_dir: Path | None = None,
    verbose: bool = False,
) -> ThreadingHTTPServer:
    """Build a ready-to-run server; port 0 picks an ephemeral port."""
    server = ThreadingHTTPServer((host, port), FaxisHandler)
    server.index = index
    server.ui_dir = ui_dir
    server.verbose = verbose
    return server


def run_server(
    index: Index,
    host: str = "127.0.0.1",
    port: int = DEFAULT_PORT,
    ui_dir: Path | None = None,
) -> None:
    server = make_server(index, host=host, port=port, ui_dir=ui_dir, verbose=True)
    print(f"faxis service on http://{host}:{server.server_address[1]}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
