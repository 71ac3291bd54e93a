"""HTTP ingest service: the middleware stand-in that stores and serves captures.

    POST /api/v1/captures   201 stored | 200 duplicate | 400 rejected
    GET  /api/v1/captures   ?since=&until=&bbox=minLon,minLat,maxLon,maxLat&trap_id=
    GET  /api/v1/health
"""

from __future__ import annotations

import json
import logging
import threading
from http import HTTPStatus
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlsplit

from .store import CaptureFilter, CaptureStore, QueryError
from .wire import WireError, parse_timestamp

log = logging.getLogger(__name__)

CAPTURES = "/api/v1/captures"
HEALTH = "/api/v1/health"
MAX_BODY = 64 * 1024


def parse_filter(query: str) -> CaptureFilter:
    params = parse_qs(query, keep_blank_values=False)

    def one(name):
        values = params.get(name)
        if not values:
            return None
        if len(values) > 1:
            raise QueryError(f"{name} given more than once")
        return values[0]

    try:
        since = one("since")
        until = one("until")
        bbox = one("bbox")
        return CaptureFilter(
            since=parse_timestamp(since) if since else None,
            until=parse_timestamp(until) if until else None,
            bbox=tuple(float(v) for v in bbox.split(",")) if bbox else None,
            trap_id=one("trap_id"),
        )
    except WireError as exc:
        raise QueryError(str(exc)) from None
    except ValueError as exc:
        if isinstance(exc, QueryError):
            raise
        raise QueryError(f"bad bbox: {exc}") from None


class _Handler(BaseHTTPRequestHandler):
    server_version = "smarttrap-ingest/1"
    store: CaptureStore  # set on the subclass built per service

    def log_message(self, fmt, *args):
        log.debug("%s " + fmt, self.address_string(), *args)

    def _reply(self, status: int, payload: dict) -> None:
        body = json.dumps(payload, sort_keys=True).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self):
        url = urlsplit(self.path)
        if url.path == HEALTH:
            self._reply(HTTPStatus.OK, {"status": "ok", "count": len(self.store)})
        elif url.path == CAPTURES:
            try:
                flt = parse_filter(url.query)
            except QueryError as exc:
                self._reply(HTTPStatus.BAD_REQUEST, {"status": "rejected", "error": str(exc)})
                return
            rows = [m.to_dict() for m in self.store.query(flt)]
            self._reply(HTTPStatus.OK, {"count": len(rows), "captures": rows})
        else:
            self._reply(HTTPStatus.NOT_FOUND, {"error": "not found"})

    def do_POST(self):
        if urlsplit(self.path).path != CAPTURES:
            self._reply(HTTPStatus.NOT_FOUND, {"error": "not found"})
            return
        try:
            length = int(self.headers.get("Content-Length", "0"))
        except ValueError:
            length = -1
        if not 0 <= length <= MAX_BODY:
            self._reply(HTTPStatus.BAD_REQUEST, {"status": "rejected", "error": "bad Content-Length"})
            return
        result = self.store.ingest(self.rfile.read(length))
        if result.status == "stored":
            self._reply(HTTPStatus.CREATED, {"status": "stored", "trap_id": result.message.trap_id,
                                             "seq": result.message.seq})
        elif result.status == "duplicate":
            self._reply(HTTPStatus.OK, {"status": "duplicate", "trap_id": result.message.trap_id,
                                        "seq": result.message.seq})
        else:
            self._reply(HTTPStatus.BAD_REQUEST, {"status": "rejected", "kind": result.kind,
                                                 "error": result.error})


class IngestService:
    """Owns a store and an HTTP server; ``start`` serves from a daemon thread."""

    def __init__(self, data_dir=None, host: str = "127.0.0.1", port: int = 0, fsync: bool = True):
        self.store = CaptureStore(data_dir, fsync=fsync)
        handler = type("Handler", (_Handler,), {"store": self.store})
        try:
            self.httpd = ThreadingHTTPServer((host, port), handler)
        except OSError:
            self.store.close()
            raise
        self.httpd.daemon_threads = True
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        return self.httpd.server_address[:2]

    @property
    def url(self) -> str:
        host, port = self.address
        return f"http://{host}:{port}"

    def start(self) -> "IngestService":
        self._thread = threading.Thread(target=self.httpd.serve_forever, name="ingest", daemon=True)
        self._thread.start()
        return self

    def serve_forever(self) -> None:
        try:
            self.httpd.serve_forever()
        finally:
            self.close()

    def stop(self) -> None:
        if self._thread is not None:
            self.httpd.shutdown()
            self._thread.join()
            self._thread = None
        self.close()

    def close(self) -> None:
        self.httpd.server_close()
        self.store.close()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()
