"""Capture telemetry: wire format, delivery client, and the ingest service."""

from .client import Ack, Backoff, HttpTransport, Rejected, StoreTransport, TelemetryClient, TransportError
from .service import IngestService, parse_filter
from .store import CaptureFilter, CaptureStore, IngestResult, QueryError, read_log
from .wire import CaptureMessage, CountError, RangeError, SchemaError, WireError, decode, encode

__all__ = [
    "Ack", "Backoff", "CaptureFilter", "CaptureMessage", "CaptureStore", "CountError",
    "HttpTransport", "IngestResult", "IngestService", "QueryError", "RangeError", "Rejected",
    "SchemaError", "StoreTransport", "TelemetryClient", "TransportError", "WireError",
    "decode", "encode", "parse_filter", "read_log",
]
