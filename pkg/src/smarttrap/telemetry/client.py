"""At-least-once delivery client with a bounded FIFO buffer.

Messages leave in submission order; the head of the queue is retried with
capped exponential backoff until the service acknowledges it. The service
dedups on (trap_id, seq), so a resend after a lost acknowledgment is harmless.
"""

from __future__ import annotations

import json
import logging
import time
import urllib.error
import urllib.request
from collections import deque
from dataclasses import dataclass

from .service import CAPTURES
from .wire import CaptureMessage, encode

log = logging.getLogger(__name__)


class TransportError(OSError):
    """Delivery failed in a way worth retrying."""


class Rejected(Exception):
    """The service refused the message; resending will not help."""


@dataclass(frozen=True)
class Ack:
    trap_id: str
    seq: int
    status: str  # stored | duplicate


class HttpTransport:
    def __init__(self, endpoint: str, timeout: float = 5.0):
        self.url = endpoint.rstrip("/") + CAPTURES
        self.timeout = timeout

    def __call__(self, body: bytes) -> dict:
        req = urllib.request.Request(
            self.url, data=body, method="POST", headers={"Content-Type": "application/json"}
        )
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                return json.loads(resp.read())
        except urllib.error.HTTPError as exc:
            if 400 <= exc.code < 500:
                detail = exc.read().decode("utf-8", "replace")
                raise Rejected(f"HTTP {exc.code}: {detail}") from None
            raise TransportError(f"HTTP {exc.code}") from None
        except (urllib.error.URLError, ConnectionError, TimeoutError) as exc:
            raise TransportError(str(exc)) from None


@dataclass
class Backoff:
    base: float = 0.5
    factor: float = 2.0
    cap: float = 30.0

    def delay(self, attempt: int) -> float:
        """Delay before retry number ``attempt`` (1-based)."""
        return min(self.cap, self.base * self.factor ** (attempt - 1))


class TelemetryClient:
    def __init__(
        self,
        transport,
        max_buffer: int = 1024,
        backoff: Backoff | None = None,
        attempts_per_flush: int = 6,
        sleep=time.sleep,
    ):
        if max_buffer < 1:
            raise ValueError("max_buffer must be >= 1")
        self.transport = transport
        self.backoff = backoff or Backoff()
        self.attempts_per_flush = attempts_per_flush
        self.sleep = sleep
        self.max_buffer = max_buffer
        self.queue: deque[CaptureMessage] = deque()
        self.dropped = 0
        self.rejected = 0
        self.attempts = 0
        self.retries = 0
        self.acks: list[Ack] = []

    @classmethod
    def for_endpoint(cls, endpoint: str, **kw) -> "TelemetryClient":
        return cls(HttpTransport(endpoint), **kw)

    @property
    def pending(self) -> int:
        return len(self.queue)

    def submit(self, msg: CaptureMessage) -> Ack | None:
        """Queue ``msg`` and try to drain the queue.

        Returns the acknowledgment for ``msg`` once delivered, or None while
        it is still buffered behind a failing link.
        """
        if len(self.queue) >= self.max_buffer:
            lost = self.queue.popleft()
            self.dropped += 1
            log.warning("buffer full, dropped %s/%d", lost.trap_id, lost.seq)
        self.queue.append(msg)
        done = self.flush()
        for ack in done:
            if (ack.trap_id, ack.seq) == msg.key:
                return ack
        return None

    def flush(self) -> list[Ack]:
        """Deliver queued messages in order until empty or the link stays down."""
        delivered = []
        while self.queue:
            msg = self.queue[0]
            ack = self._deliver(msg)
            if ack is None:
                break
            self.queue.popleft()
            if ack.status != "rejected":
                delivered.append(ack)
                self.acks.append(ack)
        return delivered

    def _deliver(self, msg: CaptureMessage) -> Ack | None:
        body = encode(msg)
        for attempt in range(1, self.attempts_per_flush + 1):
            if attempt > 1:
                self.retries += 1
                self.sleep(self.backoff.delay(attempt - 1))
            self.attempts += 1
            try:
                reply = self.transport(body)
            except Rejected as exc:
                self.rejected += 1
                log.error("service rejected %s/%d: %s", msg.trap_id, msg.seq, exc)
                return Ack(msg.trap_id, msg.seq, "rejected")
            except TransportError as exc:
                log.info("delivery of %s/%d failed (attempt %d): %s", msg.trap_id, msg.seq, attempt, exc)
                continue
            return Ack(msg.trap_id, msg.seq, reply.get("status", "stored"))
        return None


class StoreTransport:
    """Deliver straight into an in-process store; same semantics as the HTTP API."""

    def __init__(self, store):
        self.store = store

    def __call__(self, body: bytes) -> dict:
        result = self.store.ingest(body)
        if result.status == "rejected":
            raise Rejected(result.error)
        return {"status": result.status}
