"""Durable append-only capture store with (trap_id, seq) dedup."""

from __future__ import annotations

import json
import logging
import os
import threading
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path

from .wire import CaptureMessage, WireError, decode, encode

log = logging.getLogger(__name__)

LOG_NAME = "captures.ndjson"


class QueryError(ValueError):
    pass


@dataclass(frozen=True)
class CaptureFilter:
    since: datetime | None = None
    until: datetime | None = None
    bbox: tuple[float, float, float, float] | None = None  # min_lon, min_lat, max_lon, max_lat
    trap_id: str | None = None

    def __post_init__(self):
        if self.since and self.until and self.since > self.until:
            raise QueryError("since is after until")
        if self.bbox is not None:
            if len(self.bbox) != 4:
                raise QueryError("bbox needs minLon,minLat,maxLon,maxLat")
            min_lon, min_lat, max_lon, max_lat = self.bbox
            if min_lon > max_lon or min_lat > max_lat:
                raise QueryError("bbox is inverted")

    def matches(self, m: CaptureMessage) -> bool:
        if self.since is not None and m.timestamp < self.since:
            return False
        if self.until is not None and m.timestamp > self.until:
            return False
        if self.trap_id is not None and m.trap_id != self.trap_id:
            return False
        if self.bbox is not None:
            min_lon, min_lat, max_lon, max_lat = self.bbox
            if not (min_lon <= m.longitude <= max_lon and min_lat <= m.latitude <= max_lat):
                return False
        return True


def sort_key(m: CaptureMessage):
    return m.timestamp, m.trap_id, m.seq


@dataclass(frozen=True)
class IngestResult:
    status: str  # stored | duplicate | rejected
    message: CaptureMessage | None = None
    error: str | None = None
    kind: str | None = None


class CaptureStore:
    """In-memory index over an optional newline-delimited log file.

    Appends go through one lock and hit disk before ``ingest`` returns.
    Readers take a snapshot length under the lock, so they always see a
    consistent prefix of the log.
    """

    def __init__(self, data_dir: str | os.PathLike | None = None, fsync: bool = True):
        self._lock = threading.Lock()
        self._messages: list[CaptureMessage] = []
        self._index: dict[tuple[str, int], CaptureMessage] = {}
        self.fsync = fsync
        self.path: Path | None = None
        self._fh = None
        if data_dir is not None:
            d = Path(data_dir)
            d.mkdir(parents=True, exist_ok=True)
            self.path = d / LOG_NAME
            self._replay()
            self._fh = open(self.path, "ab")

    def _replay(self) -> None:
        if not self.path.exists():
            return
        good_bytes = 0
        with open(self.path, "rb") as fh:
            for line in fh:
                if not line.endswith(b"\n"):
                    # torn tail from a crash mid-append; never acknowledged
                    log.warning("dropping partial record at end of %s", self.path)
                    break
                good_bytes += len(line)
                if not line.strip():
                    continue
                try:
                    msg = decode(line)
                except WireError as exc:
                    log.warning("skipping unreadable record in %s: %s", self.path, exc)
                    continue
                if msg.key not in self._index:
                    self._index[msg.key] = msg
                    self._messages.append(msg)
        if good_bytes != self.path.stat().st_size:
            with open(self.path, "r+b") as fh:
                fh.truncate(good_bytes)

    def __len__(self) -> int:
        return len(self._messages)

    def ingest(self, data: bytes | str) -> IngestResult:
        try:
            msg = decode(data)
        except WireError as exc:
            return IngestResult("rejected", error=str(exc), kind=exc.kind)
        return self.add(msg)

    def add(self, msg: CaptureMessage) -> IngestResult:
        with self._lock:
            if msg.key in self._index:
                return IngestResult("duplicate", self._index[msg.key])
            if self._fh is not None:
                self._fh.write(encode(msg) + b"\n")
                self._fh.flush()
                if self.fsync:
                    os.fsync(self._fh.fileno())
            self._index[msg.key] = msg
            self._messages.append(msg)
        return IngestResult("stored", msg)

    def snapshot(self) -> list[CaptureMessage]:
        with self._lock:
            n = len(self._messages)
        return self._messages[:n]

    def query(self, flt: CaptureFilter | None = None) -> list[CaptureMessage]:
        flt = flt or CaptureFilter()
        return sorted((m for m in self.snapshot() if flt.matches(m)), key=sort_key)

    def close(self) -> None:
        with self._lock:
            if self._fh is not None:
                self._fh.flush()
                os.fsync(self._fh.fileno())
                self._fh.close()
                self._fh = None


def read_log(path: str | os.PathLike) -> list[CaptureMessage]:
    """Load captures from a store log or a trap run log, dedup'd, in query order."""
    seen: dict[tuple[str, int], CaptureMessage] = {}
    with open(path, "rb") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            # run logs interleave actuator events with capture records
            if obj.get("kind", "capture") != "capture":
                continue
            msg = CaptureMessage.from_dict(obj)
            seen.setdefault(msg.key, msg)
    return sorted(seen.values(), key=sort_key)
