"""Capture message wire format: one UTF-8 JSON object per message."""

from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import datetime, timezone

REQUIRED = ("trap_id", "seq", "latitude", "longitude", "captured_count", "timestamp")


class WireError(ValueError):
    kind = "invalid"


class SchemaError(WireError):
    kind = "schema"


class RangeError(WireError):
    kind = "range"


class CountError(WireError):
    kind = "count"


def format_timestamp(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def parse_timestamp(text: str) -> datetime:
    """ISO-8601 instant; naive values are taken as UTC, sub-seconds dropped."""
    if not isinstance(text, str):
        raise SchemaError(f"timestamp must be a string, got {type(text).__name__}")
    value = text.strip()
    if value.endswith(("Z", "z")):
        value = value[:-1] + "+00:00"
    try:
        ts = datetime.fromisoformat(value)
    except ValueError:
        raise SchemaError(f"unparseable timestamp {text!r}") from None
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc).replace(microsecond=0)


@dataclass(frozen=True)
class CaptureMessage:
    trap_id: str
    seq: int
    latitude: float
    longitude: float
    captured_count: int
    timestamp: datetime
    stale: bool = False

    def __post_init__(self):
        ts = self.timestamp
        if ts.tzinfo is None:
            ts = ts.replace(tzinfo=timezone.utc)
        object.__setattr__(self, "timestamp", ts.astimezone(timezone.utc).replace(microsecond=0))
        validate(self)

    @property
    def key(self) -> tuple[str, int]:
        return self.trap_id, self.seq

    def to_dict(self) -> dict:
        return {
            "trap_id": self.trap_id,
            "seq": self.seq,
            "latitude": self.latitude,
            "longitude": self.longitude,
            "captured_count": self.captured_count,
            "timestamp": format_timestamp(self.timestamp),
            "stale": self.stale,
        }

    @classmethod
    def from_dict(cls, obj) -> "CaptureMessage":
        if not isinstance(obj, dict):
            raise SchemaError("message must be a JSON object")
        missing = [k for k in REQUIRED if k not in obj]
        if missing:
            raise SchemaError(f"missing required field(s): {', '.join(missing)}")
        trap_id = obj["trap_id"]
        if not isinstance(trap_id, str) or not trap_id:
            raise SchemaError("trap_id must be a non-empty string")
        for name in ("seq", "captured_count"):
            if isinstance(obj[name], bool) or not isinstance(obj[name], int):
                raise SchemaError(f"{name} must be an integer")
        for name in ("latitude", "longitude"):
            if isinstance(obj[name], bool) or not isinstance(obj[name], (int, float)):
                raise SchemaError(f"{name} must be a number")
        stale = obj.get("stale", False)
        if not isinstance(stale, bool):
            raise SchemaError("stale must be a boolean")
        return cls(
            trap_id=trap_id,
            seq=obj["seq"],
            latitude=float(obj["latitude"]),
            longitude=float(obj["longitude"]),
            captured_count=obj["captured_count"],
            timestamp=parse_timestamp(obj["timestamp"]),
            stale=stale,
        )


def validate(msg: CaptureMessage) -> None:
    if msg.seq < 0:
        raise SchemaError(f"seq must be >= 0, got {msg.seq}")
    if not -90.0 <= msg.latitude <= 90.0:
        raise RangeError(f"latitude {msg.latitude} outside [-90, 90]")
    if not -180.0 <= msg.longitude <= 180.0:
        raise RangeError(f"longitude {msg.longitude} outside [-180, 180]")
    if msg.captured_count < 1:
        raise CountError(f"captured_count must be >= 1, got {msg.captured_count}")


def encode(msg: CaptureMessage) -> bytes:
    return json.dumps(msg.to_dict(), sort_keys=True, separators=(",", ":")).encode("utf-8")


def decode(data: bytes | str) -> CaptureMessage:
    try:
        obj = json.loads(data)
    except (ValueError, UnicodeDecodeError) as exc:
        raise SchemaError(f"not valid JSON: {exc}") from None
    return CaptureMessage.from_dict(obj)
