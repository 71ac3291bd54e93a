"""Simulated device ports for the trap loop, plus a fault-injecting transport."""

from __future__ import annotations

from collections.abc import Iterable

from ..geo import GeoFix
from ..imaging import RgbImage
from ..telemetry.client import TransportError
from ..trapctl import Action, ActuatorEvent, CameraError, GpsUnavailable


class ScriptedCamera:
    """Yields the given frames in order, then None. ``None`` entries in the
    script simulate a failed capture."""

    def __init__(self, frames: Iterable[RgbImage | None]):
        self.frames = list(frames)
        self.pos = 0

    def read(self) -> RgbImage | None:
        if self.pos >= len(self.frames):
            return None
        frame = self.frames[self.pos]
        self.pos += 1
        if frame is None:
            raise CameraError(f"scripted failure at frame {self.pos - 1}")
        return frame


def scripted_camera(frames) -> ScriptedCamera:
    return ScriptedCamera(frames)


class IdleCamera:
    """Endless blank white frames."""

    def __init__(self, width: int = 64, height: int = 48):
        self.frame = RgbImage.filled(width, height)

    def read(self) -> RgbImage:
        return self.frame


class FixedGps:
    def __init__(self, fix: GeoFix | None):
        self.fix = fix

    def read(self) -> GeoFix:
        if self.fix is None:
            raise GpsUnavailable("no satellite lock")
        return self.fix


class ScriptedGps:
    """Returns fixes in order; a None entry raises GpsUnavailable."""

    def __init__(self, fixes):
        self.fixes = list(fixes)
        self.pos = 0

    def read(self) -> GeoFix:
        fix = self.fixes[min(self.pos, len(self.fixes) - 1)]
        self.pos += 1
        if fix is None:
            raise GpsUnavailable("scripted dropout")
        return fix


class RecordingActuators:
    """Relay bank stand-in; refuses a second On without an Off in between."""

    def __init__(self):
        self.events: list[ActuatorEvent] = []
        self.on: set = set()

    def apply(self, event: ActuatorEvent) -> None:
        if event.action is Action.ON:
            if event.actuator in self.on:
                raise RuntimeError(f"{event.actuator.value} switched on twice at t={event.timestamp}")
            self.on.add(event.actuator)
        else:
            if event.actuator not in self.on:
                raise RuntimeError(f"{event.actuator.value} switched off while off at t={event.timestamp}")
            self.on.discard(event.actuator)
        self.events.append(event)


class FlakyTransport:
    """Wraps a transport and fails chosen attempts.

    ``down_first`` attempts fail before reaching the service. With
    ``lose_acks`` the next N successful deliveries reach the service but the
    reply is lost, forcing a resend that the service must dedup.
    """

    def __init__(self, inner, down_first: int = 0, lose_acks: int = 0):
        self.inner = inner
        self.down_first = down_first
        self.lose_acks = lose_acks
        self.calls = 0

    def __call__(self, body: bytes) -> dict:
        self.calls += 1
        if self.down_first > 0:
            self.down_first -= 1
            raise TransportError("injected: service unreachable")
        reply = self.inner(body)
        if self.lose_acks > 0:
            self.lose_acks -= 1
            raise TransportError("injected: reply lost")
        return reply
