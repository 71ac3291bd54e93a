"""Trap controller: the detection/capture/eject state machine and fan schedule.

Actions run to completion on a virtual clock: while a fan is running no frame
is processed, and scent pulses whose tick lands inside a running action are
skipped rather than queued.
"""

from __future__ import annotations

import enum
import json
import logging
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta, timezone

from .detection import DetectionResult, SizeRange, detect
from .geo import GeoFix
from .imaging import StructuringElement
from .telemetry.wire import CaptureMessage

log = logging.getLogger(__name__)


class TrapState(str, enum.Enum):
    DETECTION = "DetectionMode"
    CAPTURE = "CaptureMode"
    EJECT = "EjectMode"


class Actuator(str, enum.Enum):
    CAPTURE_FAN = "CaptureFan"
    EJECT_FAN_1 = "EjectFan1"
    EJECT_FAN_2 = "EjectFan2"
    EJECT_FAN_3 = "EjectFan3"


EJECT_FANS = (Actuator.EJECT_FAN_1, Actuator.EJECT_FAN_2, Actuator.EJECT_FAN_3)


class Action(str, enum.Enum):
    ON = "On"
    OFF = "Off"


class StateError(RuntimeError):
    pass


class CameraError(RuntimeError):
    pass


class GpsUnavailable(RuntimeError):
    pass


@dataclass(frozen=True)
class TrapConfig:
    frame_period: float = 1.0
    scent_pulse_period: float = 180.0
    capture_fan_duration: float = 5.0
    eject_fan_duration: float = 5.0
    trap_id: str = "trap-01"
    start_time: datetime = datetime(2020, 2, 17, 8, 0, 0, tzinfo=timezone.utc)
    threshold: int = 45
    min_px: int = 10
    max_px: int = 60
    se_size: int = 3

    def __post_init__(self):
        for name in ("frame_period", "scent_pulse_period", "capture_fan_duration", "eject_fan_duration"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if not self.trap_id:
            raise ValueError("trap_id must be non-empty")
        # validate eagerly so a bad config fails at load time
        self.size_range
        self.se

    @property
    def size_range(self) -> SizeRange:
        return SizeRange(self.min_px, self.max_px)

    @property
    def se(self) -> StructuringElement:
        return StructuringElement(self.se_size)

    def with_(self, **changes) -> "TrapConfig":
        return replace(self, **changes)


@dataclass(frozen=True)
class ActuatorEvent:
    timestamp: float
    actuator: Actuator
    action: Action

    def to_record(self) -> dict:
        return {"kind": "actuator", "t": self.timestamp, "actuator": self.actuator.value,
                "action": self.action.value}


def next_state(current: TrapState, cbb_count: int, unknown_count: int) -> TrapState:
    """Any unknown insect forces an eject, even alongside CBBs."""
    if current is not TrapState.DETECTION:
        raise StateError(f"transitions are only taken from {TrapState.DETECTION.value}, not {current.value}")
    if cbb_count < 0 or unknown_count < 0:
        raise ValueError("counts must be >= 0")
    if unknown_count > 0:
        return TrapState.EJECT
    if cbb_count > 0:
        return TrapState.CAPTURE
    return TrapState.DETECTION


class VirtualClock:
    def __init__(self, now: float = 0.0):
        self.now = float(now)

    def advance(self, dt: float) -> float:
        if dt < 0:
            raise ValueError("clock cannot run backwards")
        self.now += dt
        return self.now

    def advance_to(self, t: float) -> float:
        if t > self.now:
            self.now = float(t)
        return self.now


class ScentScheduler:
    """Ticks at k * period for k >= 1; each tick pulses all eject fans."""

    def __init__(self, period: float, duration: float):
        self.period = period
        self.duration = duration
        self.k = 1

    @property
    def next_tick(self) -> float:
        return self.k * self.period

    def poll(self, now: float, busy_until: float):
        """Return (pulses, skipped) for every tick <= now.

        ``pulses`` is a list of (tick, events); a tick earlier than
        ``busy_until`` landed inside a running action and is skipped.
        """
        pulses, skipped = [], []
        while self.next_tick <= now:
            tick = self.next_tick
            self.k += 1
            if tick < busy_until:
                skipped.append(tick)
                continue
            events = [ActuatorEvent(tick, f, Action.ON) for f in EJECT_FANS]
            events += [ActuatorEvent(tick + self.duration, f, Action.OFF) for f in EJECT_FANS]
            pulses.append((tick, events))
            busy_until = tick + self.duration
        return pulses, skipped


def scent_schedule(config: TrapConfig, until: float) -> list[ActuatorEvent]:
    """Pulse events an idle trap emits before time ``until``."""
    sched = ScentScheduler(config.scent_pulse_period, config.eject_fan_duration)
    pulses, _ = sched.poll(until - 1e-9, 0.0)
    return [e for _, events in pulses for e in events]


@dataclass
class RunLog:
    records: list[dict] = field(default_factory=list)
    events: list[ActuatorEvent] = field(default_factory=list)
    messages: list[CaptureMessage] = field(default_factory=list)
    frames: int = 0

    def add_events(self, events) -> None:
        for e in events:
            self.events.append(e)
            self.records.append(e.to_record())

    def note(self, t: float, what: str, **extra) -> None:
        self.records.append({"kind": "note", "t": t, "note": what, **extra})

    def to_ndjson(self) -> str:
        return "".join(json.dumps(r, sort_keys=True, separators=(",", ":")) + "\n" for r in self.records)

    def capturing_frame_counts(self) -> list[int]:
        return [r["cbb_count"] for r in self.records
                if r["kind"] == "frame" and r["next_state"] == TrapState.CAPTURE.value]


class TrapController:
    def __init__(self, config: TrapConfig | None = None, clock: VirtualClock | None = None):
        self.config = config or TrapConfig()
        self.clock = clock or VirtualClock()
        self.state = TrapState.DETECTION
        self.seq = 0
        self.last_fix: GeoFix | None = None
        self.busy_until = float("-inf")
        self.scent = ScentScheduler(self.config.scent_pulse_period, self.config.eject_fan_duration)

    def _instant(self, t: float) -> datetime:
        return self.config.start_time + timedelta(seconds=round(t))

    def step(self, cbb_count: int, unknown_count: int) -> TrapState:
        self.state = next_state(self.state, cbb_count, unknown_count)
        return self.state

    def run_capture(self, fix: GeoFix | None, cbb_count: int):
        """Fire the capture fan and build the capture message.

        ``fix`` of None means the GPS had no reading; the last known fix is
        reused and the message is flagged stale. Returns (message, events);
        message is None only if no fix was ever obtained.
        """
        if self.state is not TrapState.CAPTURE:
            raise StateError(f"run_capture needs {TrapState.CAPTURE.value}, trap is in {self.state.value}")
        if cbb_count < 1:
            raise ValueError("run_capture needs cbb_count >= 1")
        t = self.clock.now
        d = self.config.capture_fan_duration
        events = [ActuatorEvent(t, Actuator.CAPTURE_FAN, Action.ON),
                  ActuatorEvent(t + d, Actuator.CAPTURE_FAN, Action.OFF)]
        stale = fix is None
        if fix is not None:
            self.last_fix = fix
        msg = None
        if self.last_fix is not None:
            msg = CaptureMessage(
                trap_id=self.config.trap_id,
                seq=self.seq,
                latitude=self.last_fix.latitude,
                longitude=self.last_fix.longitude,
                captured_count=cbb_count,
                timestamp=self._instant(t),
                stale=stale,
            )
            self.seq += 1
        self._finish(t + d)
        return msg, events

    def run_eject(self) -> list[ActuatorEvent]:
        if self.state is not TrapState.EJECT:
            raise StateError(f"run_eject needs {TrapState.EJECT.value}, trap is in {self.state.value}")
        t = self.clock.now
        d = self.config.eject_fan_duration
        events = [ActuatorEvent(t, f, Action.ON) for f in EJECT_FANS]
        events += [ActuatorEvent(t + d, f, Action.OFF) for f in EJECT_FANS]
        self._finish(t + d)
        return events

    def _finish(self, end: float) -> None:
        self.busy_until = end
        self.clock.advance_to(end)
        self.state = TrapState.DETECTION

    def poll_scent(self):
        pulses, skipped = self.scent.poll(self.clock.now, self.busy_until)
        for tick, events in pulses:
            self.busy_until = tick + self.config.eject_fan_duration
            self.clock.advance_to(self.busy_until)
        return pulses, skipped


def _read_gps(gps) -> GeoFix | None:
    if gps is None:
        return None
    try:
        return gps.read()
    except GpsUnavailable:
        return None


def _apply(actuators, events) -> None:
    if actuators is not None:
        for e in events:
            actuators.apply(e)


def trap_loop(
    camera,
    gps,
    actuators=None,
    telemetry_client=None,
    config: TrapConfig | None = None,
    *,
    clock: VirtualClock | None = None,
    duration: float | None = None,
    controller: TrapController | None = None,
    run_log: RunLog | None = None,
) -> RunLog:
    """Run the trap until the camera is exhausted or ``duration`` elapses.

    ``camera.read()`` returns the next frame, None when the script is over, or
    raises CameraError for a bad frame. ``gps.read()`` returns a GeoFix, None
    or raises GpsUnavailable. ``actuators.apply(event)`` receives every fan
    event. Passing an existing ``controller`` continues its clock and seq.
    """
    ctl = controller or TrapController(config, clock)
    cfg = ctl.config
    clk = ctl.clock
    out = run_log if run_log is not None else RunLog()

    def expired():
        return duration is not None and clk.now >= duration

    while not expired():
        pulses, skipped = ctl.poll_scent()
        for tick in skipped:
            out.note(tick, "scent_pulse_skipped")
        for _, events in pulses:
            out.add_events(events)
            _apply(actuators, events)
        if expired():
            break

        t = clk.now
        try:
            frame = camera.read()
        except CameraError as exc:
            log.warning("camera failure at t=%s: %s", t, exc)
            out.note(t, "camera_error", error=str(exc))
            clk.advance(cfg.frame_period)
            continue
        if frame is None:
            break

        result: DetectionResult = detect(frame, cfg.threshold, cfg.se, cfg.size_range)
        out.frames += 1
        state = ctl.step(result.cbb_count, result.unknown_count)
        out.records.append({"kind": "frame", "t": t, "cbb_count": result.cbb_count,
                            "unknown_count": result.unknown_count, "next_state": state.value})

        if state is TrapState.CAPTURE:
            msg, events = ctl.run_capture(_read_gps(gps), result.cbb_count)
            out.add_events(events[:1])
            _apply(actuators, events[:1])
            if msg is None:
                out.note(t, "capture_without_fix", captured_count=result.cbb_count)
            else:
                out.messages.append(msg)
                out.records.append({"kind": "capture", "t": t, **msg.to_dict()})
                if telemetry_client is not None:
                    ack = telemetry_client.submit(msg)
                    if ack is None:
                        out.note(t, "delivery_pending", trap_id=msg.trap_id, seq=msg.seq)
            out.add_events(events[1:])
            _apply(actuators, events[1:])
        elif state is TrapState.EJECT:
            events = ctl.run_eject()
            out.add_events(events)
            _apply(actuators, events)

        clk.advance(cfg.frame_period)
    return out
