"""Field-round simulation: a trap walked through a plantation, stopping every few metres."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone

import numpy as np

from .. import kvfile
from ..geo import Bounds, GeoFix, LocalFrame
from ..telemetry.wire import CaptureMessage, format_timestamp, parse_timestamp
from ..trapctl import RunLog, TrapConfig, TrapController, VirtualClock, trap_loop
from .ports import FixedGps, ScriptedCamera
from .scene import capture_scene_spec, generate_scene

SCENARIO_KIND = "smarttrap-scenario"
DEFAULT_START = datetime(2020, 2, 17, 8, 0, 0, tzinfo=timezone.utc)


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class FieldScenario:
    bounds: Bounds
    path: tuple[tuple[float, float], ...]  # (lat, lon) polyline vertices
    insects: tuple[GeoFix, ...] = ()
    dwell_minutes: float = 30.0
    attraction_radius: float = 1.5
    waypoint_spacing: float = 3.0
    trap_id: str = "trap-01"
    start_time: datetime = DEFAULT_START
    name: str = "scenario"
    seed: int = 0
    _waypoints: tuple = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        problems = []
        if len(self.path) < 1:
            problems.append("path needs at least one vertex")
        for lat, lon in self.path:
            if not self.bounds.contains(lat, lon):
                problems.append(f"path vertex ({lat}, {lon}) outside bounds")
        for ins in self.insects:
            if not self.bounds.contains(ins.latitude, ins.longitude):
                problems.append(f"insect ({ins.latitude}, {ins.longitude}) outside bounds")
        if self.dwell_minutes <= 0:
            problems.append("dwell_minutes must be > 0")
        if self.attraction_radius < 0:
            problems.append("attraction_radius must be >= 0")
        if self.waypoint_spacing <= 0:
            problems.append("waypoint_spacing must be > 0")
        if problems:
            raise ScenarioError("; ".join(problems))

    @property
    def frame(self) -> LocalFrame:
        b = self.bounds
        return LocalFrame(b.center_lat, 0.5 * (b.min_lon + b.max_lon))

    def waypoints(self) -> list[tuple[float, float]]:
        """Stops at every ``waypoint_spacing`` metres of arc length along the path."""
        if self._waypoints is None:
            object.__setattr__(self, "_waypoints", tuple(_resample(self.path, self.frame, self.waypoint_spacing)))
        return list(self._waypoints)


def _resample(path, frame: LocalFrame, spacing: float):
    pts = [frame.to_xy(lat, lon) for lat, lon in path]
    out = [pts[0]]
    carry = 0.0  # arc length walked since the last stop
    for (x0, y0), (x1, y1) in zip(pts, pts[1:]):
        seg = math.hypot(x1 - x0, y1 - y0)
        if seg == 0:
            continue
        s = spacing - carry
        while s <= seg + 1e-9:
            f = s / seg
            out.append((x0 + f * (x1 - x0), y0 + f * (y1 - y0)))
            s += spacing
        carry = seg - (s - spacing)
    return [frame.to_latlon(x, y) for x, y in out]


def serpentine_path(bounds: Bounds, row_spacing: float = 3.0, inset: float = 1.5):
    """Boustrophedon rows running east-west, ``row_spacing`` metres apart."""
    frame = LocalFrame(bounds.center_lat, 0.5 * (bounds.min_lon + bounds.max_lon))
    x0, y0 = frame.to_xy(bounds.min_lat, bounds.min_lon)
    x1, y1 = frame.to_xy(bounds.max_lat, bounds.max_lon)
    xa, xb = x0 + inset, x1 - inset
    ys = np.arange(y0 + inset, y1 - inset + 1e-9, row_spacing)
    path = []
    for i, y in enumerate(ys):
        row = [(xa, y), (xb, y)] if i % 2 == 0 else [(xb, y), (xa, y)]
        path += row
    return tuple(frame.to_latlon(x, float(y)) for x, y in path)


def scatter_insects(bounds: Bounds, count: int, seed: int) -> tuple[GeoFix, ...]:
    rng = np.random.default_rng(seed)
    lats = rng.uniform(bounds.min_lat, bounds.max_lat, count)
    lons = rng.uniform(bounds.min_lon, bounds.max_lon, count)
    return tuple(GeoFix(float(a), float(o)) for a, o in zip(lats, lons))


def demo_scenario() -> FieldScenario:
    """Synthetic 120 m x 60 m plot near Santana da Vargem, MG, with 500 scattered beetles."""
    frame = LocalFrame(-21.2480, -45.5110)
    south, west = frame.to_latlon(-60.0, -30.0)
    north, east = frame.to_latlon(60.0, 30.0)
    bounds = Bounds(round(south, 6), round(west, 6), round(north, 6), round(east, 6))
    return FieldScenario(
        bounds=bounds,
        path=serpentine_path(bounds),
        insects=scatter_insects(bounds, 500, seed=7),
        name="demo-synthetic",
        seed=7,
    )


def round_captures(scenario: FieldScenario) -> list[tuple[int, int]]:
    """(waypoint index, newly captured insects) for each stop with a capture."""
    wps = scenario.waypoints()
    frame = scenario.frame
    if not wps or not scenario.insects:
        return []
    wxy = np.array([frame.to_xy(a, o) for a, o in wps])
    ixy = np.array([frame.to_xy(i.latitude, i.longitude) for i in scenario.insects])
    d2 = ((ixy[:, None, :] - wxy[None, :, :]) ** 2).sum(axis=2)
    within = d2 <= scenario.attraction_radius ** 2
    # each insect is caught at the first stop that reaches it
    first = np.where(within.any(axis=1), within.argmax(axis=1), -1)
    counts = np.bincount(first[first >= 0], minlength=len(wps))
    return [(i, int(c)) for i, c in enumerate(counts) if c > 0]


def simulate_round(scenario: FieldScenario, config: TrapConfig | None = None) -> list[CaptureMessage]:
    """One message per stop that caught anything, stamped with the stop's arrival time."""
    cfg = config or TrapConfig(trap_id=scenario.trap_id, start_time=scenario.start_time)
    wps = scenario.waypoints()
    dwell = timedelta(minutes=scenario.dwell_minutes)
    msgs = []
    for seq, (i, count) in enumerate(round_captures(scenario)):
        lat, lon = wps[i]
        msgs.append(CaptureMessage(cfg.trap_id, seq, lat, lon, count, cfg.start_time + i * dwell))
    return msgs


def hil_round(scenario: FieldScenario, config: TrapConfig | None = None, telemetry_client=None,
              actuators=None) -> RunLog:
    """Drive the real trap loop through the round.

    At each stop that catches k insects the camera sees one synthetic frame
    with k beetle-sized blobs and the GPS reports the stop position.
    """
    cfg = config or TrapConfig(trap_id=scenario.trap_id, start_time=scenario.start_time)
    ctl = TrapController(cfg, VirtualClock())
    wps = scenario.waypoints()
    dwell_s = scenario.dwell_minutes * 60.0
    log = RunLog()
    for i, count in round_captures(scenario):
        ctl.clock.advance_to(i * dwell_s)
        spec = capture_scene_spec(count, seed=scenario.seed * 100003 + i)
        camera = ScriptedCamera([generate_scene(spec).image])
        gps = FixedGps(GeoFix(*wps[i]))
        trap_loop(camera, gps, actuators, telemetry_client, controller=ctl, run_log=log)
    return log


# -- scenario files ---------------------------------------------------------

def _floats(text: str, n: int, key: str) -> list[float]:
    parts = text.replace(",", " ").split()
    if len(parts) != n:
        raise ScenarioError(f"{key}: expected {n} numbers, got {text!r}")
    try:
        return [float(p) for p in parts]
    except ValueError:
        raise ScenarioError(f"{key}: not numeric: {text!r}") from None


def _pairs(rows, section: str):
    out = []
    for r in rows:
        if len(r) != 2:
            raise ScenarioError(f"[{section}]: expected 'lat lon', got {' '.join(r)!r}")
        try:
            out.append((float(r[0]), float(r[1])))
        except ValueError:
            raise ScenarioError(f"[{section}]: not numeric: {' '.join(r)!r}") from None
    return out


def parse_scenario(text: str) -> FieldScenario:
    """Parse a scenario file.

    Keys: name, trap_id, bounds (min_lat min_lon max_lat max_lon), dwell_minutes,
    attraction_radius_m, waypoint_spacing_m, start_time, seed. Sections [path]
    and [insects] list one ``lat lon`` per line; in their absence
    ``serpentine_row_spacing_m`` and ``random_insects`` generate them.
    """
    try:
        doc = kvfile.parse(text, SCENARIO_KIND)
    except kvfile.KvFormatError as exc:
        raise ScenarioError(str(exc)) from None
    v = dict(doc.values)
    known = {"name", "trap_id", "bounds", "dwell_minutes", "attraction_radius_m", "waypoint_spacing_m",
             "start_time", "seed", "serpentine_row_spacing_m", "random_insects"}
    unknown = set(v) - known
    if unknown:
        raise ScenarioError(f"unknown key(s): {', '.join(sorted(unknown))}")
    if "bounds" not in v:
        raise ScenarioError("missing required key: bounds")
    try:
        bounds = Bounds(*_floats(v["bounds"], 4, "bounds"))
        seed = int(v.get("seed", "0"))
        if "path" in doc.sections:
            path = tuple(_pairs(doc.sections["path"], "path"))
        else:
            path = serpentine_path(bounds, float(v.get("serpentine_row_spacing_m", "3")))
        if "insects" in doc.sections:
            insects = tuple(GeoFix(a, o) for a, o in _pairs(doc.sections["insects"], "insects"))
        else:
            insects = scatter_insects(bounds, int(v.get("random_insects", "0")), seed)
        return FieldScenario(
            bounds=bounds,
            path=path,
            insects=insects,
            dwell_minutes=float(v.get("dwell_minutes", "30")),
            attraction_radius=float(v.get("attraction_radius_m", "1.5")),
            waypoint_spacing=float(v.get("waypoint_spacing_m", "3")),
            trap_id=v.get("trap_id", "trap-01"),
            start_time=parse_timestamp(v["start_time"]) if "start_time" in v else DEFAULT_START,
            name=v.get("name", "scenario"),
            seed=seed,
        )
    except ScenarioError:
        raise
    except ValueError as exc:
        raise ScenarioError(str(exc)) from None


def dump_scenario(s: FieldScenario) -> str:
    b = s.bounds
    doc = kvfile.KvDocument(SCENARIO_KIND, 1)
    doc.values = {
        "name": s.name,
        "trap_id": s.trap_id,
        "bounds": f"{b.min_lat!r} {b.min_lon!r} {b.max_lat!r} {b.max_lon!r}",
        "dwell_minutes": repr(s.dwell_minutes),
        "attraction_radius_m": repr(s.attraction_radius),
        "waypoint_spacing_m": repr(s.waypoint_spacing),
        "start_time": format_timestamp(s.start_time),
        "seed": str(s.seed),
    }
    doc.sections = {
        "path": [[repr(a), repr(o)] for a, o in s.path],
        "insects": [[repr(i.latitude), repr(i.longitude)] for i in s.insects],
    }
    return kvfile.dump(doc)


def load_scenario(path: str | os.PathLike) -> FieldScenario:
    with open(path, encoding="utf-8") as fh:
        return parse_scenario(fh.read())


def save_scenario(path: str | os.PathLike, scenario: FieldScenario) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dump_scenario(scenario))
