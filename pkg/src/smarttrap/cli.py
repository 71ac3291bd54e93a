"""Command-line entry points.

Exit codes: 0 success, 1 operational failure, 2 input validation failure.
Environment: SMARTTRAP_ENDPOINT, SMARTTRAP_DATA_DIR, SMARTTRAP_LISTEN.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import signal
import sys
import threading
import urllib.error
import urllib.request
from pathlib import Path

from . import kvfile, netpbm, report
from .detection import SizeRange, annotate, detect
from .geo import GeoFix
from .heatmap import ZOOM_PRESETS
from .imaging import StructuringElement
from .simkit import (
    FixedGps,
    ScenarioError,
    SceneError,
    ScriptedCamera,
    capture_scene_spec,
    demo_scenario,
    generate_scene,
    hil_round,
    load_scenario,
    random_scene_spec,
    reference_scene_spec,
    simulate_round,
)
from .simkit.scene import Blob, SceneSpec
from .telemetry import Backoff, CaptureMessage, TelemetryClient, WireError, read_log
from .telemetry.service import CAPTURES, IngestService
from .trapctl import TrapConfig, trap_loop

log = logging.getLogger("smarttrap")

OK, FAILED, INVALID = 0, 1, 2
CONFIG_KIND = "smarttrap-config"
DEFAULT_FIX = "-21.2480,-45.5110"  # synthetic plot used by the demo scenario


class UsageError(Exception):
    """Bad input; maps to exit code 2."""


def _env(name: str, default=None):
    return os.environ.get(name) or default


# -- config files -----------------------------------------------------------

_FLOAT_KEYS = ("frame_period", "scent_pulse_period", "capture_fan_duration", "eject_fan_duration")
_INT_KEYS = ("threshold", "min_px", "max_px", "se_size")
_CLIENT_KEYS = ("endpoint", "backoff_base", "backoff_cap", "attempts_per_flush", "gps")


def load_config(path) -> tuple[TrapConfig, dict]:
    """Read a trap config file; returns (TrapConfig, extras) where extras holds
    endpoint, gps and delivery settings."""
    from .telemetry.wire import parse_timestamp

    try:
        text = Path(path).read_text(encoding="utf-8")
        doc = kvfile.parse(text, CONFIG_KIND)
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    except kvfile.KvFormatError as exc:
        raise UsageError(f"{path}: {exc}") from None
    kwargs, extras = {}, {}
    for key, value in doc.values.items():
        try:
            if key in _FLOAT_KEYS:
                kwargs[key] = float(value)
            elif key in _INT_KEYS:
                kwargs[key] = int(value)
            elif key == "trap_id":
                kwargs[key] = value
            elif key == "start_time":
                kwargs[key] = parse_timestamp(value)
            elif key in _CLIENT_KEYS:
                extras[key] = value
            else:
                raise UsageError(f"{path}: unknown key {key!r}")
        except (ValueError, WireError) as exc:
            raise UsageError(f"{path}: bad value for {key}: {exc}") from None
    try:
        return TrapConfig(**kwargs), extras
    except ValueError as exc:
        raise UsageError(f"{path}: {exc}") from None


def _parse_fix(text: str) -> GeoFix:
    try:
        lat, lon = (float(v) for v in text.replace(",", " ").split())
        return GeoFix(lat, lon)
    except ValueError as exc:
        raise UsageError(f"bad GPS fix {text!r}: {exc}") from None


def _client(endpoint: str, extras: dict | None = None) -> TelemetryClient:
    extras = extras or {}
    try:
        backoff = Backoff(base=float(extras.get("backoff_base", 0.2)), cap=float(extras.get("backoff_cap", 2.0)))
        attempts = int(extras.get("attempts_per_flush", 4))
    except ValueError as exc:
        raise UsageError(f"bad delivery setting: {exc}") from None
    return TelemetryClient.for_endpoint(endpoint, backoff=backoff, attempts_per_flush=attempts)


# -- subcommands --------------------------------------------------------------

def cmd_detect(args) -> int:
    try:
        frame = netpbm.read_rgb(args.input)
    except OSError as exc:
        raise UsageError(f"cannot read {args.input}: {exc}") from None
    except netpbm.NetpbmError as exc:
        raise UsageError(f"{args.input}: {exc}") from None
    try:
        se = StructuringElement(args.se)
        rng = SizeRange(args.min, args.max)
        if not 0 <= args.threshold <= 255:
            raise ValueError("threshold must lie in [0, 255]")
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    result = detect(frame, args.threshold, se, rng)
    if args.json:
        print(json.dumps(result.to_record(), sort_keys=True))
    else:
        print(f"cbb={result.cbb_count} unknown={result.unknown_count}")
    if args.annotate:
        netpbm.write(args.annotate, annotate(frame, result))
    return OK


def cmd_gen_scene(args) -> int:
    try:
        if args.preset == "reference":
            spec = reference_scene_spec(args.seed)
        elif args.preset == "random":
            spec = random_scene_spec(args.seed)
        elif args.preset == "blank":
            spec = SceneSpec(rng_seed=args.seed)
        elif args.preset == "capture":
            spec = capture_scene_spec(args.count, args.seed)
        else:  # mixed: one beetle and one oversized insect
            spec = SceneSpec(blobs=(Blob(200, 240, 24, 20, 20), Blob(420, 240, 80, 75, 20, "ellipse")),
                             rng_seed=args.seed)
        scene = generate_scene(spec)
    except SceneError as exc:
        raise UsageError(str(exc)) from None
    netpbm.write(args.out, scene.image)
    print(f"cbb={scene.cbb} unknown={scene.unknown}")
    return OK


def _frame_files(directory) -> list[Path]:
    d = Path(directory)
    if not d.is_dir():
        raise UsageError(f"{directory} is not a directory of frames")
    return sorted(p for p in d.iterdir() if p.suffix.lower() in (".ppm", ".pgm", ".pnm"))


class _DirCamera(ScriptedCamera):
    """Reads frames lazily; unreadable files surface as camera errors."""

    def __init__(self, paths):
        super().__init__([])
        self.paths = list(paths)

    def read(self):
        from .trapctl import CameraError

        if self.pos >= len(self.paths):
            return None
        path = self.paths[self.pos]
        self.pos += 1
        try:
            return netpbm.read_rgb(path)
        except (OSError, netpbm.NetpbmError) as exc:
            raise CameraError(f"{path.name}: {exc}") from None


def cmd_run_trap(args) -> int:
    config, extras = load_config(args.config) if args.config else (TrapConfig(), {})
    endpoint = args.endpoint or extras.get("endpoint") or _env("SMARTTRAP_ENDPOINT")
    fix = _parse_fix(args.gps or extras.get("gps") or DEFAULT_FIX)
    camera = _DirCamera(_frame_files(args.scenario))
    client = _client(endpoint, extras) if endpoint else None
    run = trap_loop(camera, FixedGps(fix), None, client, config)
    if client is not None and client.pending:
        client.flush()
    Path(args.log).write_text(run.to_ndjson(), encoding="utf-8")
    delivered = len(client.acks) if client else 0
    pending = client.pending if client else 0
    print(f"frames={run.frames} messages={len(run.messages)} delivered={delivered} pending={pending}")
    if client is not None and (pending or client.dropped or client.rejected):
        log.error("undelivered captures: pending=%d dropped=%d rejected=%d", pending, client.dropped,
                  client.rejected)
        return FAILED
    return OK


def cmd_simulate_round(args) -> int:
    try:
        scenario = demo_scenario() if args.scenario == "demo" else load_scenario(args.scenario)
    except OSError as exc:
        raise UsageError(f"cannot read scenario {args.scenario}: {exc}") from None
    except ScenarioError as exc:
        raise UsageError(f"invalid scenario: {exc}") from None
    endpoint = args.endpoint or _env("SMARTTRAP_ENDPOINT")
    client = _client(endpoint) if endpoint else None
    if args.hil:
        run = hil_round(scenario, telemetry_client=client)
        messages = run.messages
    else:
        messages = simulate_round(scenario)
        if client is not None:
            for m in messages:
                client.submit(m)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            for m in messages:
                fh.write(json.dumps(m.to_dict(), sort_keys=True, separators=(",", ":")) + "\n")
    total = sum(m.captured_count for m in messages)
    pending = client.pending if client else 0
    print(f"waypoints={len(scenario.waypoints())} insects={len(scenario.insects)} "
          f"messages={len(messages)} captured={total} pending={pending}")
    return FAILED if pending else OK


def _split_listen(text: str) -> tuple[str, int]:
    host, _, port = text.rpartition(":")
    try:
        return host or "127.0.0.1", int(port)
    except ValueError:
        raise UsageError(f"bad listen address {text!r}; use host:port") from None


def cmd_serve(args) -> int:
    host, port = _split_listen(args.listen or _env("SMARTTRAP_LISTEN", "127.0.0.1:8080"))
    data = args.data or _env("SMARTTRAP_DATA_DIR", "data")
    try:
        service = IngestService(data, host, port, fsync=not args.no_fsync)
    except OSError as exc:
        print(f"smarttrap serve: cannot start on {host}:{port} with data dir {data}: {exc}", file=sys.stderr)
        return FAILED
    stop = threading.Event()

    def on_signal(signum, frame):
        stop.set()

    for sig in (signal.SIGINT, signal.SIGTERM):
        signal.signal(sig, on_signal)
    service.start()
    print(f"listening on {service.url} (data: {data}, {len(service.store)} stored)", file=sys.stderr, flush=True)
    try:
        while not stop.wait(0.5):
            pass
    finally:
        service.stop()
        print("stopped; log flushed", file=sys.stderr)
    return OK


def _fetch(url: str) -> list[CaptureMessage]:
    if CAPTURES not in url:
        url = url.rstrip("/") + CAPTURES
    try:
        with urllib.request.urlopen(url, timeout=10) as resp:
            payload = json.loads(resp.read())
    except (urllib.error.URLError, OSError) as exc:
        raise RuntimeError(f"cannot query {url}: {exc}") from None
    return [CaptureMessage.from_dict(row) for row in payload.get("captures", [])]


def cmd_heatmap(args) -> int:
    source = args.source
    if source.startswith(("http://", "https://")):
        try:
            messages = _fetch(source)
        except RuntimeError as exc:
            print(f"smarttrap heatmap: {exc}", file=sys.stderr)
            return FAILED
    else:
        try:
            messages = read_log(source)
        except OSError as exc:
            raise UsageError(f"cannot read {source}: {exc}") from None
        except (ValueError, WireError) as exc:
            raise UsageError(f"{source}: {exc}") from None
    zooms = args.zoom or list(ZOOM_PRESETS)
    try:
        res = report.export_heatmaps(messages, args.out, zooms, args.blur, args.opacity,
                                     figures=not args.no_figures)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if not messages:
        print("warning: source holds no captures; artifacts are all-zero", file=sys.stderr)
    for row in res["rows"]:
        print(",".join(str(row[k]) for k in ("zoom", "cell_size_m", "nx", "ny", "total_count", "nonzero_cells")))
    return OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="smarttrap", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("detect", help="count beetles and unknown insects in a PPM/PGM frame")
    d.add_argument("--input", required=True)
    d.add_argument("--threshold", type=int, default=45)
    d.add_argument("--min", type=int, default=10)
    d.add_argument("--max", type=int, default=60)
    d.add_argument("--se", type=int, default=3, help="structuring element side (odd)")
    d.add_argument("--annotate", metavar="OUT.ppm")
    d.add_argument("--json", action="store_true", help="print detections as JSON")
    d.set_defaults(func=cmd_detect)

    g = sub.add_parser("gen-scene", help="render a synthetic frame and print its ground truth")
    g.add_argument("--out", required=True)
    g.add_argument("--preset", choices=("reference", "random", "blank", "capture", "mixed"), default="reference")
    g.add_argument("--seed", type=int, default=6)
    g.add_argument("--count", type=int, default=2, help="beetles for --preset capture")
    g.set_defaults(func=cmd_gen_scene)

    r = sub.add_parser("run-trap", help="run the trap loop over a directory of frames")
    r.add_argument("--scenario", required=True, metavar="FRAMES_DIR")
    r.add_argument("--endpoint")
    r.add_argument("--config")
    r.add_argument("--gps", metavar="LAT,LON")
    r.add_argument("--log", default="run_log.ndjson")
    r.set_defaults(func=cmd_run_trap)

    s = sub.add_parser("simulate-round", help="walk a field scenario and submit capture messages")
    s.add_argument("--scenario", required=True, help="scenario file, or 'demo'")
    s.add_argument("--endpoint")
    s.add_argument("--out", help="also write messages as NDJSON")
    s.add_argument("--hil", action="store_true", help="route every capture through the vision + trap loop")
    s.set_defaults(func=cmd_simulate_round)

    v = sub.add_parser("serve", help="run the ingest service")
    v.add_argument("--listen", help="host:port")
    v.add_argument("--data", help="data directory")
    v.add_argument("--no-fsync", action="store_true")
    v.set_defaults(func=cmd_serve)

    h = sub.add_parser("heatmap", help="render capture density artifacts")
    h.add_argument("--source", required=True, help="service URL or NDJSON record log")
    h.add_argument("--zoom", action="append", choices=list(ZOOM_PRESETS))
    h.add_argument("--blur", type=float, help="blur radius in metres (default: 6 map pixels)")
    h.add_argument("--opacity", type=float, default=0.6)
    h.add_argument("--out", required=True)
    h.add_argument("--no-figures", action="store_true", help="skip matplotlib figures")
    h.set_defaults(func=cmd_heatmap)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return INVALID if exc.code else OK
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"smarttrap {args.command}: {exc}", file=sys.stderr)
        return INVALID


if __name__ == "__main__":
    sys.exit(main())
