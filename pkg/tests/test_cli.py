import json
import os
import signal
import socket
import subprocess
import sys
import time
import urllib.request

import pytest

from smarttrap import netpbm
from smarttrap.cli import main
from smarttrap.imaging import RgbImage
from smarttrap.telemetry import IngestService, read_log


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out.strip(), err


def frames_dir(tmp_path, capsys, presets):
    d = tmp_path / "frames"
    d.mkdir()
    for i, preset in enumerate(presets):
        assert run(capsys, "gen-scene", "--preset", preset, "--seed", str(i), "--out", str(d / f"{i:03d}.ppm"))[0] == 0
    return d


class TestDetect:
    def test_reference(self, tmp_path, capsys):
        path = tmp_path / "ref.ppm"
        code, out, _ = run(capsys, "gen-scene", "--out", str(path))
        assert (code, out) == (0, "cbb=11 unknown=3")
        code, out, _ = run(capsys, "detect", "--input", str(path), "--annotate", str(tmp_path / "a.ppm"))
        assert (code, out) == (0, "cbb=11 unknown=3")
        assert netpbm.read(tmp_path / "a.ppm").width == 640

    def test_blank_and_json(self, tmp_path, capsys):
        path = tmp_path / "blank.ppm"
        netpbm.write(path, RgbImage.filled(64, 48))
        assert run(capsys, "detect", "--input", str(path))[:2] == (0, "cbb=0 unknown=0")
        code, out, _ = run(capsys, "detect", "--input", str(path), "--json")
        assert code == 0 and json.loads(out)["cbb_count"] == 0

    def test_tuning_flags(self, tmp_path, capsys):
        path = tmp_path / "ref.ppm"
        run(capsys, "gen-scene", "--out", str(path))
        code, out, _ = run(capsys, "detect", "--input", str(path), "--max", "95")
        assert (code, out) == (0, "cbb=14 unknown=0")

    def test_truncated_file(self, tmp_path, capsys):
        path = tmp_path / "bad.ppm"
        path.write_bytes(b"P6\n10 10\n255\n" + bytes(20))
        code, _, err = run(capsys, "detect", "--input", str(path))
        assert code == 2 and "bad.ppm" in err

    @pytest.mark.parametrize("extra", [["--se", "4"], ["--min", "50", "--max", "20"], ["--threshold", "300"]])
    def test_bad_parameters(self, tmp_path, capsys, extra):
        path = tmp_path / "blank.ppm"
        netpbm.write(path, RgbImage.filled(8, 8))
        assert run(capsys, "detect", "--input", str(path), *extra)[0] == 2

    def test_missing_input(self, capsys, tmp_path):
        assert run(capsys, "detect", "--input", str(tmp_path / "nope.ppm"))[0] == 2
        assert run(capsys, "detect")[0] == 2


class TestRunTrap:
    def test_capture_round_trip(self, tmp_path, capsys):
        frames = frames_dir(tmp_path, capsys, ["blank", "capture", "blank"])
        log = tmp_path / "run.ndjson"
        with IngestService(tmp_path / "data") as svc:
            code, out, _ = run(capsys, "run-trap", "--scenario", str(frames), "--endpoint", svc.url,
                               "--log", str(log))
            assert (code, out) == (0, "frames=3 messages=1 delivered=1 pending=0")
            assert [m.captured_count for m in svc.store.snapshot()] == [2]
        assert [m.captured_count for m in read_log(log)] == [2]

    def test_blank_frames_send_nothing(self, tmp_path, capsys):
        frames = frames_dir(tmp_path, capsys, ["blank", "blank"])
        code, out, _ = run(capsys, "run-trap", "--scenario", str(frames), "--log", str(tmp_path / "r.ndjson"))
        assert (code, out) == (0, "frames=2 messages=0 delivered=0 pending=0")

    def test_mixed_frame_ejects(self, tmp_path, capsys):
        frames = frames_dir(tmp_path, capsys, ["mixed"])
        log = tmp_path / "r.ndjson"
        code, out, _ = run(capsys, "run-trap", "--scenario", str(frames), "--log", str(log))
        assert code == 0 and "messages=0" in out
        acts = [json.loads(l) for l in log.read_text().splitlines() if '"actuator"' in l]
        assert {a["actuator"] for a in acts if a.get("kind") == "actuator"} == {"EjectFan1", "EjectFan2", "EjectFan3"}

    def test_endpoint_down_leaves_pending(self, tmp_path, capsys):
        frames = frames_dir(tmp_path, capsys, ["capture"])
        cfg = tmp_path / "trap.cfg"
        cfg.write_text("smarttrap-config 1\nendpoint = http://127.0.0.1:9\nbackoff_base = 0\n"
                       "backoff_cap = 0\nattempts_per_flush = 2\ntrap_id = t7\n")
        code, out, _ = run(capsys, "run-trap", "--scenario", str(frames), "--config", str(cfg),
                           "--log", str(tmp_path / "r.ndjson"))
        assert code == 1 and out.endswith("pending=1")

    @pytest.mark.parametrize("text", ["smarttrap-config 9\n", "smarttrap-config 1\nthreshold = lots\n",
                                      "smarttrap-config 1\ncolour = red\n", "smarttrap-config 1\nmin_px = 99\n"])
    def test_bad_config(self, tmp_path, capsys, text):
        frames = frames_dir(tmp_path, capsys, ["blank"])
        cfg = tmp_path / "trap.cfg"
        cfg.write_text(text)
        assert run(capsys, "run-trap", "--scenario", str(frames), "--config", str(cfg))[0] == 2

    def test_not_a_directory(self, tmp_path, capsys):
        assert run(capsys, "run-trap", "--scenario", str(tmp_path / "missing"))[0] == 2


class TestSimulateAndHeatmap:
    def test_demo_round_into_service_then_heatmap(self, tmp_path, capsys):
        with IngestService(tmp_path / "data") as svc:
            code, out, _ = run(capsys, "simulate-round", "--scenario", "demo", "--endpoint", svc.url,
                               "--out", str(tmp_path / "round.ndjson"))
            assert code == 0
            assert out == "waypoints=800 insects=500 messages=321 captured=407 pending=0"
            assert sum(m.captured_count for m in svc.store.snapshot()) == 407
            code, out, _ = run(capsys, "heatmap", "--source", svc.url, "--out", str(tmp_path / "web"),
                               "--no-figures")
            assert code == 0 and len(out.splitlines()) == 4
        code, out2, _ = run(capsys, "heatmap", "--source", str(tmp_path / "data" / "captures.ndjson"),
                            "--out", str(tmp_path / "file"), "--no-figures")
        assert out2 == out
        for name in os.listdir(tmp_path / "web"):
            assert (tmp_path / "web" / name).read_bytes() == (tmp_path / "file" / name).read_bytes()

    def test_heatmap_single_zoom_with_figures(self, tmp_path, capsys):
        run(capsys, "simulate-round", "--scenario", "demo", "--out", str(tmp_path / "r.ndjson"))
        code, out, _ = run(capsys, "heatmap", "--source", str(tmp_path / "r.ndjson"), "--zoom", "z15",
                           "--out", str(tmp_path / "o"))
        assert code == 0 and out.startswith("z15,")
        assert sorted(os.listdir(tmp_path / "o")) == [
            "heatmap_z15.geojson", "heatmap_z15.html", "heatmap_z15.png", "heatmap_z15_figure.png",
            "summary.csv", "zoom_panels.png"]

    def test_heatmap_empty_source_warns(self, tmp_path, capsys):
        (tmp_path / "empty.ndjson").write_text("")
        code, _, err = run(capsys, "heatmap", "--source", str(tmp_path / "empty.ndjson"), "--out",
                           str(tmp_path / "o"), "--no-figures")
        assert code == 0 and "no captures" in err

    def test_heatmap_unreachable_service(self, tmp_path, capsys):
        assert run(capsys, "heatmap", "--source", "http://127.0.0.1:9", "--out", str(tmp_path / "o"))[0] == 1

    def test_scenario_file(self, tmp_path, capsys):
        scn = tmp_path / "plot.scn"
        scn.write_text("smarttrap-scenario 1\nbounds = -21.2485 -45.5115 -21.2475 -45.5105\n"
                       "random_insects = 30\nseed = 2\n")
        code, out, _ = run(capsys, "simulate-round", "--scenario", str(scn))
        assert code == 0 and "insects=30" in out
        scn.write_text("smarttrap-scenario 1\n")
        assert run(capsys, "simulate-round", "--scenario", str(scn))[0] == 2


def free_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def test_serve_subprocess_graceful_stop(tmp_path):
    port = free_port()
    env = dict(os.environ, SMARTTRAP_DATA_DIR=str(tmp_path / "d"), SMARTTRAP_LISTEN=f"127.0.0.1:{port}")
    proc = subprocess.Popen([sys.executable, "-m", "smarttrap.cli", "serve"], env=env,
                            stderr=subprocess.PIPE, text=True)
    try:
        url = f"http://127.0.0.1:{port}/api/v1/health"
        for _ in range(100):
            try:
                with urllib.request.urlopen(url) as r:
                    assert json.loads(r.read())["status"] == "ok"
                break
            except OSError:
                time.sleep(0.05)
        else:
            pytest.fail("service did not come up")
    finally:
        proc.send_signal(signal.SIGTERM)
        _, err = proc.communicate(timeout=10)
    assert proc.returncode == 0 and "stopped" in err


def test_serve_port_in_use(tmp_path, capsys):
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        s.listen()
        port = s.getsockname()[1]
        code, _, err = run(capsys, "serve", "--listen", f"127.0.0.1:{port}", "--data", str(tmp_path))
    assert code == 1 and "cannot start" in err
