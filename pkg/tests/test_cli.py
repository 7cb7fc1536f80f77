import json
import os
import subprocess
import sys
import time

import pytest
import requests

from agrimon.cli import main
from agrimon.raster import read_raster_file

from test_ingest import SAMPLE_CSV, SAMPLE_XML


def run_cli(*argv):
    return main(list(argv))


class TestGenSynthetic:
    def test_band_count_and_outputs(self, tmp_path):
        out = tmp_path / "data"
        code = run_cli("gen-synthetic", "--rows", "8", "--cols", "8",
                       "--days", "120", "--revisit", "8", "--noise", "0",
                       "--seed", "1", "--out", str(out))
        assert code == 0
        grid = read_raster_file(out / "raster.agr1")
        assert (grid.rows, grid.cols, grid.bands) == (8, 8, 15)  # ceil(120/8)
        assert (out / "truth.json").exists()
        assert (out / "weather.csv").exists()

    def test_same_seed_identical_files(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            run_cli("gen-synthetic", "--rows", "3", "--cols", "3", "--days", "40",
                    "--revisit", "8", "--noise", "0.1", "--seed", "9",
                    "--out", str(out))
        for name in ("raster.agr1", "truth.json", "weather.csv"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_self_scored_truth_is_exact(self, tmp_path, capsys):
        out = tmp_path / "data"
        run_cli("gen-synthetic", "--rows", "2", "--cols", "2", "--days", "40",
                "--seed", "3", "--out", str(out))
        code = run_cli("score", "--truth", str(out / "truth.json"),
                       "--result", str(out / "truth.json"))
        assert code == 0
        output = capsys.readouterr().out
        assert "4/4 pixels within tolerance (100.0%)" in output
        assert "mean abs error 0" in output


@pytest.fixture(scope="module")
def scenario(tmp_path_factory):
    out = tmp_path_factory.mktemp("scenario")
    run_cli("gen-synthetic", "--rows", "2", "--cols", "2", "--days", "60",
            "--revisit", "8", "--seed", "2", "--vary", "sow_day,growth_rate",
            "--out", str(out))
    return out


class TestAssimilate:
    def test_noiseless_two_by_two_converges(self, scenario, tmp_path):
        out = tmp_path / "result"
        code = run_cli("assimilate", "--raster", str(scenario / "raster.agr1"),
                       "--weather", str(scenario / "weather.csv"),
                       "--pop", "48", "--gens", "120", "--seed", "1",
                       "--free-genes", "sow_day,growth_rate",
                       "--workers", "2", "--out", str(out))
        assert code == 0
        doc = json.loads((out / "parammap.json").read_text())
        assert len(doc["pixels"]) == 4
        assert all(p["rmse"] <= 1e-3 for p in doc["pixels"])
        metrics = (out / "metrics.csv").read_text().splitlines()
        assert metrics[0] == ("strategy,workers,pixels,generations,messages,"
                              "bytes,wall_ms,speedup")

    def test_same_seed_identical_outputs(self, scenario, tmp_path):
        outs = []
        for name in ("r1", "r2"):
            out = tmp_path / name
            run_cli("assimilate", "--raster", str(scenario / "raster.agr1"),
                    "--weather", str(scenario / "weather.csv"),
                    "--pop", "8", "--gens", "4", "--seed", "5",
                    "--workers", "2", "--out", str(out))
            outs.append((out / "parammap.json").read_bytes())
        assert outs[0] == outs[1]

    def test_bad_region_exits_2(self, scenario, tmp_path):
        code = run_cli("assimilate", "--raster", str(scenario / "raster.agr1"),
                       "--weather", str(scenario / "weather.csv"),
                       "--region", "0,0,9,9", "--out", str(tmp_path / "x"))
        assert code == 2

    def test_missing_raster_exits_2(self, scenario, tmp_path):
        code = run_cli("assimilate", "--raster", str(scenario / "nope.agr1"),
                       "--weather", str(scenario / "weather.csv"),
                       "--out", str(tmp_path / "x"))
        assert code == 2


class TestScore:
    def test_recovered_map_scored(self, tmp_path, capsys):
        data = tmp_path / "data"
        run_cli("gen-synthetic", "--rows", "2", "--cols", "2", "--days", "60",
                "--revisit", "8", "--seed", "2", "--vary", "sow_day,growth_rate",
                "--out", str(data))
        out = tmp_path / "result"
        run_cli("assimilate", "--raster", str(data / "raster.agr1"),
                "--weather", str(data / "weather.csv"),
                "--pop", "48", "--gens", "120", "--seed", "1",
                "--free-genes", "sow_day,growth_rate",
                "--workers", "2", "--out", str(out))
        capsys.readouterr()
        code = run_cli("score", "--truth", str(data / "truth.json"),
                       "--result", str(out / "parammap.json"))
        assert code == 0
        assert "4/4 pixels within tolerance" in capsys.readouterr().out


class TestBench:
    def test_tiny_scenario_ordering_and_csv(self, tmp_path, capsys):
        # 4 workers so the default 2-group hierarchy sends smaller per-round
        # batches than population (at <4 workers it degenerates to g=1)
        scenario = {"rows": 3, "cols": 3, "days": 16, "revisit": 8,
                    "workers": 4, "pop_size": 6, "generations": 3,
                    "seed": 4, "chunk": 1}
        path = tmp_path / "scenario.json"
        path.write_text(json.dumps(scenario))
        out = tmp_path / "bench.csv"
        code = run_cli("bench", "--scenario", str(path), "--out", str(out))
        assert code == 0
        lines = out.read_text().splitlines()
        assert lines[0] == ("strategy,workers,pixels,generations,messages,"
                            "bytes,wall_ms,speedup")
        rows = {line.split(",")[0]: line.split(",") for line in lines[1:]}
        messages = {name: int(row[4]) for name, row in rows.items()}
        assert messages["pixel"] < messages["hierarchical"] < messages["population"]
        summary = capsys.readouterr().err
        assert "OK" in summary and "MISMATCH" not in summary

    def test_missing_scenario_exits_2(self, tmp_path):
        assert run_cli("bench", "--scenario", str(tmp_path / "nope.json")) == 2

    def test_unknown_scenario_key_exits_2(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"wat": 1}))
        assert run_cli("bench", "--scenario", str(path)) == 2


class TestIngestCommand:
    def test_single_file_report(self, tmp_path, capsys):
        feed = tmp_path / "weather.csv"
        feed.write_text(SAMPLE_CSV)
        code = run_cli("ingest", "--data-dir", str(tmp_path / "dd"),
                       "--file", str(feed))
        assert code == 0
        out = capsys.readouterr().out
        assert "inserted 9" in out and "duplicates 3" in out and "rejected 12" in out

    def test_inbox_processing(self, tmp_path, capsys):
        inbox = tmp_path / "inbox"
        inbox.mkdir()
        (inbox / "a.csv").write_text(SAMPLE_CSV)
        (inbox / "b.xml").write_text(SAMPLE_XML)
        code = run_cli("ingest", "--data-dir", str(tmp_path / "dd"),
                       "--inbox", str(inbox), "--archive", str(tmp_path / "arch"))
        assert code == 0
        assert "inserted 13" in capsys.readouterr().out
        assert sorted(os.listdir(tmp_path / "arch")) == ["a.csv", "b.xml"]

    def test_empty_inbox_zero_report(self, tmp_path, capsys):
        inbox = tmp_path / "inbox"
        inbox.mkdir()
        code = run_cli("ingest", "--data-dir", str(tmp_path / "dd"),
                       "--inbox", str(inbox))
        assert code == 0
        assert "inserted 0, duplicates 0, rejected 0" in capsys.readouterr().out


class TestServeCommand:
    def test_serve_subprocess_health(self, tmp_path):
        data = tmp_path / "data"
        run_cli("gen-synthetic", "--rows", "2", "--cols", "2", "--days", "30",
                "--seed", "1", "--out", str(tmp_path / "gen"))
        (data / "rasters").mkdir(parents=True)
        os.replace(tmp_path / "gen" / "raster.agr1",
                   data / "rasters" / "field1.agr1")
        run_cli("ingest", "--data-dir", str(data),
                "--file", str(tmp_path / "gen" / "weather.csv"))
        import socket
        with socket.socket() as s:
            s.bind(("127.0.0.1", 0))
            port = s.getsockname()[1]
        proc = subprocess.Popen(
            [sys.executable, "-m", "agrimon.cli", "serve", "--data-dir",
             str(data), "--port", str(port)],
            stdout=subprocess.PIPE, stderr=subprocess.STDOUT)
        try:
            deadline = time.time() + 15
            body = None
            while time.time() < deadline:
                try:
                    body = requests.get(f"http://127.0.0.1:{port}/api/health",
                                        timeout=1).json()
                    break
                except requests.ConnectionError:
                    time.sleep(0.1)
            assert body == {"status": "ok"}
            rasters = requests.get(f"http://127.0.0.1:{port}/api/rasters").json()
            assert rasters[0]["id"] == "field1"
        finally:
            proc.terminate()
            proc.wait(timeout=10)


class TestUsageErrors:
    def test_unknown_subcommand_exits_2(self):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 2

    def test_missing_required_flag_exits_2(self):
        with pytest.raises(SystemExit) as exc:
            main(["gen-synthetic"])
        assert exc.value.code == 2
