"""Command-line interface: config handling, outputs, determinism."""

import json
import os

import numpy as np

from greenpot import cli


def run(args):
    return cli.main(args)


class TestConfig:
    def test_unknown_key_rejected(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"seed": 1, "wibble": 2}))
        assert run(["selftest", "--config", str(cfg)]) == cli.EXIT_CONFIG

    def test_wrong_type_rejected(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"seed": "zero"}))
        assert run(["selftest", "--config", str(cfg)]) == cli.EXIT_CONFIG

    def test_malformed_json_rejected(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text("{not json")
        assert run(["selftest", "--config", str(cfg)]) == cli.EXIT_CONFIG

    def test_bad_values_rejected(self):
        assert run(["mlmc", "--eps", "-0.5"]) == cli.EXIT_CONFIG
        assert run(["mlmc", "--eps-split", "1.5"]) == cli.EXIT_CONFIG

    def test_flags_override_file(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"grid": 8, "geometry": "square"}))
        out = tmp_path / "o"
        assert run([
            "greens", "--config", str(cfg), "--grid", "12", "--out-dir", str(out),
        ]) == 0
        g = np.loadtxt(out / "greens_square_analytical.csv", delimiter=",")
        assert g.shape == (12, 12)


class TestSelftest:
    def test_passes(self, capsys):
        assert run(["selftest"]) == 0
        out = capsys.readouterr().out
        assert "all passed" in out


class TestExample1Command:
    def test_writes_csv_and_json(self, tmp_path):
        assert run([
            "example1", "--kernel", "analytical", "--n2-list", "8,16,32",
            "--out-dir", str(tmp_path),
        ]) == 0
        csv = (tmp_path / "example1_analytical.csv").read_text().splitlines()
        assert csv[0].startswith("n1,n2,err_mu")
        assert len(csv) == 4
        data = json.loads((tmp_path / "example1_analytical.json").read_text())
        assert data["schema_version"] == 1
        assert len(data["rows"]) == 3

    def test_levels_flag(self, tmp_path):
        assert run([
            "example1", "--kernel", "analytical", "--levels", "2",
            "--out-dir", str(tmp_path),
        ]) == 0
        data = json.loads((tmp_path / "example1_analytical.json").read_text())
        assert [r["n2"] for r in data["rows"]] == [8, 16]


class TestGreensCommand:
    def test_square_grid_vanishes_on_boundary(self, tmp_path):
        assert run([
            "greens", "--geometry", "square", "--source", "0.3,0.4", "--grid", "64",
            "--out-dir", str(tmp_path),
        ]) == 0
        g = np.loadtxt(tmp_path / "greens_square_analytical.csv", delimiter=",")
        assert g.shape == (64, 64)
        border = np.concatenate([g[0], g[-1], g[:, 0], g[:, -1]])
        assert np.max(np.abs(border)) <= 1e-8
        assert np.nanmax(g) > 0.1  # near-source values are large

    def test_disk_geometry(self, tmp_path):
        assert run([
            "greens", "--geometry", "disk", "--source", "0.2,0.1", "--grid", "16",
            "--out-dir", str(tmp_path),
        ]) == 0
        g = np.loadtxt(tmp_path / "greens_disk_analytical.csv", delimiter=",")
        assert np.isnan(g[0, 0])  # outside the disk


class TestDeterminism:
    def test_mlmc_byte_identical_across_thread_counts(self, tmp_path):
        payloads = []
        for threads, sub in ((1, "a"), (8, "b")):
            out = tmp_path / sub
            assert run([
                "mlmc", "--eps", "0.02", "--seed", "7", "--kernel", "numerical",
                "--pilot", "4", "--threads", str(threads), "--out-dir", str(out),
            ]) == 0
            payloads.append((out / "mlmc_result.json").read_bytes())
            payloads.append((out / "mlmc_levels.csv").read_bytes())
        assert payloads[0] == payloads[2]
        assert payloads[1] == payloads[3]

    def test_repeat_run_byte_identical(self, tmp_path):
        blobs = []
        for sub in ("x", "y"):
            out = tmp_path / sub
            assert run([
                "mlmc", "--eps", "0.02", "--seed", "3", "--pilot", "4",
                "--out-dir", str(out),
            ]) == 0
            blobs.append((out / "mlmc_result.json").read_bytes())
        assert blobs[0] == blobs[1]

    def test_config_roundtrip_reproduces(self, tmp_path):
        out1 = tmp_path / "r1"
        assert run([
            "mlmc", "--eps", "0.02", "--seed", "11", "--pilot", "4",
            "--out-dir", str(out1),
        ]) == 0
        payload = json.loads((out1 / "mlmc_result.json").read_text())
        cfg_file = tmp_path / "replay.json"
        cfg_file.write_text(json.dumps(payload["config"]))
        out2 = tmp_path / "r2"
        assert run(["mlmc", "--config", str(cfg_file), "--out-dir", str(out2)]) == 0
        replay = json.loads((out2 / "mlmc_result.json").read_text())
        assert replay == payload

    def test_float_formatting_17_digits(self):
        assert cli.fmt(1 / 3) == "0.33333333333333331"
        assert cli.fmt(7) == "7"


class TestErrorExits:
    def test_solver_failure_exit_code(self, tmp_path, monkeypatch):
        import greenpot.experiments as ex

        def boom(*a, **k):
            raise RuntimeError("exploded")

        monkeypatch.setattr(ex, "run_example1", boom)
        assert run(["example1", "--out-dir", str(tmp_path)]) == cli.EXIT_SOLVER
