"""Command-line interface: subcommands, exit codes, and report files."""

import json
from pathlib import Path

import numpy as np
import pytest

from vqla import cli
from vqla.report import json_dumps, json_loads

REF_2X2_JSON = {"n": 2, "entries": [[0, 0, 1.5, 0], [0, 1, -0.5, 0], [1, 0, 0.5, 0], [1, 1, 1.5, 0]]}
IDENTITY_JSON = {"n": 2, "entries": [[0, 0, 1, 0], [1, 1, 1, 0]]}


@pytest.fixture
def ref2x2_path(tmp_path):
    path = tmp_path / "ref2x2.json"
    path.write_text(json.dumps(REF_2X2_JSON))
    return str(path)


@pytest.fixture
def identity_path(tmp_path):
    path = tmp_path / "identity.json"
    path.write_text(json.dumps(IDENTITY_JSON))
    return str(path)


class TestSolveCommand:
    def test_reference_2x2_replication(self, ref2x2_path, tmp_path):
        out = tmp_path / "report.json"
        code = cli.main([
            "solve", "--matrix", ref2x2_path, "--v0", "zero", "--depth", "0",
            "--optimizer", "vqe", "--mode", "exact", "--allow-non-hermitian",
            "--seed", "1", "--out", str(out),
        ])
        assert code == 0
        report = json.loads(out.read_text())
        assert report["success"] is True
        assert report["verification"]["oracle_fidelity"] >= 0.9995

    def test_non_hermitian_rejected_without_flag(self, ref2x2_path):
        assert cli.main([
            "solve", "--matrix", ref2x2_path, "--v0", "zero", "--depth", "0",
            "--optimizer", "vqe",
        ]) == 1

    def test_multiply_identity_zero_steps(self, identity_path, tmp_path):
        out = tmp_path / "report.json"
        code = cli.main([
            "multiply", "--matrix", identity_path, "--v0", "zero",
            "--depth", "0", "--optimizer", "vqe", "--out", str(out),
        ])
        assert code == 0
        report = json.loads(out.read_text())
        assert report["trace_summary"]["steps"] == 0

    def test_verified_failure_exits_two(self, ref2x2_path):
        # a single step budget cannot reach the solution from zeros
        code = cli.main([
            "solve", "--matrix", ref2x2_path, "--v0", "zero", "--depth", "0",
            "--optimizer", "ite", "--allow-non-hermitian",
            "--theta0", "[3.1, 0.0]", "--fidelity-min", "0.999999999",
        ])
        assert code == 2

    def test_auto_depth_morph(self, identity_path, tmp_path):
        out = tmp_path / "report.json"
        code = cli.main([
            "solve", "--matrix", identity_path, "--v0", "zero",
            "--depth", "auto", "--out", str(out),
        ])
        assert code == 0
        assert json.loads(out.read_text())["depth"] == 0

    def test_unreadable_matrix_exits_one(self):
        assert cli.main(["solve", "--matrix", "/nonexistent.json"]) == 1

    def test_trace_csv_written(self, ref2x2_path, tmp_path):
        trace = tmp_path / "trace.csv"
        cli.main([
            "solve", "--matrix", ref2x2_path, "--v0", "zero", "--depth", "0",
            "--optimizer", "vqe", "--allow-non-hermitian", "--trace", str(trace),
        ])
        assert trace.read_text().startswith("step,morph_fraction,energy")


class TestReportFormat:
    def test_round_trip_byte_identical(self, ref2x2_path, tmp_path):
        out = tmp_path / "report.json"
        cli.main([
            "solve", "--matrix", ref2x2_path, "--v0", "zero", "--depth", "0",
            "--optimizer", "vqe", "--allow-non-hermitian", "--out", str(out),
        ])
        raw = out.read_text()
        assert json_dumps(json_loads(raw)) == raw

    def test_schema_version(self, identity_path, tmp_path):
        out = tmp_path / "report.json"
        cli.main([
            "multiply", "--matrix", identity_path, "--depth", "0",
            "--optimizer", "vqe", "--out", str(out),
        ])
        assert json.loads(out.read_text())["schema"] == 1


class TestVerifyCommand:
    def test_pass_and_fail(self, identity_path):
        good = cli.main([
            "verify", "--matrix", identity_path, "--task", "solve",
            "--theta", "[0.0, 0.0]", "--depth", "0",
        ])
        assert good == 0
        bad = cli.main([
            "verify", "--matrix", identity_path, "--task", "solve",
            "--theta", "[3.0, 0.0]", "--depth", "0",
        ])
        assert bad == 2


class TestEvolveCommand:
    def test_real_time(self, tmp_path):
        ham = tmp_path / "h.txt"
        ham.write_text("1 0 X\n")
        out = tmp_path / "ev.json"
        trace = tmp_path / "ev.csv"
        code = cli.main([
            "evolve", "--hamiltonian", str(ham), "--time", "0.3",
            "--step", "0.01", "--depth", "0", "--out", str(out),
            "--trace", str(trace),
        ])
        assert code == 0
        data = json.loads(out.read_text())
        assert data["exact_fidelities"][-1] >= 0.99
        assert trace.read_text().startswith("t,fidelity")


class TestTrajectoryCommand:
    def test_summary_written(self, tmp_path):
        ham = tmp_path / "h.txt"
        ham.write_text("0 0 I\n")
        jump = tmp_path / "l.txt"
        jump.write_text("0.5 0 X\n0 0.5 Y\n")
        out = tmp_path / "tr.json"
        code = cli.main([
            "trajectory", "--hamiltonian", str(ham), "--jump", str(jump),
            "--time", "0.2", "--step", "0.02", "--trajectories", "4",
            "--theta0", "[3.14159, 0.0]", "--depth", "0", "--out", str(out),
        ])
        assert code == 0
        data = json.loads(out.read_text())
        assert len(data["trajectories"]) == 4


class TestBenchCommand:
    def test_deterministic_non_timing_columns(self, tmp_path):
        args = [
            "bench", "--n", "1,2", "--kappa", "3", "--depths", "0,1,2",
            "--trials", "3", "--seed", "7",
        ]
        a = tmp_path / "a.csv"
        b = tmp_path / "b.csv"
        assert cli.main(args + ["--csv", str(a)]) == 0
        assert cli.main(args + ["--csv", str(b)]) == 0
        strip = lambda p: [line.rsplit(",", 1)[0] for line in Path(p).read_text().splitlines()]
        assert strip(a) == strip(b)

    def test_auto_seed_printed(self, capsys, tmp_path):
        code = cli.main([
            "bench", "--n", "1", "--kappa", "2", "--depths", "0",
            "--trials", "1", "--csv", str(tmp_path / "c.csv"),
        ])
        assert code == 0
        assert "auto-generated seed" in capsys.readouterr().out


class TestConfigFile:
    def test_defaults_applied_and_overridden(self, identity_path, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("optimizer=vqe\ndepth=0\n")
        out = tmp_path / "r.json"
        code = cli.main([
            "--config", str(cfg), "multiply", "--matrix", identity_path,
            "--out", str(out),
        ])
        assert code == 0
        assert json.loads(out.read_text())["config"]["optimizer"] == "vqe"
        # explicit flag wins over the file default
        code = cli.main([
            "--config", str(cfg), "multiply", "--matrix", identity_path,
            "--optimizer", "morph", "--depth", "0", "--out", str(out),
        ])
        assert code == 0
        assert json.loads(out.read_text())["config"]["optimizer"] == "morph"
