"""Tests for the gaseq command line."""

import json

import pytest

from gaseq import fixtures
from gaseq.calibration import synthesize_calibration_data
from gaseq.cli import EXIT_INVALID, EXIT_IO, EXIT_OK, main
from gaseq.equilibrium import solve_model
from gaseq.modelfile import calibration_data_to_dict, dump_model, load_model


class TestSolveCommand:
    """Test the solve subcommand."""

    def test_monopoly(self, capsys, data_dir):
        """The monopoly solves at price 500 and 66.667 mcm/d."""
        assert main(["solve", str(data_dir / "monopoly.json")]) == EXIT_OK
        out = capsys.readouterr().out
        assert "status: solved" in out
        assert "500.000" in out
        assert "66.667" in out
        assert "10000.000" in out

    def test_period_detail(self, capsys, data_dir):
        """Per-period rows list every season."""
        assert main(["--method", "lemke", "solve", "--period-detail", str(data_dir / "two_node.json")]) == EXIT_OK
        out = capsys.readouterr().out
        assert "summer" in out
        assert "winter" in out

    def test_invalid_model(self, capsys, tmp_path, data_dir):
        """A model that fails validation exits with status 1."""
        doc = json.loads((data_dir / "monopoly.json").read_text(encoding="utf-8"))
        doc["traders"][0]["theta"] = 1.2
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(doc), encoding="utf-8")
        assert main(["solve", str(path)]) == EXIT_INVALID
        assert "theta_range" in capsys.readouterr().err

    def test_missing_file(self, capsys, tmp_path):
        """An unreadable file exits with status 3."""
        assert main(["solve", str(tmp_path / "absent.json")]) == EXIT_IO
        assert capsys.readouterr().err.startswith("error:")

    def test_unknown_command(self):
        """Argument errors are reported by the parser."""
        with pytest.raises(SystemExit):
            main(["simulate"])


class TestPlanAndRun:
    """Test the plan, run and report subcommands."""

    def test_plan(self, capsys, data_dir):
        """The sample year lays out seven runs."""
        code = main(["plan", str(data_dir / "two_node.json"), str(data_dir / "updates_ky2.json")])
        assert code == EXIT_OK
        lines = capsys.readouterr().out.strip().splitlines()
        assert len(lines) == 8
        assert "RSA&PLC" in lines[-1]

    def test_run_is_deterministic(self, tmp_path, data_dir):
        """Two runs write identical reports."""
        outputs = []
        for name in ("a.csv", "b.csv"):
            out = tmp_path / name
            code = main(
                [
                    "run",
                    str(data_dir / "two_node.json"),
                    str(data_dir / "updates_ky2.json"),
                    "--out",
                    str(out),
                    "--seed",
                    "3",
                ]
            )
            assert code == EXIT_OK
            outputs.append(out.read_bytes())
        assert outputs[0] == outputs[1]
        assert b"# seed: 3" in outputs[0]

    def test_report(self, capsys, tmp_path, data_dir):
        """Aggregates of a fresh report re-derive from its country columns."""
        out = tmp_path / "report.csv"
        main(["run", str(data_dir / "two_node.json"), str(data_dir / "updates_ky2.json"), "--out", str(out)])
        capsys.readouterr()
        assert main(["report", str(out)]) == EXIT_OK
        assert "aggregates re-derived" in capsys.readouterr().out

    def test_report_rejects_other_files(self, tmp_path):
        """A file without report headers is invalid input."""
        path = tmp_path / "plain.csv"
        path.write_text("a,b\n1,2\n", encoding="utf-8")
        assert main(["report", str(path)]) == EXIT_INVALID


class TestCalibrateCommand:
    """Test the calibrate subcommand."""

    def test_writes_calibrated_model(self, tmp_path, duopoly_model):
        """Data generated by the model calibrates to a model with the same equilibrium."""
        model_path = tmp_path / "duopoly.json"
        data_path = tmp_path / "data.json"
        out = tmp_path / "calibrated.json"
        dump_model(duopoly_model, model_path)
        data, _ = synthesize_calibration_data(duopoly_model)
        data_path.write_text(json.dumps(calibration_data_to_dict(data)), encoding="utf-8")

        code = main(["calibrate", str(model_path), str(data_path), "--out", str(out)])
        assert code == EXIT_OK
        calibrated = solve_model(load_model(out))
        assert calibrated.price[("N1", "year")] == pytest.approx(1100.0 / 3.0, rel=1e-6)

    def test_monopoly_data_out_of_range(self, capsys, tmp_path):
        """Data with an elasticity outside the admissible window exits with status 1."""
        model = fixtures.monopoly()
        model_path = tmp_path / "monopoly.json"
        data_path = tmp_path / "data.json"
        dump_model(model, model_path)
        data, _ = synthesize_calibration_data(model)
        data_path.write_text(json.dumps(calibration_data_to_dict(data)), encoding="utf-8")
        assert main(["calibrate", str(model_path), str(data_path)]) == EXIT_INVALID
        assert "error:" in capsys.readouterr().err
