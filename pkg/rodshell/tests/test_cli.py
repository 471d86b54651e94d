"""Tests for CLI entry point: argument parsing, exit codes, JSON output."""

import json
from unittest.mock import patch

import pytest

from rodshell.cli import EXIT_FAILURE, EXIT_OK, EXIT_USAGE, build_parser, main
from rodshell.config import BUNDLED_SCENARIOS
from rodshell.runner import SimulationResult
from rodshell.verification import CantileverResult, FdReport, PropertyCheck


def _run(argv, capsys):
    """Run main, returning (exit code, parsed stdout JSON or None, stderr)."""
    with pytest.raises(SystemExit) as exc:
        main(argv)
    out, err = capsys.readouterr()
    return exc.value.code, json.loads(out) if out.strip() else None, err


class TestBuildParser:
    def test_requires_command(self):
        parser = build_parser()
        with pytest.raises(SystemExit):
            parser.parse_args([])

    def test_simulate_needs_a_source(self):
        parser = build_parser()
        with pytest.raises(SystemExit):
            parser.parse_args(["simulate", "--out", "runs"])

    def test_simulate_sources_are_exclusive(self):
        parser = build_parser()
        with pytest.raises(SystemExit):
            parser.parse_args(["simulate", "--geometry", "g.txt", "--scenario", "snake", "--out", "runs"])

    def test_overrides_repeat(self):
        parser = build_parser()
        args = parser.parse_args(
            ["simulate", "--scenario", "snake", "--set", "solver.dt=0.005", "--set", "env.rft_ct=0.02", "--out", "r"]
        )
        assert args.set == ["solver.dt=0.005", "env.rft_ct=0.02"]

    def test_rejects_unknown_scenario(self):
        parser = build_parser()
        with pytest.raises(SystemExit):
            parser.parse_args(["simulate", "--scenario", "jellyfish", "--out", "r"])

    def test_global_options(self):
        parser = build_parser()
        args = parser.parse_args(["--seed", "3", "--log-every", "10", "-v", "mesh-study"])
        assert args.seed == 3
        assert args.log_every == 10
        assert args.verbose is True

    def test_check_gradients_defaults(self):
        parser = build_parser()
        args = parser.parse_args(["check-gradients"])
        assert args.samples == 100
        assert args.module is None

    def test_check_gradients_modules(self):
        parser = build_parser()
        args = parser.parse_args(["check-gradients", "--module", "bend", "--module", "friction"])
        assert args.module == ["bend", "friction"]

    def test_cantilever_needs_model(self):
        parser = build_parser()
        with pytest.raises(SystemExit):
            parser.parse_args(["validate-cantilever"])

    def test_cantilever_youngs_repeat(self):
        parser = build_parser()
        args = parser.parse_args(["validate-cantilever", "--model", "rod", "--youngs", "2e9", "--youngs", "2e8"])
        assert args.youngs == [2e9, 2e8]
        assert args.family == "equilateral"


class TestMain:
    def test_lists_scenarios(self, capsys):
        code, payload, _ = _run(["scenarios"], capsys)
        assert code == EXIT_OK
        assert list(payload["scenarios"]) == list(BUNDLED_SCENARIOS)

    def test_geometry_needs_config(self, capsys):
        code, _, err = _run(["simulate", "--geometry", "g.txt", "--out", "runs"], capsys)
        assert code == EXIT_USAGE
        assert "--config is required" in err

    def test_rejects_log_every(self, capsys):
        code, _, _ = _run(["--log-every", "0", "scenarios"], capsys)
        assert code == EXIT_USAGE

    def test_missing_files(self, tmp_path, capsys):
        argv = ["simulate", "--geometry", str(tmp_path / "g.txt"), "--config", str(tmp_path / "c.toml")]
        code, _, err = _run([*argv, "--out", str(tmp_path / "out")], capsys)
        assert code == EXIT_USAGE
        assert err.startswith("rodshell: error:")

    def test_unknown_override(self, tmp_path, capsys):
        argv = ["simulate", "--scenario", "rod-drop", "--set", "solver.speed=2", "--out", str(tmp_path)]
        code, _, err = _run(argv, capsys)
        assert code == EXIT_USAGE
        assert "Unknown config key: 'solver.speed'" in err

    def test_solver_failure_exit_code(self, tmp_path, capsys):
        failed = SimulationResult(success=False, error="ConvergenceError: no convergence after 25 iterations")
        with patch("rodshell.cli.build_scenario") as mock_build, patch(
            "rodshell.cli.run_scenario", return_value=failed
        ) as mock_run:
            code, payload, _ = _run(["simulate", "--scenario", "gripper", "--out", str(tmp_path)], capsys)
        mock_build.assert_called_once_with("gripper", {})
        mock_run.assert_called_once()
        assert code == EXIT_FAILURE
        assert payload["success"] is False
        assert payload["error"].startswith("ConvergenceError")

    def test_overrides_reach_builder(self, tmp_path, capsys):
        ok = SimulationResult(success=True, steps=4)
        with patch("rodshell.cli.build_scenario") as mock_build, patch("rodshell.cli.run_scenario", return_value=ok):
            argv = ["--log-every", "2", "simulate", "--scenario", "snake", "--set", "solver.dt=0.005"]
            code, payload, _ = _run([*argv, "--out", str(tmp_path)], capsys)
        mock_build.assert_called_once_with("snake", {"solver.dt": 0.005})
        assert code == EXIT_OK
        assert payload["steps"] == 4

    def test_check_gradients_reports(self, tmp_path, capsys):
        report = FdReport("bend", gradient_error=1e-9, hessian_error=1e-8, samples=5)
        with patch("rodshell.cli.check_gradients", return_value=report) as mock_check:
            argv = ["--seed", "4", "check-gradients", "--module", "bend", "--samples", "5"]
            code, payload, _ = _run([*argv, "--report", str(tmp_path / "fd.csv")], capsys)
        mock_check.assert_called_once_with("bend", 5, 4)
        assert code == EXIT_OK
        assert payload["passed"] is True
        assert payload["modules"]["bend"]["hessian_error"] == 1e-8
        assert (tmp_path / "fd.csv").exists()

    def test_failed_gradient_check(self, capsys):
        report = FdReport("bend", gradient_error=1e-2)
        with patch("rodshell.cli.check_gradients", return_value=report):
            code, payload, _ = _run(["check-gradients", "--module", "bend"], capsys)
        assert code == EXIT_FAILURE
        assert payload["passed"] is False

    def test_rejects_zero_samples(self, capsys):
        code, _, _ = _run(["check-gradients", "--samples", "0"], capsys)
        assert code == EXIT_USAGE

    def test_locomotion_properties(self, tmp_path, capsys):
        checks = [PropertyCheck("manta-symmetric", 0.0, 1e-6, True)]
        with patch("rodshell.cli.locomotion_properties", return_value=checks):
            code, payload, _ = _run(["check-locomotion", "--scenario", "manta", "--out", str(tmp_path)], capsys)
        assert code == EXIT_OK
        assert payload["checks"][0]["name"] == "manta-symmetric"
        assert (tmp_path / "properties.csv").exists()

    @pytest.mark.parametrize(("simulated", "expected"), [(1.02e-3, EXIT_OK), (1.5e-3, EXIT_FAILURE)])
    def test_cantilever_exit_code(self, capsys, simulated, expected):
        results = [CantileverResult("rod", 2e10, simulated, 1e-3), CantileverResult("rod", 2e7, 0.5, 1.0)]
        with patch("rodshell.cli.validate_cantilever", return_value=results) as mock_validate:
            code, payload, _ = _run(["validate-cantilever", "--model", "rod"], capsys)
        mock_validate.assert_called_once_with("rod", [2e10, 2e9, 2e8, 2e7], "equilateral", seed=0)
        assert code == expected
        assert payload["passed"] is (expected == EXIT_OK)
        assert payload["check"]["threshold"] == 0.05

    @pytest.mark.parametrize(("hinge", "expected"), [((0.8, 1.2), EXIT_OK), ((0.99, 1.0), EXIT_FAILURE)])
    def test_mesh_study_exit_code(self, capsys, hinge, expected):
        results = [
            CantileverResult("hinge", 2e9, hinge[0], 1.0, "equilateral"),
            CantileverResult("hinge", 2e9, hinge[1], 1.0, "random"),
            CantileverResult("midedge", 2e9, 0.97, 1.0, "equilateral"),
            CantileverResult("midedge", 2e9, 1.01, 1.0, "random"),
        ]
        with patch("rodshell.cli.mesh_study", return_value=results):
            code, payload, _ = _run(["mesh-study", "--family", "equilateral", "--family", "random"], capsys)
        assert code == expected
        assert payload["passed"] is (expected == EXIT_OK)
        assert payload["check"]["value"] == pytest.approx(0.04)

    def test_mesh_study_single_model_is_ungated(self, capsys):
        results = [
            CantileverResult("hinge", 2e9, 0.5, 1.0, "equilateral"),
            CantileverResult("hinge", 2e9, 2.0, 1.0, "random"),
        ]
        with patch("rodshell.cli.mesh_study", return_value=results):
            code, payload, _ = _run(["mesh-study", "--model", "hinge"], capsys)
        assert code == EXIT_OK
        assert payload["check"] is None

    def test_failed_run_is_exit_failure(self, tmp_path, capsys):
        with patch("rodshell.cli.locomotion_properties", side_effect=RuntimeError("snake run 'snake-rft' failed")):
            code, _, err = _run(["check-locomotion", "--scenario", "snake", "--out", str(tmp_path)], capsys)
        assert code == EXIT_FAILURE
        assert "rodshell: failed:" in err


@pytest.mark.integration
class TestSimulateEndToEnd:
    def test_bundled_scenario(self, tmp_path, capsys):
        argv = ["simulate", "--scenario", "rod-drop", "--set", "solver.total_time=0.003", "--out", str(tmp_path)]
        code, payload, _ = _run(argv, capsys)
        assert code == EXIT_OK
        assert payload["steps"] == 3
        assert payload["frames"] == 2
        assert (tmp_path / "states.csv").exists()
        assert payload["min_gaps"]["floor"] > 0.04

    def test_geometry_and_config_files(self, tmp_path, capsys):
        (tmp_path / "rod.txt").write_text("*Nodes\n0 0 0\n0.01 0 0\n0.02 0 0\n*Edges\n1 2\n2 3\n")
        (tmp_path / "run.toml").write_text(
            "[env]\ngravity = [0.0, 0.0, -9.8]\n\n"
            "[solver]\ndt = 0.001\ntotal_time = 0.002\n\n"
            "[bc]\nfixed_nodes = [1]\n\n"
            "[output]\ntracked_nodes = [3]\n"
        )
        argv = ["simulate", "--geometry", str(tmp_path / "rod.txt"), "--config", str(tmp_path / "run.toml")]
        code, payload, _ = _run([*argv, "--out", str(tmp_path / "out")], capsys)
        assert code == EXIT_OK
        assert payload["frames"] == 3
        with open(payload["summary"]) as fh:
            assert fh.readline().strip() == "time,x3,y3,z3"
