"""Tests for FD gradient checks, the cantilever oracle and trajectory metrics."""

import csv
import math

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from rodshell.geometry_io import TrajectoryWriter
from rodshell.verification import (
    GRADIENT_MODULES,
    CantileverResult,
    FdReport,
    cantilever_check,
    check_gradients,
    earthworm_properties,
    euler_bernoulli_tip_deflection,
    fd_check,
    locomotion_properties,
    manta_properties,
    merge_reports,
    mesh_dependence_check,
    node_positions_log,
    normalized_spread,
    peak_rigid_deviation,
    rigid_deviation,
    tracked_series,
    validate_cantilever,
    write_report,
)

_A = np.array([[4.0, 1.0, 0.0], [1.0, 3.0, 0.5], [0.0, 0.5, 2.0]])


def _quadratic(x):
    return 0.5 * x @ _A @ x, _A @ x, _A


def _track(out_dir, xs, zs=None):
    """Summary with node 0 tracked, one frame per x value."""
    zs = np.zeros(len(xs)) if zs is None else zs
    with TrajectoryWriter(out_dir, 4, tracked_nodes=(0,)) as writer:
        for k, (x, z) in enumerate(zip(xs, zs)):
            writer.write(0.1 * k, np.array([x, 0.0, z, 0.0]), np.zeros(4))
    return writer.summary_path


class TestFdCheck:
    def test_quadratic_passes(self):
        report = fd_check(_quadratic, [0.3, -0.2, 0.1])
        assert report.gradient_error < 1e-7
        assert report.hessian_error < 1e-7
        assert report.passed()

    def test_wrong_gradient_fails(self):
        def wrong(x):
            e, g, h = _quadratic(x)
            return e, 1.1 * g, h

        report = fd_check(wrong, [0.3, -0.2, 0.1])
        assert report.gradient_error == pytest.approx(0.1 / 1.1, rel=1e-4)
        assert not report.passed()

    def test_frozen_dofs_are_skipped(self):
        def broken_last(x):
            e, g, h = _quadratic(x)
            g = g.copy()
            g[2] += 1.0
            return e, g, h

        report = fd_check(broken_last, [0.3, -0.2, 0.1], frozen=[2])
        assert report.gradient_error < 1e-7

    def test_hessian_from_energy(self):
        report = fd_check(_quadratic, [0.3, -0.2, 0.1], hessian_from="energy")
        assert report.hessian_error < 1e-6

    def test_dissipative_has_no_gradient_error(self):
        report = fd_check(_quadratic, [0.3, -0.2, 0.1], conservative=False)
        assert math.isnan(report.gradient_error)
        assert report.passed()

    def test_ungated_entries_reported_separately(self):
        def off_diagonal_wrong(x):
            e, g, h = _quadratic(x)
            h = h.copy()
            h[0, 1] += 1.0
            return e, g, h

        gated = np.ones((3, 3), dtype=bool)
        gated[0, 1] = False
        report = fd_check(off_diagonal_wrong, [0.3, -0.2, 0.1], gated=gated)
        assert report.hessian_error < 1e-7
        assert report.ungated_error > 0.1

    def test_non_finite_energy(self):
        with pytest.raises(ValueError, match="non-finite energy or gradient"):
            fd_check(lambda x: (np.nan, x, np.eye(1)), [1.0])


class TestReports:
    def test_merge_takes_worst(self):
        reports = [FdReport("a", 1e-9, 1e-8), FdReport("a", 3e-6, 1e-9), FdReport("a", 1e-9, 2e-4)]
        merged = merge_reports("a", reports)
        assert merged.gradient_error == 3e-6
        assert merged.hessian_error == 2e-4
        assert merged.worst_sample == 2
        assert merged.samples == 3

    def test_merge_empty(self):
        with pytest.raises(ValueError, match="no samples"):
            merge_reports("a", [])

    def test_negative_error(self):
        with pytest.raises(ValueError, match="Invalid FD error"):
            FdReport("a", -1.0)

    def test_write_report(self, tmp_path):
        path = tmp_path / "fd.csv"
        write_report(path, [FdReport("stretch", 1e-9, 1e-8), FdReport("viscous")])
        with path.open(newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert [r["name"] for r in rows] == ["stretch", "viscous"]
        assert "hessian_error" in rows[0]

    def test_write_empty_report(self, tmp_path):
        with pytest.raises(ValueError, match="no records"):
            write_report(tmp_path / "x.csv", [])


class TestCheckGradients:
    @pytest.mark.parametrize("module", GRADIENT_MODULES)
    def test_module_passes(self, module):
        report = check_gradients(module, samples=3, seed=7)
        assert report.samples == 3
        assert report.passed(), f"{module}: grad {report.gradient_error:.2e} hess {report.hessian_error:.2e}"

    @pytest.mark.slow
    @pytest.mark.parametrize("module", GRADIENT_MODULES)
    def test_module_passes_many_samples(self, module):
        assert check_gradients(module, samples=100).passed()

    def test_unknown_module(self):
        with pytest.raises(ValueError, match="Invalid module"):
            check_gradients("magnetism")

    def test_rejects_zero_samples(self):
        with pytest.raises(ValueError, match="Invalid samples"):
            check_gradients("stretch", samples=0)


class TestEulerBernoulli:
    def test_rod(self):
        delta = euler_bernoulli_tip_deflection(2e10, 1200.0, 0.1, r0=1e-3)
        assert delta == pytest.approx(1200.0 * 9.8 * 0.1**4 / (2.0 * 2e10 * 1e-6))

    def test_strip(self):
        delta = euler_bernoulli_tip_deflection(2e9, 1200.0, 0.1, h=1e-3, b=0.02)
        assert delta == pytest.approx(1.5 * 1200.0 * 9.8 * 0.1**4 / (2e9 * 1e-6))

    def test_no_gravity(self):
        assert euler_bernoulli_tip_deflection(2e10, 1200.0, 0.1, gravity=0.0, r0=1e-3) == 0.0

    def test_needs_section(self):
        with pytest.raises(ValueError, match="Invalid section"):
            euler_bernoulli_tip_deflection(2e10, 1200.0, 0.1, h=1e-3)

    def test_rejects_modulus(self):
        with pytest.raises(ValueError, match="Invalid youngs"):
            euler_bernoulli_tip_deflection(0.0, 1200.0, 0.1, r0=1e-3)


class TestCantilever:
    def test_result_ratios(self):
        result = CantileverResult("rod", 2e10, simulated=1.1e-5, theory=1e-5)
        assert result.normalized == pytest.approx(1.1)
        assert result.relative_error == pytest.approx(0.1)

    def test_result_rejects_zero_theory(self):
        with pytest.raises(ValueError, match="Invalid theory deflection"):
            CantileverResult("rod", 2e10, 0.0, 0.0)

    def test_spread(self):
        results = [
            CantileverResult("hinge", 2e9, 1.0, 1.0, "a"),
            CantileverResult("hinge", 2e9, 1.3, 1.0, "b"),
            CantileverResult("midedge", 2e9, 5.0, 1.0, "a"),
        ]
        assert normalized_spread(results, "hinge") == pytest.approx(0.3)
        with pytest.raises(ValueError, match="No results"):
            normalized_spread(results, "rod")

    def test_unknown_model(self):
        with pytest.raises(ValueError, match="Invalid model"):
            validate_cantilever("beam")

    def test_check_gates_stiffest_modulus(self):
        results = [CantileverResult("rod", 2e10, 1.04, 1.0), CantileverResult("rod", 2e7, 3.0, 1.0)]
        check = cantilever_check(results)
        assert check.passed
        assert check.value == pytest.approx(0.04)
        assert check.threshold == 0.05
        assert not cantilever_check([CantileverResult("rod", 2e10, 1.06, 1.0)]).passed
        assert cantilever_check([CantileverResult("hinge", 2e9, 1.12, 1.0, "equilateral")]).passed
        with pytest.raises(ValueError, match="empty"):
            cantilever_check([])

    def test_mesh_dependence_check(self):
        results = [
            CantileverResult("hinge", 2e9, 0.9, 1.0, "a"),
            CantileverResult("hinge", 2e9, 1.3, 1.0, "b"),
            CantileverResult("midedge", 2e9, 1.0, 1.0, "a"),
            CantileverResult("midedge", 2e9, 1.1, 1.0, "b"),
        ]
        check = mesh_dependence_check(results)
        assert check.passed
        assert check.value == pytest.approx(0.1)
        assert check.threshold == pytest.approx(0.4)
        assert mesh_dependence_check(results[:2]) is None
        assert mesh_dependence_check([results[0], results[2]]) is None

    @pytest.mark.slow
    def test_rod_matches_theory(self):
        (result,) = validate_cantilever("rod", youngs=(2e10,))
        assert result.simulated > 0.0
        assert result.relative_error < 0.05

    @pytest.mark.slow
    def test_midedge_strip_sags(self):
        (result,) = validate_cantilever("midedge", youngs=(2e9,), family="right-isosceles")
        assert result.simulated > 0.0
        assert result.family == "right-isosceles"


class TestTrajectoryMetrics:
    def test_rigid_motion_has_no_deviation(self, rng):
        ref = rng.normal(size=(6, 3))
        moved = Rotation.from_rotvec([0.3, -0.2, 1.1]).apply(ref) + [1.0, 2.0, 3.0]
        assert rigid_deviation(ref, moved) < 1e-12

    def test_stretch_deviates(self):
        ref = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
        assert rigid_deviation(ref, 1.5 * ref) > 0.1

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="Must match"):
            rigid_deviation(np.zeros((3, 3)), np.zeros((2, 3)))

    def test_state_log(self, tmp_path):
        with TrajectoryWriter(tmp_path, 6) as writer:
            writer.write(0.0, np.array([0.0, 0, 0, 1, 0, 0]), np.zeros(6))
            writer.write(1.0, np.array([5.0, 0, 0, 5, 1, 0]), np.zeros(6))
        times, x = node_positions_log(writer.state_path, 2)
        assert times.tolist() == [0.0, 1.0]
        assert x.shape == (2, 2, 3)
        # rotated by 90 degrees and shifted: rigid
        assert peak_rigid_deviation(writer.state_path, 2) < 1e-12
        with pytest.raises(ValueError, match="position columns"):
            node_positions_log(writer.state_path, 5)

    def test_tracked_series(self, tmp_path):
        summary = _track(tmp_path, [0.0, 0.5, 1.0])
        t, x = tracked_series(summary, 0)
        assert x.tolist() == [0.0, 0.5, 1.0]
        assert t == pytest.approx([0.0, 0.1, 0.2])
        with pytest.raises(ValueError, match="no column 'x4'"):
            tracked_series(summary, 3)


class TestLocomotionProperties:
    def test_earthworm(self, tmp_path):
        rough = _track(tmp_path / "rough", [0.0, 1e-3, 2e-3])
        smooth = _track(tmp_path / "smooth", [0.0, 1e-5, 0.0])
        checks = earthworm_properties(rough, smooth, 0, stroke=1e-3)
        assert [c.name for c in checks] == ["earthworm-forward", "earthworm-frictionless"]
        assert all(c.passed for c in checks)

    def test_earthworm_backwards_fails(self, tmp_path):
        rough = _track(tmp_path / "rough", [0.0, -1e-3])
        smooth = _track(tmp_path / "smooth", [0.0, 0.0])
        forward, _ = earthworm_properties(rough, smooth, 0, stroke=1e-3)
        assert not forward.passed

    def test_manta_drift(self, tmp_path):
        (check,) = manta_properties(_track(tmp_path / "still", [0.2, 0.2, 0.2]), 0)
        assert check.passed
        (check,) = manta_properties(_track(tmp_path / "drift", [0.2, 0.2, 0.3]), 0)
        assert not check.passed

    def test_needs_two_frames(self, tmp_path):
        summary = _track(tmp_path / "one", [0.0])
        with pytest.raises(ValueError, match="at least two frames"):
            earthworm_properties(summary, summary, 0, stroke=1e-3)

    def test_unknown_scenario(self, tmp_path):
        with pytest.raises(ValueError, match="Invalid locomotion scenario"):
            locomotion_properties("gripper", tmp_path)

    @pytest.mark.slow
    @pytest.mark.integration
    def test_manta_stays_symmetric(self, tmp_path):
        checks = locomotion_properties("manta", tmp_path, total_time=0.02)
        assert all(c.passed for c in checks)
