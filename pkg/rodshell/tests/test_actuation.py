"""Tests for actuation schedules, waveforms and CSV schedule files."""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from rodshell.actuation import (
    ActuationSchedule,
    Waveform,
    apply_actuation,
    evaluate_schedule,
    parse_selector,
    read_schedule_csv,
    write_schedule_csv,
)


class TestWaveform:
    def test_sine(self):
        wave = Waveform(base=0.1, amplitude=2.0, frequency=0.25)
        assert float(wave(1.0)) == pytest.approx(2.1)

    def test_per_spring_phase(self):
        wave = Waveform(amplitude=1.0, frequency=1.0, phase=np.array([0.0, math.pi / 2]))
        assert_allclose(wave(0.0), [0.0, 1.0], atol=1e-15)

    def test_smoothstep_ramp(self):
        wave = Waveform(ramp_time=2.0)
        assert wave.ramp(0.0) == 0.0
        assert wave.ramp(1.0) == pytest.approx(0.5)
        assert wave.ramp(5.0) == 1.0

    def test_no_ramp(self):
        assert Waveform().ramp(0.0) == 1.0

    def test_rejects_negative_frequency(self):
        with pytest.raises(ValueError, match="Invalid frequency"):
            Waveform(frequency=-1.0)


class TestSchedule:
    def test_interpolates_and_clamps(self):
        schedule = ActuationSchedule("kappa1", [0, 1], times=[0.0, 1.0], values=[0.0, 2.0])
        assert evaluate_schedule(schedule, 0.25).tolist() == [0.5, 0.5]
        assert evaluate_schedule(schedule, -1.0).tolist() == [0.0, 0.0]
        assert evaluate_schedule(schedule, 3.0).tolist() == [2.0, 2.0]

    def test_per_spring_columns(self):
        schedule = ActuationSchedule(
            "twist", [2, 5], times=[0.0, 1.0], values=[[0.0, 1.0], [1.0, 3.0]]
        )
        assert evaluate_schedule(schedule, 0.5).tolist() == [0.5, 2.0]

    def test_waveform_broadcast(self):
        schedule = ActuationSchedule("phi", [0, 1, 2], waveform=Waveform(base=0.3))
        assert evaluate_schedule(schedule, 7.0).tolist() == [0.3, 0.3, 0.3]

    def test_rejects_both_sources(self):
        with pytest.raises(ValueError, match="not both"):
            ActuationSchedule("phi", [0], times=[0.0], values=[0.0], waveform=Waveform())

    def test_rejects_empty(self):
        with pytest.raises(ValueError, match="empty"):
            ActuationSchedule("phi", [0], times=[], values=[])

    def test_rejects_unsorted_times(self):
        with pytest.raises(ValueError, match="strictly increasing"):
            ActuationSchedule("phi", [0], times=[0.0, 0.0], values=[1.0, 2.0])

    def test_rejects_length_mismatch(self):
        with pytest.raises(ValueError, match="2 times, 3 values"):
            ActuationSchedule("phi", [0], times=[0.0, 1.0], values=[1.0, 2.0, 3.0])

    def test_rejects_column_mismatch(self):
        with pytest.raises(ValueError, match="2 columns for 3 springs"):
            ActuationSchedule("phi", [0, 1, 2], times=[0.0], values=[[1.0, 2.0]])

    def test_rejects_nonpositive_length(self):
        with pytest.raises(ValueError, match="natural lengths must be > 0"):
            ActuationSchedule("length", [0], times=[0.0], values=[0.0])

    def test_rejects_unknown_quantity(self):
        with pytest.raises(ValueError, match="Invalid quantity"):
            ActuationSchedule("mass", [0], times=[0.0], values=[1.0])


class TestApplyActuation:
    def test_curvature_column(self, rod_springs):
        schedule = ActuationSchedule("kappa2", [1], times=[0.0, 1.0], values=[0.0, 0.4])
        apply_actuation(rod_springs, [schedule], 0.5)
        assert rod_springs.bend_twist.kappa_bar[1].tolist() == [0.0, pytest.approx(0.2)]
        assert_allclose(rod_springs.bend_twist.kappa_bar[[0, 2]], 0.0, atol=1e-14)

    def test_length(self, rod_springs):
        apply_actuation(rod_springs, [ActuationSchedule("length", [0, 3], times=[0.0], values=[0.02])], 0.0)
        assert_allclose(rod_springs.stretch.rest_length, [0.02, 0.025, 0.025, 0.02])

    def test_out_of_range(self, rod_springs):
        schedule = ActuationSchedule("twist", [3], times=[0.0], values=[1.0])
        with pytest.raises(ValueError, match="spring index out of"):
            apply_actuation(rod_springs, [schedule], 0.0)

    def test_phi_needs_hinges(self, two_triangles, material):
        from rodshell.topology import build_springs

        springs = build_springs(two_triangles, material, "midedge")
        with pytest.raises(ValueError, match="needs hinge springs"):
            apply_actuation(springs, [ActuationSchedule("phi", [0], times=[0.0], values=[0.1])], 0.0)

    def test_waveform_length_must_stay_positive(self, rod_springs):
        schedule = ActuationSchedule("length", [0], waveform=Waveform(base=-1.0))
        with pytest.raises(ValueError, match="Invalid natural length"):
            apply_actuation(rod_springs, [schedule], 0.0)


class TestSelectors:
    def test_all(self):
        assert parse_selector("All", 3).tolist() == [0, 1, 2]

    def test_single_and_range(self):
        assert parse_selector("2", 5).tolist() == [1]
        assert parse_selector("2-4", 5).tolist() == [1, 2, 3]

    def test_bad_text(self):
        with pytest.raises(ValueError, match="Must be 'all'"):
            parse_selector("first", 5)

    def test_out_of_range(self):
        with pytest.raises(ValueError, match="Must lie in 1-5"):
            parse_selector("4-6", 5)


class TestScheduleFiles:
    def test_write_then_read(self, tmp_path, rod_springs):
        path = tmp_path / "kappa.csv"
        write_schedule_csv(path, [0.0, 1.0], {"all": [0.0, 1.0], "2-3": [0.5, 0.5]})
        schedules = read_schedule_csv(path, "kappa1", rod_springs)
        assert [s.tag for s in schedules] == ["all", "2-3"]
        assert schedules[0].springs.tolist() == [0, 1, 2]
        assert schedules[1].springs.tolist() == [1, 2]
        assert evaluate_schedule(schedules[0], 0.5).tolist() == [0.5, 0.5, 0.5]

    def test_comments_skipped(self, tmp_path, rod_springs):
        path = tmp_path / "len.csv"
        path.write_text("# natural lengths\ntime,1\n\n0,0.03\n1,0.02\n")
        (schedule,) = read_schedule_csv(path, "length", rod_springs)
        assert schedule.values.tolist() == [0.03, 0.02]

    def test_header_required(self, tmp_path, rod_springs):
        path = tmp_path / "bad.csv"
        path.write_text("t,all\n0,1\n")
        with pytest.raises(ValueError, match="first column must be 'time'"):
            read_schedule_csv(path, "twist", rod_springs)

    def test_no_samples(self, tmp_path, rod_springs):
        path = tmp_path / "empty.csv"
        path.write_text("time,all\n")
        with pytest.raises(ValueError, match="no samples"):
            read_schedule_csv(path, "twist", rod_springs)
