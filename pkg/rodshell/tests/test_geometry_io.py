"""Tests for geometry file parsing and trajectory CSV output."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from rodshell.geometry_io import (
    GeometryParseError,
    TrajectoryWriter,
    format_geometry,
    parse_geometry,
    parse_geometry_text,
    read_summary,
    write_geometry,
)


class TestParseGeometry:
    def test_sections(self, geometry_text):
        geometry = parse_geometry_text(geometry_text)
        assert geometry.nodes.shape == (4, 3)
        assert geometry.nodes[3].tolist() == [0.01, 0.01, 0.0]
        assert geometry.edges.tolist() == [[0, 1], [1, 2]]
        assert geometry.triangles.tolist() == [[0, 1, 3]]

    def test_nodes_only(self):
        geometry = parse_geometry_text("*Nodes\n0 0 0\n1 0 0\n")
        assert geometry.edges.shape == (0, 2)
        assert geometry.triangles.shape == (0, 3)

    def test_case_and_trailing_comment(self):
        geometry = parse_geometry_text("*NODES  # positions\n0 0 0  # origin\n1 1 1\n*edges\n1 2\n")
        assert geometry.edges.tolist() == [[0, 1]]

    def test_unknown_section(self):
        with pytest.raises(GeometryParseError, match="line 1: unknown section"):
            parse_geometry_text("*Faces\n1 2 3\n")

    def test_data_before_header(self):
        with pytest.raises(GeometryParseError, match="line 2: data before any section header"):
            parse_geometry_text("# header\n0 0 0\n")

    def test_wrong_width(self):
        with pytest.raises(GeometryParseError, match="line 3: expected 3 values in nodes, got 2"):
            parse_geometry_text("*Nodes\n0 0 0\n1 0\n")

    def test_malformed(self):
        with pytest.raises(GeometryParseError, match="malformed edges record"):
            parse_geometry_text("*Nodes\n0 0 0\n1 0 0\n*Edges\n1 two\n")

    def test_no_nodes(self):
        with pytest.raises(GeometryParseError, match="no nodes"):
            parse_geometry_text("*Edges\n")

    def test_non_finite(self):
        with pytest.raises(GeometryParseError, match="line 3: non-finite coordinate"):
            parse_geometry_text("*Nodes\n0 0 0\nnan 0 0\n")

    def test_index_out_of_range(self):
        with pytest.raises(GeometryParseError, match="line 5: edges index out of range 1-2") as exc:
            parse_geometry_text("*Nodes\n0 0 0\n1 0 0\n*Edges\n0 1\n")
        assert exc.value.line == 5

    def test_error_is_value_error(self):
        with pytest.raises(ValueError):
            parse_geometry_text("")


class TestWriteGeometry:
    def test_format_is_one_based(self):
        text = format_geometry([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]], [[0, 1]])
        assert text == "*Nodes\n0.0 0.0 0.0\n1.0 0.0 0.0\n*Edges\n1 2\n"

    def test_file_reads_back(self, tmp_path):
        nodes = np.array([[0.0, 0.0, 0.0], [0.1, 0.0, 0.0], [0.05, 0.07, 0.0], [0.05, 0.2, 1e-9]])
        path = tmp_path / "body.txt"
        write_geometry(path, nodes, [[2, 3]], [[0, 1, 2]])
        geometry = parse_geometry(path)
        assert_allclose(geometry.nodes, nodes, rtol=0, atol=0)
        assert geometry.edges.tolist() == [[2, 3]]
        assert geometry.triangles.tolist() == [[0, 1, 2]]


class TestTrajectoryWriter:
    def test_headers_and_rows(self, tmp_path):
        with TrajectoryWriter(tmp_path / "run", 7, tracked_nodes=(1,), log_energy=True) as writer:
            writer.write(0.0, np.arange(7.0), np.zeros(7), energy=2.5)
            writer.write(0.1, np.arange(7.0) + 1.0, np.ones(7))
        assert writer.frames == 2

        header, rows = read_summary(writer.summary_path)
        assert header == ["time", "x2", "y2", "z2", "energy"]
        assert rows[0].tolist() == [0.0, 3.0, 4.0, 5.0, 2.5]
        assert rows[1, :4].tolist() == [0.1, 4.0, 5.0, 6.0]
        assert np.isnan(rows[1, 4])

        header, states = read_summary(writer.state_path)
        assert header[:2] == ["time", "q0"]
        assert header[-1] == "u6"
        assert states.shape == (2, 15)

    def test_rejects_wrong_width(self, tmp_path):
        with TrajectoryWriter(tmp_path, 3) as writer:
            with pytest.raises(ValueError, match="Invalid frame width"):
                writer.write(0.0, np.zeros(2), np.zeros(2))

    def test_empty_log(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("")
        with pytest.raises(ValueError, match="empty file"):
            read_summary(path)
