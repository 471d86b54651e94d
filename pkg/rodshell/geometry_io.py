"""Geometry text files and trajectory CSV output.

Geometry files hold ``*Nodes``, ``*Edges`` and ``*Triangles`` sections, one whitespace- or
comma-separated record per line, ``#`` comments, 1-based indices::

    *Nodes
    0.0 0.0 0.0
    0.01 0.0 0.0
    *Edges
    1 2
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO

import numpy as np
from numpy.typing import ArrayLike, NDArray

log = logging.getLogger("rodshell.geometry_io")

_SECTIONS = {"*nodes": ("nodes", 3, float), "*edges": ("edges", 2, int), "*triangles": ("triangles", 3, int)}


class GeometryParseError(ValueError):
    """A geometry file line could not be read; ``line`` is 1-based."""

    def __init__(self, message: str, line: int | None = None) -> None:
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


@dataclass
class GeometryArrays:
    """Raw geometry with 0-based connectivity."""

    nodes: NDArray[np.float64]
    edges: NDArray[np.int64] = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int64))
    triangles: NDArray[np.int64] = field(default_factory=lambda: np.zeros((0, 3), dtype=np.int64))


def parse_geometry_text(text: str) -> GeometryArrays:
    rows: dict[str, list[list[float]]] = {"nodes": [], "edges": [], "triangles": []}
    lines: dict[str, list[int]] = {"nodes": [], "edges": [], "triangles": []}
    section: str | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("*"):
            key = line.split()[0].lower()
            if key not in _SECTIONS:
                raise GeometryParseError(f"unknown section {line!r}", lineno)
            section = key
            continue
        if section is None:
            raise GeometryParseError("data before any section header", lineno)
        name, width, cast = _SECTIONS[section]
        parts = line.replace(",", " ").split()
        if len(parts) != width:
            raise GeometryParseError(f"expected {width} values in {name}, got {len(parts)}", lineno)
        try:
            values = [cast(p) for p in parts]
        except ValueError:
            raise GeometryParseError(f"malformed {name} record {line!r}", lineno) from None
        rows[name].append(values)
        lines[name].append(lineno)

    if not rows["nodes"]:
        raise GeometryParseError("no nodes: a *Nodes section with at least one node is required")
    nodes = np.array(rows["nodes"], dtype=float)
    if not np.all(np.isfinite(nodes)):
        bad = int(np.flatnonzero(~np.all(np.isfinite(nodes), axis=1))[0])
        raise GeometryParseError("non-finite coordinate", lines["nodes"][bad])
    n = len(nodes)
    conn = {}
    for name, width in (("edges", 2), ("triangles", 3)):
        arr = np.array(rows[name], dtype=np.int64).reshape(-1, width)
        out_of_range = np.flatnonzero(np.any((arr < 1) | (arr > n), axis=1))
        if len(out_of_range):
            row = int(out_of_range[0])
            raise GeometryParseError(
                f"{name} index out of range 1-{n} in {arr[row].tolist()!r} (indices are 1-based)", lines[name][row]
            )
        conn[name] = arr - 1
    return GeometryArrays(nodes=nodes, edges=conn["edges"], triangles=conn["triangles"])


def parse_geometry(path: str | Path) -> GeometryArrays:
    """Read a geometry file into ``(N×3, E×2, T×3)`` arrays with 0-based indices."""
    path = Path(path)
    geometry = parse_geometry_text(path.read_text(encoding="utf-8"))
    log.info(
        "Read %s: %d nodes, %d edges, %d triangles",
        path,
        len(geometry.nodes),
        len(geometry.edges),
        len(geometry.triangles),
    )
    return geometry


def format_geometry(nodes: ArrayLike, edges: ArrayLike | None = None, triangles: ArrayLike | None = None) -> str:
    lines = ["*Nodes"]
    lines += [" ".join(repr(float(c)) for c in row) for row in np.asarray(nodes, dtype=float).reshape(-1, 3)]
    for header, arr, width in (("*Edges", edges, 2), ("*Triangles", triangles, 3)):
        conn = np.zeros((0, width), dtype=np.int64)
        if arr is not None:
            conn = np.asarray(arr, dtype=np.int64).reshape(-1, width)
        if len(conn):
            lines.append(header)
            lines += [" ".join(str(int(i) + 1) for i in row) for row in conn]
    return "\n".join(lines) + "\n"


def write_geometry(
    path: str | Path, nodes: ArrayLike, edges: ArrayLike | None = None, triangles: ArrayLike | None = None
) -> None:
    """Write 0-based arrays as a geometry file that :func:`parse_geometry` reads back unchanged."""
    Path(path).write_text(format_geometry(nodes, edges, triangles), encoding="utf-8")


# --- trajectories ------------------------------------------------------------


class TrajectoryWriter:
    """Per-frame state CSV (time, q, u) and tracked-node summary CSV (time, x, y, z per node).

    Files are opened on construction and must be closed; use as a context manager.
    """

    def __init__(
        self,
        out_dir: str | Path,
        n_dof: int,
        tracked_nodes: tuple[int, ...] = (),
        log_energy: bool = False,
    ) -> None:
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.n_dof = n_dof
        self.tracked_nodes = tuple(tracked_nodes)
        self.log_energy = log_energy
        self.state_path = self.out_dir / "states.csv"
        self.summary_path = self.out_dir / "summary.csv"
        self._state_fh: IO[str] = self.state_path.open("w", newline="")
        self._summary_fh: IO[str] = self.summary_path.open("w", newline="")
        self._state = csv.writer(self._state_fh)
        self._summary = csv.writer(self._summary_fh)
        self._state.writerow(["time", *(f"q{i}" for i in range(n_dof)), *(f"u{i}" for i in range(n_dof))])
        header = ["time"]
        for node in self.tracked_nodes:
            header += [f"x{node + 1}", f"y{node + 1}", f"z{node + 1}"]
        if log_energy:
            header.append("energy")
        self._summary.writerow(header)
        self.frames = 0

    def write(self, time: float, q: NDArray[np.float64], u: NDArray[np.float64], energy: float | None = None) -> None:
        if len(q) != self.n_dof or len(u) != self.n_dof:
            raise ValueError(f"Invalid frame width: {len(q)}/{len(u)}. Must be {self.n_dof}.")
        self._state.writerow([repr(float(time)), *map(repr, q.tolist()), *map(repr, u.tolist())])
        row = [repr(float(time))]
        for node in self.tracked_nodes:
            row += [repr(float(v)) for v in q[3 * node : 3 * node + 3]]
        if self.log_energy:
            row.append(repr(float(energy)) if energy is not None else "")
        self._summary.writerow(row)
        self.frames += 1

    def close(self) -> None:
        self._state_fh.close()
        self._summary_fh.close()
        log.info("Wrote %d frames to %s", self.frames, self.out_dir)

    def __enter__(self) -> TrajectoryWriter:
        return self

    def __exit__(self, *exc: object) -> None:
        self.close()


def read_summary(path: str | Path) -> tuple[list[str], NDArray[np.float64]]:
    """Header and numeric rows of a summary (or state) CSV."""
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"Invalid log {str(path)!r}: empty file.")
        try:
            rows = [[float(v) if v else np.nan for v in row] for row in reader]
        except ValueError as exc:
            raise ValueError(f"Invalid log {str(path)!r}: {exc}") from None
    return header, np.array(rows, dtype=float).reshape(-1, len(header))
