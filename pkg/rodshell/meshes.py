"""Rod and shell mesh generators: straight and arc rods, cantilever strips, hexagons, plates.

Strip families (cantilever studies) cover ``[x0, L] × [0, b]`` in the z = 0 plane, where
``x0 < 0`` is one lattice spacing of clamp zone, so nodes with ``x <= 0`` form the clamp.
"""

from __future__ import annotations

import logging
import math

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.spatial import Delaunay

log = logging.getLogger("rodshell.meshes")

MESH_FAMILIES = ("equilateral", "random", "right-isosceles", "equilateral-aligned", "non-uniform")

_CLAMP_TOL = 1e-12


# --- rods --------------------------------------------------------------------


def rod(
    n_nodes: int, length: float, origin: ArrayLike = (0.0, 0.0, 0.0), direction: ArrayLike = (1.0, 0.0, 0.0)
) -> tuple[NDArray[np.float64], NDArray[np.int64]]:
    """A straight rod of ``n_nodes`` evenly spaced nodes."""
    if n_nodes < 2:
        raise ValueError(f"Invalid n_nodes: {n_nodes!r}. Must be >= 2.")
    if length <= 0:
        raise ValueError(f"Invalid length: {length!r}. Must be > 0.")
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    s = np.linspace(0.0, length, n_nodes)
    nodes = np.asarray(origin, dtype=float) + s[:, None] * d
    edges = np.column_stack([np.arange(n_nodes - 1), np.arange(1, n_nodes)])
    return nodes, edges


def arc_rod(
    n_nodes: int, length: float, curvature: float, origin: ArrayLike = (0.0, 0.0, 0.0)
) -> tuple[NDArray[np.float64], NDArray[np.int64]]:
    """A circular arc in the x-z plane starting along +x and curling toward +z."""
    if curvature == 0.0:
        return rod(n_nodes, length, origin)
    o = np.asarray(origin, dtype=float)
    nodes, edges = rod(n_nodes, length, o)
    angle = np.linspace(0.0, length, n_nodes) * curvature
    nodes[:, 0] = o[0] + np.sin(angle) / curvature
    nodes[:, 1] = o[1]
    nodes[:, 2] = o[2] + (1.0 - np.cos(angle)) / curvature
    return nodes, edges


# --- triangulation helpers ---------------------------------------------------


def _lift(points: NDArray[np.float64]) -> NDArray[np.float64]:
    return np.column_stack([points, np.zeros(len(points))])


def _delaunay(points: NDArray[np.float64], scale: float) -> NDArray[np.int64]:
    tris = Delaunay(points).simplices.astype(np.int64)
    p = points[tris]
    area = 0.5 * np.abs(np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]))
    tris = tris[area > 1e-10 * scale**2]
    unused = np.setdiff1d(np.arange(len(points)), np.unique(tris))
    if len(unused):
        raise ValueError(f"Invalid mesh: {len(unused)} points left out of the triangulation.")
    return tris


def _grid_triangles(nx: int, ny: int, alternate: bool = False) -> NDArray[np.int64]:
    """Split every cell of an ``(nx+1) × (ny+1)`` node grid (x-major) into two right triangles."""
    tris = []
    for i in range(nx):
        for j in range(ny):
            a, b = i * (ny + 1) + j, (i + 1) * (ny + 1) + j
            c, d = b + 1, a + 1
            if alternate and (i + j) % 2:
                tris += [(a, b, d), (b, c, d)]
            else:
                tris += [(a, b, c), (a, c, d)]
    return np.array(tris, dtype=np.int64)


def _grid_points(xs: NDArray[np.float64], ys: NDArray[np.float64]) -> NDArray[np.float64]:
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    return np.column_stack([gx.ravel(), gy.ravel()])


# --- strips ------------------------------------------------------------------


def strip_mesh(
    family: str, length: float = 0.1, width: float = 0.02, rows: int = 2, seed: int = 0
) -> tuple[NDArray[np.float64], NDArray[np.int64]]:
    """A cantilever strip meshed with one of :data:`MESH_FAMILIES`, ``rows`` elements across."""
    if family not in MESH_FAMILIES:
        raise ValueError(f"Invalid mesh family: {family!r}. Must be one of {', '.join(MESH_FAMILIES)}.")
    if rows < 1:
        raise ValueError(f"Invalid rows: {rows!r}. Must be >= 1.")
    if length <= 0 or width <= 0:
        raise ValueError(f"Invalid strip size: {(length, width)!r}. Must be > 0.")

    if family == "right-isosceles":
        d = width / rows
        nx = round(length / d)
        xs = np.linspace(-d, length, nx + 2)
        points = _grid_points(xs, np.linspace(0.0, width, rows + 1))
        tris = _grid_triangles(nx + 1, rows)
    elif family == "non-uniform":
        d = width / rows
        nx = round(length / d)
        graded = length * (np.arange(nx + 1) / nx) ** 1.6
        xs = np.concatenate([[-graded[1]], graded])
        points = _grid_points(xs, np.linspace(0.0, width, rows + 1))
        tris = _grid_triangles(nx + 1, rows)
    elif family == "random":
        d = width / rows
        nx = round(length / d)
        xs = np.linspace(-d, length, nx + 2)
        points = _grid_points(xs, np.linspace(0.0, width, rows + 1))
        rng = np.random.default_rng(seed)
        jitter = rng.uniform(-0.3 * d, 0.3 * d, size=points.shape)
        inner_x = (points[:, 0] > _CLAMP_TOL) & (points[:, 0] < length - _CLAMP_TOL)
        inner_y = (points[:, 1] > _CLAMP_TOL) & (points[:, 1] < width - _CLAMP_TOL)
        points[:, 0] += np.where(inner_x, jitter[:, 0], 0.0)
        points[:, 1] += np.where(inner_y & inner_x, jitter[:, 1], 0.0)
        tris = _delaunay(points, d)
    elif family == "equilateral":
        height = width / rows
        nx = max(1, round(length / (2.0 * height / math.sqrt(3.0))))
        a = length / nx
        pts = []
        for j in range(rows + 1):
            y = j * height
            if j % 2 == 0:
                xs = np.arange(-1, nx + 1) * a
            else:
                xs = np.concatenate([[-a], (np.arange(-1, nx) + 0.5) * a, [length]])
            pts += [(x, y) for x in xs]
        points = np.array(pts)
        tris = _delaunay(points, a)
    else:  # equilateral-aligned
        a = width / rows
        w = a * math.sqrt(3.0) / 2.0
        nx = max(1, round(length / w))
        w = length / nx
        pts = []
        for i in range(-1, nx + 1):
            x = i * w
            if i % 2 == 0:
                ys = np.arange(rows + 1) * a
            else:
                ys = np.concatenate([[0.0], (np.arange(rows) + 0.5) * a, [width]])
            pts += [(x, y) for y in ys]
        points = np.array(pts)
        tris = _delaunay(points, a)

    log.debug("Strip %s: %d nodes, %d triangles", family, len(points), len(tris))
    return _lift(points), tris


def clamp_nodes(nodes: NDArray[np.float64], x_clamp: float = 0.0) -> NDArray[np.int64]:
    """Nodes at or behind ``x_clamp``."""
    return np.flatnonzero(nodes[:, 0] <= x_clamp + _CLAMP_TOL)


def tip_nodes(nodes: NDArray[np.float64]) -> NDArray[np.int64]:
    """Nodes on the free end (largest x)."""
    return np.flatnonzero(nodes[:, 0] >= nodes[:, 0].max() - _CLAMP_TOL)


# --- plates ------------------------------------------------------------------


def hexagon(side: float = 1.0, divisions: int = 2) -> tuple[NDArray[np.float64], NDArray[np.int64]]:
    """Regular hexagon of circumradius ``side`` filled with equilateral triangles."""
    if divisions < 1:
        raise ValueError(f"Invalid divisions: {divisions!r}. Must be >= 1.")
    a = side / divisions
    pts = []
    n = divisions
    for i in range(-n, n + 1):
        for j in range(-n, n + 1):
            if abs(i + j) <= n:
                pts.append((a * (i + 0.5 * j), a * (math.sqrt(3.0) / 2.0) * j))
    points = np.array(pts)
    return _lift(points), _delaunay(points, a)


def hexagon_corners(nodes: NDArray[np.float64], side: float) -> NDArray[np.int64]:
    """The six corner nodes, ordered by angle."""
    r = np.linalg.norm(nodes[:, :2], axis=1)
    corners = np.flatnonzero(np.abs(r - side) < 1e-9 * side)
    angle = np.arctan2(nodes[corners, 1], nodes[corners, 0])
    return corners[np.argsort(angle)]


def symmetric_plate(size: float = 1.0, half_columns: int = 2) -> tuple[NDArray[np.float64], NDArray[np.int64]]:
    """Square plate ``[-size/2, size/2] × [0, size]`` on a column-aligned lattice mirrored about x = 0."""
    if half_columns < 1:
        raise ValueError(f"Invalid half_columns: {half_columns!r}. Must be >= 1.")
    w = 0.5 * size / half_columns
    a = 2.0 * w / math.sqrt(3.0)
    ny = max(1, round(size / a))
    a = size / ny
    pts = []
    for k in range(-half_columns, half_columns + 1):
        x = k * w
        if k % 2 == 0:
            ys = np.arange(ny + 1) * a
        else:
            ys = np.concatenate([[0.0], (np.arange(ny) + 0.5) * a, [size]])
        pts += [(x, y) for y in ys]
    points = np.array(pts)
    return _lift(points), _delaunay(points, a)
