"""Mesh topology, spring stencils, DOF layout and the lumped mass matrix.

Indices are 0-based everywhere in this module; the 1-based file convention is handled by
``geometry_io`` and ``config``.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .config import MaterialParams
from .frames import init_reference_frames, snapshot_tau0
from .rod_energy import bend_twist_state
from .shell_energy import hinge_angle, midedge_coefficients

log = logging.getLogger("rodshell.topology")

# Triangles with a smaller area (relative to their squared longest edge) are rejected
_AREA_TOLERANCE = 1e-12


@dataclass(frozen=True)
class BendTwistStencils:
    """Every (edge, centre node, edge) combination of twist edges.

    ``nodes[k] = (prev, centre, next)``; ``signs[k]`` flips each edge so that the first
    points into the centre node and the second points out of it.
    """

    nodes: NDArray[np.int64]
    edges: NDArray[np.int64]
    signs: NDArray[np.float64]

    def __len__(self) -> int:
        return len(self.edges)


@dataclass(frozen=True, eq=False)
class MeshTopology:
    """Nodes, rod edges and (consistently oriented) triangles, plus derived connectivity."""

    node_positions: NDArray[np.float64]
    rod_edges: NDArray[np.int64]
    triangles: NDArray[np.int64]
    shell_edges: NDArray[np.int64]
    shell_edge_faces: NDArray[np.int64]
    triangle_edges: NDArray[np.int64]
    joint_nodes: NDArray[np.int64]
    augmented_edges: NDArray[np.int64]

    @property
    def n_nodes(self) -> int:
        return len(self.node_positions)

    @property
    def n_rod_edges(self) -> int:
        return len(self.rod_edges)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def n_shell_edges(self) -> int:
        return len(self.shell_edges)

    @cached_property
    def twist_edges(self) -> NDArray[np.int64]:
        """Edges that carry a twist angle: rod edges, then joint-augmented shell edges."""
        return np.concatenate([self.rod_edges, self.shell_edges[self.augmented_edges]]).reshape(-1, 2)

    @property
    def n_twist_edges(self) -> int:
        return len(self.twist_edges)

    @cached_property
    def interior_shell_edges(self) -> NDArray[np.int64]:
        return np.flatnonzero(self.shell_edge_faces[:, 1] >= 0)

    @cached_property
    def rod_nodes(self) -> NDArray[np.int64]:
        return np.unique(self.rod_edges)

    @cached_property
    def shell_nodes(self) -> NDArray[np.int64]:
        return np.unique(self.triangles)

    @cached_property
    def bend_twist_stencils(self) -> BendTwistStencils:
        edges = self.twist_edges
        incident: list[list[int]] = [[] for _ in range(self.n_nodes)]
        for e, (a, b) in enumerate(edges):
            incident[a].append(e)
            incident[b].append(e)

        rows: list[tuple[int, int, int, int, int, float, float]] = []
        for centre in range(self.n_nodes):
            around = incident[centre]
            for i in range(len(around)):
                for j in range(i + 1, len(around)):
                    ea, eb = around[i], around[j]
                    a0, a1 = edges[ea]
                    b0, b1 = edges[eb]
                    prev = a0 if a1 == centre else a1
                    nxt = b1 if b0 == centre else b0
                    sa = 1.0 if a1 == centre else -1.0
                    sb = 1.0 if b0 == centre else -1.0
                    rows.append((prev, centre, nxt, ea, eb, sa, sb))
        rows.sort(key=lambda r: (r[3], r[4]))
        if not rows:
            return BendTwistStencils(
                nodes=np.zeros((0, 3), dtype=np.int64),
                edges=np.zeros((0, 2), dtype=np.int64),
                signs=np.zeros((0, 2)),
            )
        arr = np.array(rows, dtype=float)
        return BendTwistStencils(
            nodes=arr[:, 0:3].astype(np.int64),
            edges=arr[:, 3:5].astype(np.int64),
            signs=arr[:, 5:7],
        )

    def triangle_areas(self, positions: NDArray[np.float64] | None = None) -> NDArray[np.float64]:
        x = self.node_positions if positions is None else positions
        if self.n_triangles == 0:
            return np.zeros(0)
        t = self.triangles
        return 0.5 * np.linalg.norm(np.cross(x[t[:, 1]] - x[t[:, 0]], x[t[:, 2]] - x[t[:, 0]]), axis=1)


def build_topology(
    nodes: ArrayLike,
    rod_edges: ArrayLike | None = None,
    triangles: ArrayLike | None = None,
) -> MeshTopology:
    """Validate raw geometry arrays (0-based) and derive shell edges, joints and orientation.

    Triangles are re-oriented so that neighbours traverse their shared edge in opposite
    directions; the lowest-index triangle of each connected patch keeps its input order.
    """
    x = np.asarray(nodes, dtype=float).reshape(-1, 3)
    n = len(x)
    if n == 0:
        raise ValueError("Invalid nodes: empty. Must contain at least one node.")
    if not np.all(np.isfinite(x)):
        raise ValueError("Invalid nodes: non-finite coordinate.")

    edges = np.asarray(rod_edges if rod_edges is not None else [], dtype=np.int64).reshape(-1, 2)
    tris = np.asarray(triangles if triangles is not None else [], dtype=np.int64).reshape(-1, 3).copy()

    _check_indices(edges, n, "rod edge")
    _check_indices(tris, n, "triangle")

    seen: set[tuple[int, int]] = set()
    for k, (a, b) in enumerate(edges):
        if a == b:
            raise ValueError(f"Invalid rod edge {k}: {(int(a), int(b))!r}. Endpoints must differ.")
        key = (min(a, b), max(a, b))
        if key in seen:
            raise ValueError(f"Invalid rod edge {k}: duplicate rod edge {(int(a), int(b))!r}.")
        seen.add(key)
        if np.linalg.norm(x[b] - x[a]) == 0.0:
            raise ValueError(f"Invalid rod edge {k}: zero length.")

    for k, tri in enumerate(tris):
        if len(set(tri.tolist())) != 3:
            raise ValueError(f"Invalid triangle {k}: {tri.tolist()!r}. Nodes must be distinct.")
        p0, p1, p2 = x[tri]
        area = 0.5 * np.linalg.norm(np.cross(p1 - p0, p2 - p0))
        longest = max(np.linalg.norm(p1 - p0), np.linalg.norm(p2 - p1), np.linalg.norm(p0 - p2))
        if area <= _AREA_TOLERANCE * longest**2:
            raise ValueError(f"Invalid triangle {k}: {tri.tolist()!r}. Zero-area triangle.")

    shell_edges, edge_faces = _shell_edges(tris)
    _orient_triangles(tris, shell_edges, edge_faces)
    triangle_edges = _triangle_edges(tris, shell_edges)

    joints = np.intersect1d(np.unique(edges), np.unique(tris)) if len(edges) and len(tris) else np.zeros(0, np.int64)
    if len(joints):
        touching = np.any(np.isin(tris, joints), axis=1)
        augmented = np.unique(triangle_edges[touching])
    else:
        augmented = np.zeros(0, dtype=np.int64)

    log.debug(
        "Topology: %d nodes, %d rod edges, %d triangles, %d shell edges, %d joints",
        n,
        len(edges),
        len(tris),
        len(shell_edges),
        len(joints),
    )
    return MeshTopology(
        node_positions=x,
        rod_edges=edges,
        triangles=tris,
        shell_edges=shell_edges,
        shell_edge_faces=edge_faces,
        triangle_edges=triangle_edges,
        joint_nodes=joints.astype(np.int64),
        augmented_edges=augmented.astype(np.int64),
    )


def _check_indices(arr: NDArray[np.int64], n: int, what: str) -> None:
    if arr.size and (arr.min() < 0 or arr.max() >= n):
        bad = arr[(arr < 0) | (arr >= n)][0]
        raise ValueError(f"Invalid {what} index: {int(bad)!r}. Must be in [0, {n - 1}].")


def _shell_edges(tris: NDArray[np.int64]) -> tuple[NDArray[np.int64], NDArray[np.int64]]:
    faces: dict[tuple[int, int], list[int]] = {}
    for t, tri in enumerate(tris):
        for k in range(3):
            a, b = int(tri[(k + 1) % 3]), int(tri[(k + 2) % 3])
            faces.setdefault((min(a, b), max(a, b)), []).append(t)
    keys = sorted(faces)
    edge_faces = np.full((len(keys), 2), -1, dtype=np.int64)
    for z, key in enumerate(keys):
        adj = sorted(faces[key])
        if len(adj) > 2:
            raise ValueError(f"Invalid triangles: edge {key!r} is shared by {len(adj)} triangles. Must be <= 2.")
        edge_faces[z, : len(adj)] = adj
    shell_edges = np.array(keys, dtype=np.int64).reshape(-1, 2)
    return shell_edges, edge_faces


def _traverses(tri: NDArray[np.int64], a: int, b: int) -> bool:
    """True when the triangle's cyclic order visits a then b."""
    for k in range(3):
        if tri[k] == a and tri[(k + 1) % 3] == b:
            return True
    return False


def _orient_triangles(
    tris: NDArray[np.int64], shell_edges: NDArray[np.int64], edge_faces: NDArray[np.int64]
) -> None:
    if len(tris) == 0:
        return
    neighbours: list[list[tuple[int, int]]] = [[] for _ in range(len(tris))]
    for z, (f0, f1) in enumerate(edge_faces):
        if f1 >= 0:
            neighbours[f0].append((f1, z))
            neighbours[f1].append((f0, z))
    done = np.zeros(len(tris), dtype=bool)
    conflicts = 0
    for root in range(len(tris)):
        if done[root]:
            continue
        done[root] = True
        queue = deque([root])
        while queue:
            f = queue.popleft()
            for g, z in neighbours[f]:
                a, b = shell_edges[z]
                same = _traverses(tris[f], a, b) == _traverses(tris[g], a, b)
                if not done[g]:
                    if same:
                        tris[g, [1, 2]] = tris[g, [2, 1]]
                    done[g] = True
                    queue.append(g)
                elif same:
                    conflicts += 1
    if conflicts:
        log.warning("Triangle mesh is not orientable: %d inconsistent shared edges", conflicts // 2)


def _triangle_edges(tris: NDArray[np.int64], shell_edges: NDArray[np.int64]) -> NDArray[np.int64]:
    lookup = {(int(a), int(b)): z for z, (a, b) in enumerate(shell_edges)}
    out = np.zeros(tris.shape, dtype=np.int64)
    for t, tri in enumerate(tris):
        for k in range(3):
            a, b = int(tri[(k + 1) % 3]), int(tri[(k + 2) % 3])
            out[t, k] = lookup[(min(a, b), max(a, b))]
    return out


# --- springs -----------------------------------------------------------------


@dataclass
class StretchSprings:
    """Rod edges first, then every shell edge."""

    nodes: NDArray[np.int64]
    rest_length: NDArray[np.float64]
    stiffness: NDArray[np.float64]
    is_shell: NDArray[np.bool_]

    def __len__(self) -> int:
        return len(self.nodes)


@dataclass
class BendTwistSprings:
    nodes: NDArray[np.int64]
    edges: NDArray[np.int64]
    signs: NDArray[np.float64]
    voronoi_length: NDArray[np.float64]
    kappa_bar: NDArray[np.float64]
    twist_bar: NDArray[np.float64]
    EI: NDArray[np.float64]
    GJ: NDArray[np.float64]

    def __len__(self) -> int:
        return len(self.nodes)


@dataclass
class HingeSprings:
    """Four-node hinges ``(edge min, edge max, wing, wing)``.

    The first wing belongs to the triangle that traverses the edge from min to max, so
    the sign of the angle follows the surface orientation.
    """

    nodes: NDArray[np.int64]
    shell_edge: NDArray[np.int64]
    phi_bar: NDArray[np.float64]
    kb: NDArray[np.float64]

    def __len__(self) -> int:
        return len(self.nodes)


@dataclass
class MidedgeElements:
    """One element per triangle; edge k is the one opposite node k."""

    nodes: NDArray[np.int64]
    edges: NDArray[np.int64]
    signs: NDArray[np.float64]
    rest_area: NDArray[np.float64]
    rest_edge_length: NDArray[np.float64]
    coeff_bar: NDArray[np.float64]
    shape_bar: NDArray[np.float64]
    kb: NDArray[np.float64]
    nu: float

    def __len__(self) -> int:
        return len(self.nodes)


@dataclass
class SpringSet:
    stretch: StretchSprings
    bend_twist: BendTwistSprings
    hinge: HingeSprings | None = None
    midedge: MidedgeElements | None = None
    mode: str = "hinge"


def voronoi_lengths(topology: MeshTopology) -> NDArray[np.float64]:
    """Half the summed rest length of the rod edges meeting at each node.

    End nodes get half their one edge and interior nodes the mean of their two. Junctions
    where three or more rod edges meet get half of every incident edge, the same rule.
    """
    x = topology.node_positions
    out = np.zeros(topology.n_nodes)
    if topology.n_rod_edges == 0:
        return out
    e = topology.rod_edges
    half = 0.5 * np.linalg.norm(x[e[:, 1]] - x[e[:, 0]], axis=1)
    np.add.at(out, e[:, 0], half)
    np.add.at(out, e[:, 1], half)
    return out


def nodal_lengths(topology: MeshTopology) -> NDArray[np.float64]:
    """Length weight per node: Voronoi length on rods, half the incident shell-edge length elsewhere."""
    out = voronoi_lengths(topology)
    if topology.n_shell_edges:
        x = topology.node_positions
        z = topology.shell_edges
        half = 0.5 * np.linalg.norm(x[z[:, 1]] - x[z[:, 0]], axis=1)
        shell = np.zeros(topology.n_nodes)
        np.add.at(shell, z[:, 0], half)
        np.add.at(shell, z[:, 1], half)
        on_rod = np.zeros(topology.n_nodes, dtype=bool)
        on_rod[topology.rod_nodes] = True
        out = np.where(on_rod, out, shell)
    return out


def build_springs(
    topology: MeshTopology,
    material: MaterialParams,
    mode: str = "hinge",
    theta0: NDArray[np.float64] | None = None,
) -> SpringSet:
    """Create every spring with natural quantities taken from the undeformed configuration."""
    if mode not in ("hinge", "midedge"):
        raise ValueError(f"Invalid mode: {mode!r}. Must be 'hinge' or 'midedge'.")
    x = topology.node_positions

    # stretch
    nodes = np.concatenate([topology.rod_edges, topology.shell_edges]).reshape(-1, 2)
    rest = np.linalg.norm(x[nodes[:, 1]] - x[nodes[:, 0]], axis=1)
    is_shell = np.zeros(len(nodes), dtype=bool)
    is_shell[topology.n_rod_edges :] = True
    k_rod = material.youngs_rod * math.pi * material.r0**2
    k_shell = math.sqrt(3.0) / 4.0 * material.youngs_shell * material.h * rest
    stretch = StretchSprings(
        nodes=nodes,
        rest_length=rest,
        stiffness=np.where(is_shell, k_shell, k_rod),
        is_shell=is_shell,
    )

    # bend-twist
    stencils = topology.bend_twist_stencils
    twist_len = np.linalg.norm(x[topology.twist_edges[:, 1]] - x[topology.twist_edges[:, 0]], axis=1)
    n_b = len(stencils)
    theta = np.zeros(topology.n_twist_edges) if theta0 is None else np.asarray(theta0, dtype=float)
    q0 = np.concatenate([x.ravel(), theta])
    frames = init_reference_frames(topology, q0)
    bend = BendTwistSprings(
        nodes=stencils.nodes,
        edges=stencils.edges,
        signs=stencils.signs,
        voronoi_length=0.5 * (twist_len[stencils.edges[:, 0]] + twist_len[stencils.edges[:, 1]])
        if n_b
        else np.zeros(0),
        kappa_bar=np.zeros((n_b, 2)),
        twist_bar=np.zeros(n_b),
        EI=np.full(n_b, material.youngs_rod * math.pi * material.r0**4 / 4.0),
        GJ=np.full(n_b, material.shear_modulus_rod * math.pi * material.r0**4 / 2.0),
    )
    if n_b:
        kappa, twist = bend_twist_state(bend, q0, frames, DofLayout.from_topology(topology))
        bend.kappa_bar = kappa
        bend.twist_bar = twist

    springs = SpringSet(stretch=stretch, bend_twist=bend, mode=mode)

    if mode == "hinge":
        interior = topology.interior_shell_edges
        hinge_nodes = np.zeros((len(interior), 4), dtype=np.int64)
        for row, z in enumerate(interior):
            a, b = topology.shell_edges[z]
            f0, f1 = topology.shell_edge_faces[z]
            if not _traverses(topology.triangles[f0], a, b):
                f0, f1 = f1, f0
            hinge_nodes[row] = (a, b, _opposite(topology.triangles[f0], a, b), _opposite(topology.triangles[f1], a, b))
        kb = material.hinge_stiffness_factor * material.youngs_shell * material.h**3 / 12.0
        phi = hinge_angle(*(x[hinge_nodes[:, k]] for k in range(4))) if len(interior) else np.zeros(0)
        springs.hinge = HingeSprings(
            nodes=hinge_nodes,
            shell_edge=interior.astype(np.int64),
            phi_bar=np.atleast_1d(phi).astype(float),
            kb=np.full(len(interior), kb),
        )
    elif topology.n_triangles:
        tris = topology.triangles
        tri_edges = topology.triangle_edges
        owner = topology.shell_edge_faces[tri_edges, 0]
        signs = np.where(owner == np.arange(len(tris))[:, None], 1.0, -1.0)
        edge_len = np.linalg.norm(
            x[topology.shell_edges[tri_edges, 1]] - x[topology.shell_edges[tri_edges, 0]], axis=2
        )
        area = topology.triangle_areas()
        kb = material.youngs_shell * material.h**3 / (24.0 * (1.0 - material.nu_shell**2))
        elements = MidedgeElements(
            nodes=tris,
            edges=tri_edges,
            signs=signs,
            rest_area=area,
            rest_edge_length=edge_len,
            coeff_bar=np.zeros((len(tris), 3)),
            shape_bar=np.zeros((len(tris), 3, 3)),
            kb=np.full(len(tris), kb),
            nu=material.nu_shell,
        )
        _, tau0 = snapshot_tau0(topology, x)
        coeff, tangents = midedge_coefficients(elements, x, np.zeros(topology.n_shell_edges), tau0)
        elements.coeff_bar = coeff
        elements.shape_bar = np.einsum("tk,tki,tkj->tij", coeff, tangents, tangents)
        springs.midedge = elements

    log.debug(
        "Springs: %d stretch, %d bend-twist, %d hinge, %d mid-edge",
        len(springs.stretch),
        len(springs.bend_twist),
        len(springs.hinge) if springs.hinge is not None else 0,
        len(springs.midedge) if springs.midedge is not None else 0,
    )
    return springs


def _opposite(tri: NDArray[np.int64], a: int, b: int) -> int:
    for node in tri:
        if node != a and node != b:
            return int(node)
    raise ValueError(f"Invalid triangle {tri.tolist()!r}: no node opposite edge {(a, b)!r}.")


# --- DOFs and mass -----------------------------------------------------------


@dataclass
class DofLayout:
    """Flat DOF ordering: 3N positions, then one θ per twist edge, then one ξ per shell edge."""

    n_nodes: int
    n_twist: int
    n_xi: int = 0
    free: NDArray[np.bool_] = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if self.free is None:
            self.free = np.ones(self.size, dtype=bool)
        elif len(self.free) != self.size:
            raise ValueError(f"Invalid free mask length: {len(self.free)!r}. Must be {self.size}.")

    @classmethod
    def from_topology(cls, topology: MeshTopology, mode: str = "hinge") -> DofLayout:
        n_xi = topology.n_shell_edges if mode == "midedge" else 0
        return cls(n_nodes=topology.n_nodes, n_twist=topology.n_twist_edges, n_xi=n_xi)

    @property
    def size(self) -> int:
        return 3 * self.n_nodes + self.n_twist + self.n_xi

    @property
    def theta_offset(self) -> int:
        return 3 * self.n_nodes

    @property
    def xi_offset(self) -> int:
        return 3 * self.n_nodes + self.n_twist

    def node_dofs(self, nodes: ArrayLike) -> NDArray[np.int64]:
        """Position indices, shape ``(..., 3)``."""
        return 3 * np.asarray(nodes, dtype=np.int64)[..., None] + np.arange(3)

    def theta_dofs(self, edges: ArrayLike) -> NDArray[np.int64]:
        return self.theta_offset + np.asarray(edges, dtype=np.int64)

    def xi_dofs(self, shell_edges: ArrayLike) -> NDArray[np.int64]:
        return self.xi_offset + np.asarray(shell_edges, dtype=np.int64)

    @property
    def free_indices(self) -> NDArray[np.int64]:
        return np.flatnonzero(self.free)

    @property
    def fixed_indices(self) -> NDArray[np.int64]:
        return np.flatnonzero(~self.free)

    def with_fixed(self, indices: ArrayLike) -> DofLayout:
        free = self.free.copy()
        free[np.asarray(indices, dtype=np.int64)] = False
        return replace(self, free=free)


@dataclass
class LumpedMass:
    """Diagonal mass over the DOF layout, plus the point masses added on top of it."""

    values: NDArray[np.float64]
    point_masses: NDArray[np.float64]

    def __len__(self) -> int:
        return len(self.values)

    def add_point_mass(self, node: int, mass: float) -> None:
        if mass <= 0:
            raise ValueError(f"Invalid point mass: {mass!r}. Must be > 0.")
        if not 0 <= node < len(self.point_masses):
            raise ValueError(f"Invalid node index: {node!r}. Must be in [0, {len(self.point_masses) - 1}].")
        self.values[3 * node : 3 * node + 3] += mass
        self.point_masses[node] += mass

    @property
    def nodal(self) -> NDArray[np.float64]:
        """Translational mass per node."""
        return self.values[0 : 3 * len(self.point_masses) : 3]


def lumped_mass(topology: MeshTopology, springs: SpringSet, material: MaterialParams) -> LumpedMass:
    """Distribute rod-edge and triangle masses onto nodes; give θ and ξ rotational inertia."""
    n = topology.n_nodes
    if n == 0 or (topology.n_rod_edges == 0 and topology.n_triangles == 0):
        raise ValueError("Invalid topology: no rod edges or triangles to carry mass.")
    x = topology.node_positions
    r0, h = material.r0, material.h
    node_mass = np.zeros(n)

    rod_len = springs.stretch.rest_length[: topology.n_rod_edges]
    rod_mass = material.rho_rod * math.pi * r0**2 * rod_len
    np.add.at(node_mass, topology.rod_edges[:, 0], 0.5 * rod_mass)
    np.add.at(node_mass, topology.rod_edges[:, 1], 0.5 * rod_mass)

    tri_mass = material.rho_shell * h * topology.triangle_areas()
    for k in range(3 if len(tri_mass) else 0):
        np.add.at(node_mass, topology.triangles[:, k], tri_mass / 3.0)

    # θ: cylinder polar inertia, rod-like for joint-augmented shell edges too
    tw = topology.twist_edges
    twist_len = np.linalg.norm(x[tw[:, 1]] - x[tw[:, 0]], axis=1)
    theta_inertia = material.rho_rod * math.pi * r0**2 * twist_len * r0**2 / 2.0

    n_xi = topology.n_shell_edges if springs.mode == "midedge" else 0
    xi_inertia = np.zeros(n_xi)
    if n_xi:
        faces = topology.shell_edge_faces
        both = faces[:, 1] >= 0
        other = tri_mass[np.maximum(faces[:, 1], 0)]
        avg = np.where(both, 0.5 * (tri_mass[faces[:, 0]] + other), tri_mass[faces[:, 0]])
        xi_inertia = avg * h**2 / 12.0

    if np.any(node_mass <= 0):
        orphan = int(np.flatnonzero(node_mass <= 0)[0])
        raise ValueError(f"Invalid topology: node {orphan} belongs to no rod edge or triangle.")
    values = np.concatenate([np.repeat(node_mass, 3), theta_inertia, xi_inertia])
    return LumpedMass(values=values, point_masses=np.zeros(n))
