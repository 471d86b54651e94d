"""External forces: gravity with buoyancy, floor, viscous damping, RFT, drag, spheres and custom loads.

Each force comes back as an ``EnergyContribution`` whose gradient is the negated force and
whose Hessian is the negated force Jacobian. Dissipative forces carry zero energy. Velocities
are backward differences ``(x − x_prev)/dt``, so every dissipative Jacobian includes ``I/dt``.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Union

import numpy as np
import scipy.sparse as sp
from numpy.typing import ArrayLike, NDArray

from .contact import (
    ContactKinematics,
    contact_edges,
    contact_normal,
    floor_penalty,
    friction_forces,
    imc_penalty,
    penalty_forces,
)
from .frames import seed_director
from .rod_energy import EnergyContribution, _dot, _outer, _skew
from .topology import nodal_lengths

if TYPE_CHECKING:
    from .config import EnvironmentParams, FloorParams, MaterialParams, SphereObstacle
    from .topology import LumpedMass, MeshTopology

log = logging.getLogger("rodshell.environment")

# Floor nodes further than this many 1/K1 above the floor exert no force worth assembling
_FLOOR_REACH = 40.0

CustomForceJacobian = Union[NDArray[np.float64], sp.spmatrix, None]
CustomForceResult = Union[NDArray[np.float64], tuple[NDArray[np.float64], CustomForceJacobian]]
CustomForce = Callable[[NDArray[np.float64], NDArray[np.float64], float], CustomForceResult]


def _node_indices(nodes: NDArray[np.int64]) -> NDArray[np.int64]:
    return (3 * nodes[..., None] + np.arange(3)).reshape(len(nodes), -1)


def _positions(q: NDArray[np.float64], n_nodes: int) -> NDArray[np.float64]:
    return q[: 3 * n_nodes].reshape(n_nodes, 3)


def _force_contribution(
    nodes: NDArray[np.int64],
    force: NDArray[np.float64],
    jacobian: NDArray[np.float64] | None,
    energy: NDArray[np.float64] | None = None,
) -> EnergyContribution:
    return EnergyContribution(
        energy=np.zeros(len(nodes)) if energy is None else energy,
        gradient=-force,
        hessian=None if jacobian is None else -jacobian,
        indices=_node_indices(nodes),
    )


# --- gravity -----------------------------------------------------------------


def buoyancy_scale(rho: float, rho_medium: float) -> float:
    """``(ρ − ρ_med)/ρ``: the fraction of weight left after buoyancy."""
    if rho <= 0:
        raise ValueError(f"Invalid density: {rho!r}. Must be > 0.")
    return (rho - rho_medium) / rho


def gravity_buoyancy(mass: ArrayLike, rho: float, rho_medium: float, gravity: ArrayLike) -> NDArray[np.float64]:
    """Per-node force ``Mᵢ g (ρ − ρ_med)/ρ``, shape ``(N, 3)``."""
    m = np.asarray(mass, dtype=float)
    return m[:, None] * np.asarray(gravity, dtype=float) * buoyancy_scale(rho, rho_medium)


def nodal_weight(
    topology: MeshTopology, material: MaterialParams, env: EnvironmentParams, mass: LumpedMass
) -> NDArray[np.float64]:
    """Buoyant weight per node: rods and shells use their own densities, point masses are dense."""
    x = topology.node_positions
    force = np.zeros((topology.n_nodes, 3))
    g = np.asarray(env.gravity)
    if topology.n_rod_edges:
        e = topology.rod_edges
        rod_mass = material.rho_rod * math.pi * material.r0**2 * np.linalg.norm(x[e[:, 1]] - x[e[:, 0]], axis=1)
        half = np.zeros(topology.n_nodes)
        np.add.at(half, e[:, 0], 0.5 * rod_mass)
        np.add.at(half, e[:, 1], 0.5 * rod_mass)
        force += gravity_buoyancy(half, material.rho_rod, env.rho_medium, g)
    if topology.n_triangles:
        tri_mass = material.rho_shell * material.h * topology.triangle_areas() / 3.0
        third = np.zeros(topology.n_nodes)
        for k in range(3):
            np.add.at(third, topology.triangles[:, k], tri_mass)
        force += gravity_buoyancy(third, material.rho_shell, env.rho_medium, g)
    force += mass.point_masses[:, None] * g
    return force


def gravity_contribution(
    weight: NDArray[np.float64], q: NDArray[np.float64], scale: float = 1.0, hessian: bool = True
) -> EnergyContribution:
    """Constant nodal loads, with potential ``−F·x`` so energy accounting includes them."""
    n = len(weight)
    nodes = np.arange(n)
    force = scale * weight
    energy = -_dot(force, _positions(q, n))
    return _force_contribution(nodes, force, np.zeros((n, 3, 3)) if hessian else None, energy)


# --- floor -------------------------------------------------------------------


def node_radii(topology: MeshTopology, material: MaterialParams) -> NDArray[np.float64]:
    """``r0`` for nodes on a rod edge, ``h/2`` for the rest."""
    radii = np.full(topology.n_nodes, 0.5 * material.h)
    radii[topology.rod_nodes] = material.r0
    return radii


def floor_gap(x: NDArray[np.float64], radii: NDArray[np.float64], floor: FloorParams) -> NDArray[np.float64]:
    normal = np.asarray(floor.normal)
    return (x - floor.height * normal) @ normal - radii


def _floor_kinematics(
    x: NDArray[np.float64], u: NDArray[np.float64], gap: NDArray[np.float64], floor: FloorParams
) -> ContactKinematics:
    n = len(x)
    return ContactKinematics(
        positions=x[:, None, :],
        velocities=u[:, None, :],
        weights=np.ones((n, 1)),
        dweights=np.zeros((n, 1, 3)),
        normal=np.tile(np.asarray(floor.normal), (n, 1)),
        dnormal=np.zeros((n, 3, 3)),
        distance=gap,
    )


def floor_contact(
    gap: ArrayLike, floor: FloorParams
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Repulsive force magnitude and its derivative with respect to ``Δ`` for floor gaps ``Δ``."""
    _, d1, d2 = floor_penalty(np.asarray(gap, dtype=float), floor.k1)
    return -floor.stiffness * d1, -floor.stiffness * d2


def floor_contributions(
    topology: MeshTopology,
    material: MaterialParams,
    floor: FloorParams,
    q: NDArray[np.float64],
    q_prev: NDArray[np.float64],
    dt: float,
    scale: float = 1.0,
    hessian: bool = True,
) -> tuple[EnergyContribution, EnergyContribution]:
    """Floor contact and floor friction for every node near the floor."""
    x = _positions(q, topology.n_nodes)
    gap = floor_gap(x, node_radii(topology, material), floor)
    near = np.flatnonzero(gap * floor.k1 < _FLOOR_REACH)
    if len(near) == 0:
        return EnergyContribution.empty(3), EnergyContribution.empty(3)
    u = (x[near] - _positions(q_prev, topology.n_nodes)[near]) / dt
    kin = _floor_kinematics(x[near], u, gap[near], floor)
    psi, d1, d2 = floor_penalty(gap[near], floor.k1)
    energy, force, jac = penalty_forces(kin, psi, d1, d2, scale * floor.stiffness, hessian)
    contact = _force_contribution(near, force, jac, energy)
    if floor.mu == 0.0:
        return contact, EnergyContribution.empty(3)
    friction = floor_friction(kin, scale * floor.stiffness, d1, d2, floor, dt, hessian)
    return contact, _force_contribution(near, *friction)


def floor_friction(
    kin: ContactKinematics,
    stiffness: float,
    d1: NDArray[np.float64],
    d2: NDArray[np.float64],
    floor: FloorParams,
    dt: float,
    hessian: bool = True,
) -> tuple[NDArray[np.float64], NDArray[np.float64] | None]:
    """Smoothed Coulomb friction opposing each node's tangential velocity."""
    fn = -stiffness * d1
    dfn = -stiffness * d2[:, None] * kin.distance_gradient()
    return friction_forces(kin, fn, dfn, floor.mu, floor.k2, dt, hessian)


# --- viscous / RFT / drag ------------------------------------------------------


def viscous_damping(
    lengths: NDArray[np.float64],
    viscosity: float,
    q: NDArray[np.float64],
    q_prev: NDArray[np.float64],
    dt: float,
    hessian: bool = True,
) -> EnergyContribution:
    """``F = −η uᵢ Δlᵢ`` with ``J = −(η/Δt) Δlᵢ I``."""
    n = len(lengths)
    u = (_positions(q, n) - _positions(q_prev, n)) / dt
    force = -viscosity * lengths[:, None] * u
    jac = None
    if hessian:
        jac = -(viscosity / dt) * lengths[:, None, None] * np.eye(3)[None]
    return _force_contribution(np.arange(n), force, jac)


def rft_force(
    topology: MeshTopology,
    ct: float,
    cn: float,
    q: NDArray[np.float64],
    q_prev: NDArray[np.float64],
    dt: float,
    hessian: bool = True,
) -> EnergyContribution:
    """Resistive-force-theory drag on rod nodes, one six-DOF block per rod edge.

    Each edge adds ``−(l̄/2)[(C_t − C_n) ê êᵀ + C_n I] u`` to both of its nodes, with ``ê``
    the current edge direction and ``l̄`` the natural edge length.
    """
    if topology.n_rod_edges == 0:
        return EnergyContribution.empty(6)
    e = topology.rod_edges
    x0 = topology.node_positions
    half = 0.5 * np.linalg.norm(x0[e[:, 1]] - x0[e[:, 0]], axis=1)
    x = _positions(q, topology.n_nodes)
    u = (x - _positions(q_prev, topology.n_nodes)) / dt
    vec = x[e[:, 1]] - x[e[:, 0]]
    length = np.linalg.norm(vec, axis=1)
    if np.any(length <= 0.0):
        raise ValueError(f"Invalid rod edge {int(np.flatnonzero(length <= 0.0)[0])}: zero length in RFT.")
    t = vec / length[:, None]
    resist = (ct - cn) * _outer(t, t) + cn * np.eye(3)[None]
    ua, ub = u[e[:, 0]], u[e[:, 1]]
    fa = -half[:, None] * np.einsum("bij,bj->bi", resist, ua)
    fb = -half[:, None] * np.einsum("bij,bj->bi", resist, ub)
    force = np.concatenate([fa, fb], axis=1)
    jac = None
    if hessian:
        proj = (np.eye(3)[None] - _outer(t, t)) / length[:, None, None]

        def direction_term(w: NDArray[np.float64]) -> NDArray[np.float64]:
            # ∂[(ê·w) ê]/∂x_b for fixed w
            coupling = _dot(t, w)[:, None, None] * np.eye(3)[None] + _outer(t, w)
            return (ct - cn) * np.einsum("bij,bjk->bik", coupling, proj)

        h = half[:, None, None]
        ga, gb = direction_term(ua), direction_term(ub)
        jac = np.zeros((len(e), 6, 6))
        jac[:, 0:3, 0:3] = -h * (resist / dt - ga)
        jac[:, 0:3, 3:6] = -h * ga
        jac[:, 3:6, 0:3] = h * gb
        jac[:, 3:6, 3:6] = -h * (resist / dt + gb)
    return _force_contribution(e, force, jac)


def aero_drag(
    topology: MeshTopology,
    rho_medium: float,
    cd: float,
    q: NDArray[np.float64],
    q_prev: NDArray[np.float64],
    dt: float,
    hessian: bool = True,
) -> EnergyContribution:
    """Quadratic pressure drag on shell nodes along each incident face normal, nine DOFs per triangle."""
    if topology.n_triangles == 0:
        return EnergyContribution.empty(9)
    tri = topology.triangles
    coeff = rho_medium * cd * topology.triangle_areas() / 6.0
    x = _positions(q, topology.n_nodes)
    u = (x - _positions(q_prev, topology.n_nodes)) / dt
    p = x[tri]
    e1, e2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
    n = np.cross(e1, e2)
    norm = np.linalg.norm(n, axis=1)
    if np.any(norm <= 0.0):
        raise ValueError(f"Invalid triangle {int(np.flatnonzero(norm <= 0.0)[0])}: degenerate in drag.")
    nhat = n / norm[:, None]
    ut = u[tri]
    un = np.einsum("bki,bi->bk", ut, nhat)
    mag = coeff[:, None] * np.abs(un) * un
    force = (-mag[:, :, None] * nhat[:, None, :]).reshape(-1, 9)
    jac = None
    if hessian:
        # ∂n/∂x_k for the three nodes: [x2 − x1]×, −[e2]×, [e1]×
        dn = np.stack([_skew(p[:, 2] - p[:, 1]), -_skew(e2), _skew(e1)], axis=1)
        proj = (np.eye(3)[None] - _outer(nhat, nhat)) / norm[:, None, None]
        dnhat = np.einsum("bij,bkjl->bkil", proj, dn)  # (T, node k, 3, 3)
        slope = 2.0 * coeff[:, None] * np.abs(un)
        # ∂(uᵢ·n̂)/∂x_k = δᵢₖ n̂ᵀ/dt + uᵢᵀ ∂n̂/∂x_k
        dun = np.einsum("bij,bkjl->bikl", ut, dnhat)
        dun += np.eye(3)[None, :, :, None] * nhat[:, None, None, :] / dt
        jac = -(
            slope[:, :, None, None, None] * nhat[:, None, :, None, None] * dun[:, :, None, :, :]
            + mag[:, :, None, None, None] * dnhat[:, None, :, :, :].transpose(0, 1, 3, 2, 4)
        )
        jac = jac.reshape(-1, 9, 9)
    return _force_contribution(tri, force, jac)


# --- spheres -----------------------------------------------------------------


def _sphere_kinematics(
    x: NDArray[np.float64], u: NDArray[np.float64], center: NDArray[np.float64]
) -> ContactKinematics:
    """Kinematics of segments ``x (B, 2, 3)`` against a fixed point."""
    b = len(x)
    d = x[:, 1] - x[:, 0]
    dd = _dot(d, d)
    t = np.clip(_dot(center - x[:, 0], d) / dd, 0.0, 1.0)
    v = x[:, 0] + t[:, None] * d - center
    dist = np.linalg.norm(v, axis=1)
    nhat, inv_dist = contact_normal(v, dist, seed_director(d / np.sqrt(dd)[:, None]))
    weights = np.stack([1.0 - t, t], axis=1)
    a = np.einsum("bi,jk->bjik", weights, np.eye(3)).reshape(b, 3, 6)
    dv_fixed = np.concatenate([-v, v], axis=1)
    dt = -(np.einsum("bi,bij->bj", d, a) + dv_fixed) / dd[:, None]
    dt = np.where(((t > 0.0) & (t < 1.0))[:, None], dt, 0.0)
    dweights = np.stack([-dt, dt], axis=1)
    dv = a + np.einsum("bij,bik->bjk", x, dweights)
    dn = np.einsum("bij,bjk->bik", np.eye(3)[None] - _outer(nhat, nhat), dv) * inv_dist[:, None, None]
    return ContactKinematics(
        positions=x, velocities=u, weights=weights, dweights=dweights, normal=nhat, dnormal=dn, distance=dist
    )


def sphere_obstacle(
    topology: MeshTopology,
    material: MaterialParams,
    obstacle: SphereObstacle,
    q: NDArray[np.float64],
    q_prev: NDArray[np.float64],
    dt: float,
    hessian: bool = True,
) -> tuple[EnergyContribution, EnergyContribution]:
    """IMC-form penalty and friction between every edge and a fixed sphere."""
    edges, radii = contact_edges(topology, material)
    if len(edges) == 0:
        return EnergyContribution.empty(6), EnergyContribution.empty(6)
    x = _positions(q, topology.n_nodes)
    center = np.asarray(obstacle.center)
    reach = obstacle.radius + radii + obstacle.delta
    a, b = x[edges[:, 0]], x[edges[:, 1]]
    d = b - a
    t = np.clip(_dot(center - a, d) / _dot(d, d), 0.0, 1.0)
    dist = np.linalg.norm(a + t[:, None] * d - center, axis=1)
    active = np.flatnonzero(dist < reach)
    if len(active) == 0:
        return EnergyContribution.empty(6), EnergyContribution.empty(6)
    nodes = edges[active]
    u = (x[nodes] - _positions(q_prev, topology.n_nodes)[nodes]) / dt
    kin = _sphere_kinematics(x[nodes], u, center)
    psi, d1, d2 = imc_penalty(kin.distance - obstacle.radius - radii[active], obstacle.delta, obstacle.k1)
    energy, force, jac = penalty_forces(kin, psi, d1, d2, obstacle.stiffness, hessian)
    contact = _force_contribution(nodes, force, jac, energy)
    if obstacle.mu == 0.0:
        return contact, EnergyContribution.empty(6)
    fn = -obstacle.stiffness * d1
    dfn = -obstacle.stiffness * d2[:, None] * kin.distance_gradient()
    f_fr, j_fr = friction_forces(kin, fn, dfn, obstacle.mu, obstacle.k2, dt, hessian)
    return contact, _force_contribution(nodes, f_fr, j_fr)


def sphere_clearance(
    topology: MeshTopology, material: MaterialParams, obstacle: SphereObstacle, q: NDArray[np.float64]
) -> float:
    """Smallest surface-to-surface gap between any edge and the sphere."""
    edges, radii = contact_edges(topology, material)
    x = _positions(q, topology.n_nodes)
    center = np.asarray(obstacle.center)
    a, b = x[edges[:, 0]], x[edges[:, 1]]
    d = b - a
    t = np.clip(_dot(center - a, d) / _dot(d, d), 0.0, 1.0)
    dist = np.linalg.norm(a + t[:, None] * d - center, axis=1)
    return float(np.min(dist - obstacle.radius - radii))


# --- custom forces -------------------------------------------------------------


@dataclass
class CustomForceRegistry:
    """User callbacks ``(q, u, t) -> force`` or ``(force, jacobian)``, summed into F_ext."""

    n_dof: int
    _callbacks: dict[int, CustomForce] = field(default_factory=dict)
    _next_handle: int = 0

    def __len__(self) -> int:
        return len(self._callbacks)

    def register(self, callback: CustomForce, q: ArrayLike | None = None, u: ArrayLike | None = None) -> int:
        """Probe the callback once at ``(q, u, 0)`` and keep it if its force has the DOF length."""
        q_probe = np.zeros(self.n_dof) if q is None else np.asarray(q, dtype=float)
        u_probe = np.zeros(self.n_dof) if u is None else np.asarray(u, dtype=float)
        force, _ = _split_result(callback(q_probe, u_probe, 0.0))
        if force.shape != (self.n_dof,):
            raise ValueError(f"Invalid custom force length: {force.shape!r}. Must be ({self.n_dof},).")
        handle = self._next_handle
        self._callbacks[handle] = callback
        self._next_handle += 1
        log.debug("Registered custom force %d", handle)
        return handle

    def remove(self, handle: int) -> None:
        if handle not in self._callbacks:
            raise KeyError(f"Unknown custom force handle: {handle!r}")
        del self._callbacks[handle]

    def evaluate(
        self, q: NDArray[np.float64], u: NDArray[np.float64], time: float, scale: float = 1.0
    ) -> tuple[NDArray[np.float64], sp.csr_matrix | None]:
        """Summed force and, when any callback supplies one, summed Jacobian ``∂F/∂q``."""
        total = np.zeros(self.n_dof)
        jac: sp.csr_matrix | None = None
        for handle, callback in self._callbacks.items():
            force, j = _split_result(callback(q, u, time))
            if force.shape != (self.n_dof,):
                raise ValueError(f"Invalid custom force {handle}: length {force.shape!r}. Must be ({self.n_dof},).")
            total += scale * force
            if j is not None:
                j = scale * sp.csr_matrix(j)
                jac = j if jac is None else jac + j
        return total, jac


def register_custom_force(registry: CustomForceRegistry, callback: CustomForce, **probe: ArrayLike) -> int:
    return registry.register(callback, **probe)


def _split_result(result: CustomForceResult) -> tuple[NDArray[np.float64], NDArray[np.float64] | sp.spmatrix | None]:
    if isinstance(result, tuple):
        force, jac = result
        return np.asarray(force, dtype=float), jac
    return np.asarray(result, dtype=float), None


def constant_nodal_force(node: int, force: ArrayLike, n_dof: int) -> CustomForce:
    """A callback applying a fixed force vector to one node."""
    vec = np.asarray(force, dtype=float)
    if vec.shape != (3,):
        raise ValueError(f"Invalid nodal force: {force!r}. Must be a 3-vector.")
    if not 0 <= 3 * node + 2 < n_dof:
        raise ValueError(f"Invalid node index: {node!r}. Outside a {n_dof}-DOF layout.")
    load = np.zeros(n_dof)
    load[3 * node : 3 * node + 3] = vec

    def apply(q: NDArray[np.float64], u: NDArray[np.float64], t: float) -> NDArray[np.float64]:
        return load.copy()

    return apply


# --- assembly ----------------------------------------------------------------


@dataclass
class EnvironmentForces:
    """Everything external to the structure that the body applies each iteration."""

    topology: MeshTopology
    material: MaterialParams
    params: EnvironmentParams
    weight: NDArray[np.float64]
    custom: CustomForceRegistry

    @classmethod
    def build(
        cls, topology: MeshTopology, material: MaterialParams, params: EnvironmentParams, mass: LumpedMass, n_dof: int
    ) -> EnvironmentForces:
        weight = np.zeros((topology.n_nodes, 3))
        if params.has_gravity:
            weight = nodal_weight(topology, material, params, mass)
        return cls(topology, material, params, weight, CustomForceRegistry(n_dof))

    def contributions(
        self,
        q: NDArray[np.float64],
        q_prev: NDArray[np.float64],
        dt: float,
        load_scale: float = 1.0,
        hessian: bool = True,
    ) -> dict[str, EnergyContribution]:
        """Per-force contributions; ``load_scale`` ramps gravity and the floor for continuation."""
        p = self.params
        out: dict[str, EnergyContribution] = {}
        if p.has_gravity:
            out["gravity"] = gravity_contribution(self.weight, q, load_scale, hessian)
        if p.floor.enabled:
            out["floor"], out["floor_friction"] = floor_contributions(
                self.topology, self.material, p.floor, q, q_prev, dt, load_scale, hessian
            )
        if p.viscosity > 0:
            out["viscous"] = viscous_damping(nodal_lengths(self.topology), p.viscosity, q, q_prev, dt, hessian)
        if p.has_rft:
            out["rft"] = rft_force(self.topology, p.rft_ct, p.rft_cn, q, q_prev, dt, hessian)
        if p.drag_cd > 0 and p.rho_medium > 0:
            out["drag"] = aero_drag(self.topology, p.rho_medium, p.drag_cd, q, q_prev, dt, hessian)
        for k, obstacle in enumerate(p.obstacles):
            out[f"sphere{k}"], out[f"sphere{k}_friction"] = sphere_obstacle(
                self.topology, self.material, obstacle, q, q_prev, dt, hessian
            )
        return out
