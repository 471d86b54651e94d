"""Edge-edge contact: minimum distance, broadphase, IMC penalty energy and smoothed friction.

Every contact (edge pair, edge against a sphere, node against the floor) is described by a
``ContactKinematics`` batch: the separation vector ``v = Σ wᵢ xᵢ + const`` with weights that
may depend on the positions. Penalty and friction forces, and their Jacobians, are written
once against that description.
"""

from __future__ import annotations

import logging
from collections.abc import Callable
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.spatial import cKDTree

from .frames import seed_director
from .rod_energy import EnergyContribution, _dot, _outer

if TYPE_CHECKING:
    from .config import ContactParams, MaterialParams
    from .topology import MeshTopology

log = logging.getLogger("rodshell.contact")

_PARALLEL_TOL = 1e-12
_STICK_SPEED = 1e-14


@dataclass(frozen=True)
class ContactPair:
    """Two edges sharing no node, with their current closest points."""

    edge_i: int
    edge_j: int
    nodes: tuple[int, int, int, int]
    distance: float
    s: float
    t: float
    diameter: float


# --- distance ----------------------------------------------------------------


def _clip01(v: NDArray[np.float64]) -> NDArray[np.float64]:
    return np.clip(v, 0.0, 1.0)


def segment_parameters(
    p0: NDArray[np.float64], p1: NDArray[np.float64], q0: NDArray[np.float64], q1: NDArray[np.float64]
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Closest-point parameters ``(s, t)`` on two batches of segments (Lumelsky's case split)."""
    d1, d2, r = p1 - p0, q1 - q0, p0 - q0
    a, e = _dot(d1, d1), _dot(d2, d2)
    if np.any(a <= 0.0) or np.any(e <= 0.0):
        raise ValueError("Invalid segment: zero length. Distance needs two proper segments.")
    b, c, f = _dot(d1, d2), _dot(d1, r), _dot(d2, r)
    denom = a * e - b * b
    parallel = denom <= _PARALLEL_TOL * a * e
    s = np.where(parallel, 0.0, _clip01((b * f - c * e) / np.where(parallel, 1.0, denom)))
    t = (b * s + f) / e
    low, high = t < 0.0, t > 1.0
    s = np.where(low, _clip01(-c / a), np.where(high, _clip01((b - c) / a), s))
    t = _clip01(t)
    return s, t


def min_distance(
    p0: ArrayLike, p1: ArrayLike, q0: ArrayLike, q1: ArrayLike
) -> tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.float64]]:
    """Minimum distance between segments ``p0p1`` and ``q0q1`` plus closest-point parameters."""
    p0, p1, q0, q1 = (np.asarray(v, dtype=float) for v in (p0, p1, q0, q1))
    s, t = segment_parameters(p0, p1, q0, q1)
    gap = p0 + s[..., None] * (p1 - p0) - q0 - t[..., None] * (q1 - q0)
    return np.linalg.norm(gap, axis=-1), s, t


@dataclass
class ContactKinematics:
    """A batch of contacts over ``m`` nodes each.

    ``weights (B, m)`` and their derivatives ``dweights (B, m, 3m)`` build the separation
    vector; ``normal`` is its direction, ``dnormal (B, 3, 3m)`` the derivative of the normal.
    ``positions``/``velocities`` are ``(B, m, 3)``.
    """

    positions: NDArray[np.float64]
    velocities: NDArray[np.float64]
    weights: NDArray[np.float64]
    dweights: NDArray[np.float64]
    normal: NDArray[np.float64]
    dnormal: NDArray[np.float64]
    distance: NDArray[np.float64]

    def __len__(self) -> int:
        return len(self.distance)

    @property
    def n_local(self) -> int:
        return 3 * self.weights.shape[1]

    def weight_matrix(self) -> NDArray[np.float64]:
        """``A (B, 3, 3m)`` with ``v = A x``."""
        b, m = self.weights.shape
        return np.einsum("bi,jk->bjik", self.weights, np.eye(3)).reshape(b, 3, 3 * m)

    def distance_gradient(self) -> NDArray[np.float64]:
        return (self.weights[:, :, None] * self.normal[:, None, :]).reshape(len(self), -1)

    def distance_hessian(self) -> NDArray[np.float64]:
        a = self.weight_matrix()
        h = np.einsum("bji,bjk->bik", a, self.dnormal)
        b, m = self.weights.shape
        h += np.einsum("bj,bik->bijk", self.normal, self.dweights).reshape(b, 3 * m, 3 * m)
        return h


def _separation_derivative(
    weights: NDArray[np.float64], dweights: NDArray[np.float64], positions: NDArray[np.float64]
) -> NDArray[np.float64]:
    b, m = weights.shape
    a = np.einsum("bi,jk->bjik", weights, np.eye(3)).reshape(b, 3, 3 * m)
    return a + np.einsum("bij,bik->bjk", positions, dweights)


def contact_normal(
    v: NDArray[np.float64], dist: NDArray[np.float64], fallback: NDArray[np.float64]
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Unit separation direction and ``1/dist``.

    Rows at zero distance take the unit ``fallback`` direction and a zero ``1/dist``, which
    freezes the normal there. The penalty stays finite at full overlap.
    """
    touching = dist <= 0.0
    if np.any(touching):
        log.debug("%d contacts at zero distance, using fallback normals", int(touching.sum()))
    safe = np.where(touching, 1.0, dist)
    nhat = np.where(touching[:, None], fallback, v / safe[:, None])
    return nhat, np.where(touching, 0.0, 1.0 / safe)


def crossing_normal(d1: NDArray[np.float64], d2: NDArray[np.float64]) -> NDArray[np.float64]:
    """Unit ``d1 × d2``; for parallel edges, a fixed direction perpendicular to ``d1``."""
    cross = np.cross(d1, d2)
    norm = np.linalg.norm(cross, axis=1)
    len1 = np.linalg.norm(d1, axis=1)
    parallel = norm <= _PARALLEL_TOL * len1 * np.linalg.norm(d2, axis=1)
    side = seed_director(d1 / len1[:, None])
    return np.where(parallel[:, None], side, cross / np.where(parallel, 1.0, norm)[:, None])


def edge_pair_kinematics(
    positions: NDArray[np.float64], velocities: NDArray[np.float64] | None = None
) -> ContactKinematics:
    """Kinematics of edge pairs ``positions (B, 4, 3)`` ordered ``(p0, p1, q0, q1)``."""
    p0, p1, q0, q1 = (positions[:, k] for k in range(4))
    n = len(positions)
    s, t = segment_parameters(p0, p1, q0, q1)
    d1, d2 = p1 - p0, q1 - q0
    v = p0 + s[:, None] * d1 - q0 - t[:, None] * d2
    dist = np.linalg.norm(v, axis=1)
    nhat, inv_dist = contact_normal(v, dist, crossing_normal(d1, d2))
    weights = np.stack([1.0 - s, s, -(1.0 - t), -t], axis=1)

    # implicit differentiation of the stationarity conditions on the free parameters
    a_mat = _separation_derivative(weights, np.zeros((n, 4, 12)), positions)
    g_s = np.zeros((n, 12))
    g_s[:, 0:3], g_s[:, 3:6] = -v, v
    g_t = np.zeros((n, 12))
    g_t[:, 6:9], g_t[:, 9:12] = v, -v
    r1 = np.einsum("bi,bij->bj", d1, a_mat) + g_s  # ∂(v·d1)/∂q at fixed s, t
    r2 = np.einsum("bi,bij->bj", d2, a_mat) - g_t  # ∂(v·d2)/∂q at fixed s, t
    aa, bb, ee = _dot(d1, d1), _dot(d1, d2), _dot(d2, d2)
    s_free = (s > 0.0) & (s < 1.0)
    t_free = (t > 0.0) & (t < 1.0)
    denom = aa * ee - bb * bb
    both = s_free & t_free & (denom > _PARALLEL_TOL * aa * ee)
    ds = np.zeros((n, 12))
    dt = np.zeros((n, 12))
    # [a −b; b −e][ds; dt] = −[r1; r2]
    safe = np.where(both, denom, 1.0)[:, None]
    ds = np.where(both[:, None], (-ee[:, None] * r1 + bb[:, None] * r2) / safe, ds)
    dt = np.where(both[:, None], (-bb[:, None] * r1 + aa[:, None] * r2) / safe, dt)
    only_s = s_free & ~both & ~t_free
    ds = np.where(only_s[:, None], -r1 / aa[:, None], ds)
    only_t = t_free & ~both
    dt = np.where(only_t[:, None], r2 / ee[:, None], dt)

    dweights = np.stack([-ds, ds, dt, -dt], axis=1)
    dv = _separation_derivative(weights, dweights, positions)
    dn = np.einsum("bij,bjk->bik", np.eye(3)[None] - _outer(nhat, nhat), dv) * inv_dist[:, None, None]
    return ContactKinematics(
        positions=positions,
        velocities=np.zeros_like(positions) if velocities is None else velocities,
        weights=weights,
        dweights=dweights,
        normal=nhat,
        dnormal=dn,
        distance=dist,
    )


# --- penalties ---------------------------------------------------------------


def contact_energy(distance: ArrayLike, diameter: float, delta: float, k1: float | None = None) -> NDArray[np.float64]:
    """Unscaled IMC energy: quadratic inside ``D − δ``, smooth-log blend, zero beyond ``D + δ``."""
    energy, _, _ = imc_penalty(np.asarray(distance, dtype=float) - diameter, delta, k1)
    return energy


def _softplus_terms(gap: NDArray[np.float64], k1: float) -> tuple[NDArray[np.float64], ...]:
    z = -k1 * gap
    soft = np.logaddexp(0.0, z) / k1
    sig = 0.5 * (1.0 + np.tanh(0.5 * z))
    energy = soft**2
    d1 = -2.0 * soft * sig
    d2 = 2.0 * sig**2 + 2.0 * soft * sig * (1.0 - sig) * k1
    return energy, d1, d2


def imc_penalty(
    gap: NDArray[np.float64], delta: float, k1: float | None = None
) -> tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.float64]]:
    """``ψ(g)`` and its first two derivatives, with ``g = Δ − D``."""
    k1 = 15.0 / delta if k1 is None else k1
    gap = np.asarray(gap, dtype=float)
    soft, soft_d1, soft_d2 = _softplus_terms(gap, k1)
    inside = gap <= -delta
    outside = gap >= delta
    energy = np.where(inside, gap**2, np.where(outside, 0.0, soft))
    d1 = np.where(inside, 2.0 * gap, np.where(outside, 0.0, soft_d1))
    d2 = np.where(inside, 2.0, np.where(outside, 0.0, soft_d2))
    return energy, d1, d2


def floor_penalty(
    gap: NDArray[np.float64], k1: float
) -> tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.float64]]:
    """``((1/K₁) ln(1 + e^{−K₁Δ}))²`` and its derivatives."""
    return _softplus_terms(np.asarray(gap, dtype=float), k1)


def friction_scale(speed: ArrayLike, k2: float) -> NDArray[np.float64]:
    """``γ = 2/(1 + e^{−K₂|u|}) − 1``."""
    return np.tanh(0.5 * k2 * np.asarray(speed, dtype=float))


def penalty_forces(
    kin: ContactKinematics,
    energy: NDArray[np.float64],
    d1: NDArray[np.float64],
    d2: NDArray[np.float64],
    stiffness: float,
    hessian: bool = True,
) -> tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.float64] | None]:
    """Scaled energy, force ``(B, 3m)`` and force Jacobian for a penalty ``ψ(Δ)``."""
    grad = kin.distance_gradient()
    force = -stiffness * d1[:, None] * grad
    jac = None
    if hessian:
        jac = -stiffness * (d2[:, None, None] * _outer(grad, grad) + d1[:, None, None] * kin.distance_hessian())
    return stiffness * energy, force, jac


def friction_forces(
    kin: ContactKinematics,
    normal_force: NDArray[np.float64],
    dnormal_force: NDArray[np.float64],
    mu: float,
    k2: float,
    dt: float,
    jacobian: bool = True,
) -> tuple[NDArray[np.float64], NDArray[np.float64] | None]:
    """Smoothed Coulomb friction ``−μ γ |F_n| û`` distributed with the contact weights.

    Velocities are backward differences, so ``∂u/∂x = I/dt``. ``dnormal_force`` is the
    derivative of ``|F_n|`` with respect to the local positions.
    """
    b, m = kin.weights.shape
    n_loc = 3 * m
    a = kin.weight_matrix()
    nhat = kin.normal
    v_rel = np.einsum("bi,bij->bj", kin.weights, kin.velocities)
    vn = _dot(v_rel, nhat)
    v_t = v_rel - vn[:, None] * nhat
    speed = np.linalg.norm(v_t, axis=1)
    gamma = friction_scale(speed, k2)
    moving = speed > _STICK_SPEED

    u_hat = np.where(moving[:, None], v_t / np.where(moving, speed, 1.0)[:, None], 0.0)
    direction = (kin.weights[:, :, None] * u_hat[:, None, :]).reshape(b, n_loc)
    phi = mu * gamma * normal_force
    force = -phi[:, None] * direction
    if not jacobian:
        return force, None

    dv_rel = a / dt + np.einsum("bij,bik->bjk", kin.velocities, kin.dweights)
    proj = np.eye(3)[None] - _outer(nhat, nhat)
    dv_t = (
        np.einsum("bij,bjk->bik", proj, dv_rel)
        - vn[:, None, None] * kin.dnormal
        - nhat[:, :, None] * np.einsum("bi,bik->bk", v_rel, kin.dnormal)[:, None, :]
    )
    dgamma = 0.5 * k2 * (1.0 - gamma**2)

    # near-zero slip: γ ≈ (K₂/2)|v_t| so F ≈ −μ (K₂/2) |F_n| Aᵀ v_t
    lin_dir = (kin.weights[:, :, None] * v_t[:, None, :]).reshape(b, n_loc)
    jac_stick = -mu * 0.5 * k2 * (
        normal_force[:, None, None] * np.einsum("bji,bjk->bik", a, dv_t) + _outer(lin_dir, dnormal_force)
    )

    safe_speed = np.where(moving, speed, 1.0)[:, None, None]
    du_hat = np.einsum("bij,bjk->bik", np.eye(3)[None] - _outer(u_hat, u_hat), dv_t) / safe_speed
    dphi = mu * (dgamma * normal_force)[:, None] * np.einsum("bi,bik->bk", u_hat, dv_t) + (
        mu * gamma
    )[:, None] * dnormal_force
    ddir = (
        kin.weights[:, :, None, None] * du_hat[:, None, :, :]
        + u_hat[:, None, :, None] * kin.dweights[:, :, None, :]
    ).reshape(b, n_loc, n_loc)
    jac_slide = -_outer(direction, dphi) - phi[:, None, None] * ddir
    jac = np.where(moving[:, None, None], jac_slide, jac_stick)
    return force, jac


def _fd_force_jacobian(
    force_of: Callable[[NDArray[np.float64]], NDArray[np.float64]],
    positions: NDArray[np.float64],
    step: float,
) -> NDArray[np.float64]:
    b, m, _ = positions.shape
    jac = np.zeros((b, 3 * m, 3 * m))
    flat = positions.reshape(b, -1)
    for k in range(3 * m):
        plus, minus = flat.copy(), flat.copy()
        plus[:, k] += step
        minus[:, k] -= step
        jac[:, :, k] = (force_of(plus.reshape(b, m, 3)) - force_of(minus.reshape(b, m, 3))) / (2.0 * step)
    return jac


# --- pairs -------------------------------------------------------------------


def contact_edges(topology: MeshTopology, material: MaterialParams) -> tuple[NDArray[np.int64], NDArray[np.float64]]:
    """Rod edges then shell edges, with the radius each one presents to contact."""
    edges = np.concatenate([topology.rod_edges, topology.shell_edges]).reshape(-1, 2)
    radii = np.concatenate(
        [np.full(topology.n_rod_edges, material.r0), np.full(topology.n_shell_edges, material.h / 2)]
    )
    return edges, radii


def broadphase(
    topology: MeshTopology, q: NDArray[np.float64], cutoff: float, material: MaterialParams
) -> list[ContactPair]:
    """Non-adjacent edge pairs closer than ``cutoff + D`` (``D`` the summed radii), exact distances attached."""
    edges, radii = contact_edges(topology, material)
    if len(edges) < 2:
        return []
    x = q[: 3 * topology.n_nodes].reshape(-1, 3)
    a, b = x[edges[:, 0]], x[edges[:, 1]]
    lengths = np.linalg.norm(b - a, axis=1)
    tree = cKDTree(0.5 * (a + b))
    reach = cutoff + 2.0 * float(radii.max()) + float(lengths.max())
    candidates = tree.query_pairs(reach, output_type="ndarray").astype(np.int64).reshape(-1, 2)
    if len(candidates) == 0:
        return []
    ei, ej = candidates[:, 0], candidates[:, 1]
    shared = (
        (edges[ei, 0] == edges[ej, 0])
        | (edges[ei, 0] == edges[ej, 1])
        | (edges[ei, 1] == edges[ej, 0])
        | (edges[ei, 1] == edges[ej, 1])
    )
    ei, ej = ei[~shared], ej[~shared]
    if len(ei) == 0:
        return []
    dist, s, t = min_distance(a[ei], b[ei], a[ej], b[ej])
    diameter = radii[ei] + radii[ej]
    keep = dist < diameter + cutoff
    log.debug("Broadphase: %d candidates, %d within reach", len(candidates), int(keep.sum()))
    return [
        ContactPair(
            edge_i=int(i),
            edge_j=int(j),
            nodes=(int(edges[i, 0]), int(edges[i, 1]), int(edges[j, 0]), int(edges[j, 1])),
            distance=float(d),
            s=float(ss),
            t=float(tt),
            diameter=float(dd),
        )
        for i, j, d, ss, tt, dd in zip(ei[keep], ej[keep], dist[keep], s[keep], t[keep], diameter[keep])
    ]


def _pair_arrays(pairs: list[ContactPair]) -> tuple[NDArray[np.int64], NDArray[np.float64]]:
    return np.array([p.nodes for p in pairs], dtype=np.int64), np.array([p.diameter for p in pairs])


def contact_force(
    pairs: list[ContactPair], q: NDArray[np.float64], params: ContactParams, hessian: bool = True
) -> EnergyContribution:
    """Penalty contribution of each pair; the gradient is the negated contact force."""
    if not pairs:
        return EnergyContribution.empty(12)
    nodes, diameter = _pair_arrays(pairs)
    x = q[: 3 * (int(nodes.max()) + 1)].reshape(-1, 3)
    kin = edge_pair_kinematics(x[nodes])
    psi, d1, d2 = imc_penalty(kin.distance - diameter, params.delta, params.k1)
    energy, force, jac = penalty_forces(kin, psi, d1, d2, params.stiffness, hessian)
    idx = (3 * nodes[:, :, None] + np.arange(3)).reshape(-1, 12)
    return EnergyContribution(energy=energy, gradient=-force, hessian=None if jac is None else -jac, indices=idx)


def friction_force(
    pairs: list[ContactPair],
    q: NDArray[np.float64],
    q_prev: NDArray[np.float64],
    dt: float,
    params: ContactParams,
    hessian: bool = True,
) -> EnergyContribution:
    """Friction between each pair's closest points; zero energy, gradient is the negated force."""
    if not pairs or params.mu == 0.0:
        return EnergyContribution.empty(12)
    nodes, diameter = _pair_arrays(pairs)
    n_pos = 3 * (int(nodes.max()) + 1)
    x = q[:n_pos].reshape(-1, 3)
    x_prev = q_prev[:n_pos].reshape(-1, 3)
    prev = x_prev[nodes]

    def evaluate(pos: NDArray[np.float64], jacobian: bool) -> tuple[NDArray[np.float64], NDArray[np.float64] | None]:
        kin = edge_pair_kinematics(pos, (pos - prev) / dt)
        _, d1, d2 = imc_penalty(kin.distance - diameter, params.delta, params.k1)
        fn = -params.stiffness * d1
        dfn = -params.stiffness * d2[:, None] * kin.distance_gradient()
        return friction_forces(kin, fn, dfn, params.mu, params.k2, dt, jacobian)

    pos = x[nodes]
    force, jac = evaluate(pos, hessian and params.friction_jacobian == "analytic")
    if hessian and params.friction_jacobian == "fd":
        jac = _fd_force_jacobian(lambda p: evaluate(p, False)[0], pos, 1e-7 * max(1.0, float(np.abs(pos).max())))
    idx = (3 * nodes[:, :, None] + np.arange(3)).reshape(-1, 12)
    return EnergyContribution(
        energy=np.zeros(len(pairs)), gradient=-force, hessian=None if jac is None else -jac, indices=idx
    )


@dataclass
class ImcResult:
    pairs: list[ContactPair]
    contact: EnergyContribution
    friction: EnergyContribution

    @property
    def min_distance(self) -> float:
        return min((p.distance - p.diameter for p in self.pairs), default=float("inf"))


def assemble_imc(
    topology: MeshTopology,
    q: NDArray[np.float64],
    q_prev: NDArray[np.float64],
    dt: float,
    params: ContactParams,
    material: MaterialParams,
    hessian: bool = True,
) -> ImcResult:
    """Broadphase, then contact and friction contributions for every active pair."""
    pairs = broadphase(topology, q, params.delta, material)
    return ImcResult(
        pairs=pairs,
        contact=contact_force(pairs, q, params, hessian),
        friction=friction_force(pairs, q, q_prev, dt, params, hessian),
    )
