"""State vector, edge reference frames and the per-shell-edge τ⁰ snapshot.

Reference directors are carried between steps by time-parallel transport; the reference
twist of every bend-twist stencil is tracked incrementally so it never jumps by 2π.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING

import numpy as np
from numpy.typing import ArrayLike, NDArray

if TYPE_CHECKING:
    from .topology import BendTwistStencils, MeshTopology

log = logging.getLogger("rodshell.frames")

_PARALLEL_TOL = 1e-12
_ANTIPARALLEL_TOL = 1e-10


class AntiparallelTangentsError(ValueError):
    """Parallel transport between opposite tangents has no unique rotation axis."""


class SingularConfigurationError(ValueError):
    """A kernel hit a configuration where its curvature measure is undefined."""


@dataclass
class StateVector:
    """Generalized coordinates ``q`` and their rates ``u`` on one DOF layout."""

    q: NDArray[np.float64]
    u: NDArray[np.float64]
    time: float = 0.0

    def __post_init__(self) -> None:
        self.q = np.asarray(self.q, dtype=float)
        self.u = np.asarray(self.u, dtype=float)
        if self.q.shape != self.u.shape or self.q.ndim != 1:
            raise ValueError(f"Invalid state: q{self.q.shape!r} and u{self.u.shape!r}. Must be equal 1-D shapes.")

    def positions(self, n_nodes: int) -> NDArray[np.float64]:
        return self.q[: 3 * n_nodes].reshape(n_nodes, 3)

    def velocities(self, n_nodes: int) -> NDArray[np.float64]:
        return self.u[: 3 * n_nodes].reshape(n_nodes, 3)

    def copy(self) -> StateVector:
        return StateVector(q=self.q.copy(), u=self.u.copy(), time=self.time)


@dataclass
class FrameSet:
    """Per twist edge: tangent and reference directors. Per stencil: reference twist.

    ``tau0``/``normals`` hold one row per shell edge (empty without triangles).
    """

    tangents: NDArray[np.float64]
    d1: NDArray[np.float64]
    d2: NDArray[np.float64]
    ref_twist: NDArray[np.float64]
    tau0: NDArray[np.float64]
    normals: NDArray[np.float64]

    def material_directors(self, theta: ArrayLike) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        """``m1, m2``: the reference directors rotated by θ about the tangent."""
        th = np.asarray(theta, dtype=float)[:, None]
        c, s = np.cos(th), np.sin(th)
        return c * self.d1 + s * self.d2, -s * self.d1 + c * self.d2

    def copy(self) -> FrameSet:
        return replace(
            self,
            tangents=self.tangents.copy(),
            d1=self.d1.copy(),
            d2=self.d2.copy(),
            ref_twist=self.ref_twist.copy(),
            tau0=self.tau0.copy(),
            normals=self.normals.copy(),
        )


# --- vector helpers ----------------------------------------------------------


def _unit(v: NDArray[np.float64]) -> NDArray[np.float64]:
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def _rowdot(a: NDArray[np.float64], b: NDArray[np.float64]) -> NDArray[np.float64]:
    return np.einsum("...i,...i->...", a, b)


def seed_director(t: ArrayLike) -> NDArray[np.float64]:
    """A deterministic unit vector perpendicular to ``t`` (rows allowed)."""
    t = np.asarray(t, dtype=float)
    axis = np.zeros_like(t)
    pick = np.argmin(np.abs(t), axis=-1)
    np.put_along_axis(axis, pick[..., None], 1.0, axis=-1)
    d = axis - _rowdot(axis, t)[..., None] * t
    return _unit(d)


def signed_angle(u: ArrayLike, v: ArrayLike, axis: ArrayLike) -> NDArray[np.float64]:
    """Angle from u to v, positive counter-clockwise about ``axis``; range (−π, π]."""
    u, v, axis = (np.asarray(a, dtype=float) for a in (u, v, axis))
    return np.arctan2(_rowdot(np.cross(u, v), axis), _rowdot(u, v))


def parallel_transport(v: ArrayLike, t_from: ArrayLike, t_to: ArrayLike) -> NDArray[np.float64]:
    """Rotate ``v`` by the minimal rotation taking unit tangent ``t_from`` onto ``t_to``.

    Raises :class:`AntiparallelTangentsError` when the tangents are opposite; use
    :func:`transport` for the two-stage fallback.
    """
    v, t1, t2 = (np.asarray(a, dtype=float) for a in (v, t_from, t_to))
    b = np.cross(t1, t2)
    nb = np.asarray(np.linalg.norm(b, axis=-1))
    if np.any((nb < _ANTIPARALLEL_TOL) & (_rowdot(t1, t2) < 0)):
        raise AntiparallelTangentsError("Invalid transport: antiparallel tangents. Rotation axis undefined.")
    same = nb < _PARALLEL_TOL
    bhat = b / np.where(same, 1.0, nb)[..., None]
    n1 = np.cross(t1, bhat)
    n2 = np.cross(t2, bhat)
    out = (
        _rowdot(v, t1)[..., None] * t2
        + _rowdot(v, n1)[..., None] * n2
        + _rowdot(v, bhat)[..., None] * bhat
    )
    return np.where(same[..., None], v, out)


def transport(v: ArrayLike, t_from: ArrayLike, t_to: ArrayLike) -> NDArray[np.float64]:
    """:func:`parallel_transport` that routes antiparallel pairs through a perpendicular tangent."""
    v, t1, t2 = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (v, t_from, t_to)))
    single = v.ndim == 1
    v, t1, t2 = (np.atleast_2d(a) for a in (v, t1, t2))
    anti = (np.linalg.norm(np.cross(t1, t2), axis=-1) < _ANTIPARALLEL_TOL) & (_rowdot(t1, t2) < 0)
    out = np.empty(v.shape)
    ok = ~anti
    if np.any(ok):
        out[ok] = parallel_transport(v[ok], t1[ok], t2[ok])
    if np.any(anti):
        mid = seed_director(t1[anti])
        out[anti] = parallel_transport(parallel_transport(v[anti], t1[anti], mid), mid, t2[anti])
    return out[0] if single else out


def _wrap(angle: NDArray[np.float64]) -> NDArray[np.float64]:
    return angle - 2.0 * np.pi * np.floor((angle + np.pi) / (2.0 * np.pi))


# --- frames ------------------------------------------------------------------


def edge_tangents(edges: NDArray[np.int64], x: NDArray[np.float64]) -> NDArray[np.float64]:
    if len(edges) == 0:
        return np.zeros((0, 3))
    e = x[edges[:, 1]] - x[edges[:, 0]]
    length = np.linalg.norm(e, axis=1)
    if np.any(length <= 0.0):
        bad = int(np.flatnonzero(length <= 0.0)[0])
        raise ValueError(f"Invalid edge {bad}: zero length. Frames need a tangent.")
    return e / length[:, None]


def reference_twist(
    frames: FrameSet,
    stencils: BendTwistStencils,
    previous: NDArray[np.float64] | None = None,
) -> NDArray[np.float64]:
    """Twist of the reference frame across each stencil, signs applied.

    The first edge's ``d1`` is transported onto the second tangent and the signed angle to
    the second ``d1`` is measured about that tangent. With ``previous`` the result is the
    branch nearest to it.
    """
    if len(stencils) == 0:
        return np.zeros(0)
    ea, eb = stencils.edges[:, 0], stencils.edges[:, 1]
    sa, sb = stencils.signs[:, 0:1], stencils.signs[:, 1:2]
    te, tf = sa * frames.tangents[ea], sb * frames.tangents[eb]
    d1e, d1f = sa * frames.d1[ea], sb * frames.d1[eb]
    angle = signed_angle(transport(d1e, te, tf), d1f, tf)
    if previous is None:
        return angle
    return previous + _wrap(angle - previous)


def snapshot_tau0(topology: MeshTopology, x: NDArray[np.float64]) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Average face normal and τ⁰ = normalize(n_avg × ê) per shell edge, ê oriented min→max."""
    if topology.n_shell_edges == 0:
        return np.zeros((0, 3)), np.zeros((0, 3))
    t = topology.triangles
    face_n = np.cross(x[t[:, 1]] - x[t[:, 0]], x[t[:, 2]] - x[t[:, 0]])
    area2 = np.linalg.norm(face_n, axis=1)
    if np.any(area2 <= 0.0):
        raise SingularConfigurationError(f"Invalid triangle {int(np.flatnonzero(area2 <= 0.0)[0])}: degenerate.")
    face_n /= area2[:, None]
    faces = topology.shell_edge_faces
    n_avg = face_n[faces[:, 0]] + np.where(faces[:, 1:2] >= 0, face_n[np.maximum(faces[:, 1], 0)], 0.0)
    z = topology.shell_edges
    e_hat = _unit(x[z[:, 1]] - x[z[:, 0]])
    tau = np.cross(n_avg, e_hat)
    norm = np.linalg.norm(tau, axis=1)
    if np.any(norm < 1e-12):
        raise SingularConfigurationError(
            f"Invalid shell edge {int(np.flatnonzero(norm < 1e-12)[0])}: incident faces folded flat onto each other."
        )
    return _unit(n_avg), tau / norm[:, None]


def init_reference_frames(topology: MeshTopology, q0: ArrayLike) -> FrameSet:
    """Seed each connected group of twist edges and space-transport along connectivity."""
    q = np.asarray(q0, dtype=float)
    x = q[: 3 * topology.n_nodes].reshape(-1, 3)
    edges = topology.twist_edges
    tangents = edge_tangents(edges, x)
    d1 = np.zeros_like(tangents)
    incident: list[list[int]] = [[] for _ in range(topology.n_nodes)]
    for e, (a, b) in enumerate(edges):
        incident[a].append(e)
        incident[b].append(e)

    done = np.zeros(len(edges), dtype=bool)
    for root in range(len(edges)):
        if done[root]:
            continue
        d1[root] = seed_director(tangents[root])
        done[root] = True
        queue = deque([root])
        while queue:
            a = queue.popleft()
            for centre in edges[a]:
                sa = 1.0 if edges[a][1] == centre else -1.0
                for b in incident[centre]:
                    if done[b]:
                        continue
                    sb = 1.0 if edges[b][0] == centre else -1.0
                    d1[b] = sb * transport(sa * d1[a], sa * tangents[a], sb * tangents[b])
                    done[b] = True
                    queue.append(b)

    d1 = _orthonormalize(d1, tangents)
    normals, tau0 = snapshot_tau0(topology, x)
    frames = FrameSet(
        tangents=tangents,
        d1=d1,
        d2=np.cross(tangents, d1),
        ref_twist=np.zeros(0),
        tau0=tau0,
        normals=normals,
    )
    frames.ref_twist = reference_twist(frames, topology.bend_twist_stencils)
    return frames


def _orthonormalize(d1: NDArray[np.float64], t: NDArray[np.float64]) -> NDArray[np.float64]:
    if len(d1) == 0:
        return d1
    return _unit(d1 - _rowdot(d1, t)[:, None] * t)


def time_update_frames(frames: FrameSet, q_new: ArrayLike, topology: MeshTopology) -> FrameSet:
    """Transport every reference director from its old tangent to the tangent of ``q_new``.

    τ⁰ is left untouched; it is refreshed only at step boundaries.
    """
    q = np.asarray(q_new, dtype=float)
    x = q[: 3 * topology.n_nodes].reshape(-1, 3)
    tangents = edge_tangents(topology.twist_edges, x)
    if len(tangents) == 0:
        return replace(frames, tangents=tangents)
    d1 = _orthonormalize(transport(frames.d1, frames.tangents, tangents), tangents)
    out = replace(frames, tangents=tangents, d1=d1, d2=np.cross(tangents, d1))
    out.ref_twist = reference_twist(out, topology.bend_twist_stencils, previous=frames.ref_twist)
    return out
