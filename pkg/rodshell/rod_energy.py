"""Stretching, bending and twisting energies of discrete elastic rods.

Every kernel is batched over its springs: one ``EnergyContribution`` row per spring, with
local gradients and Hessians plus the global DOF indices they scatter to.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .frames import FrameSet, SingularConfigurationError

if TYPE_CHECKING:
    from .topology import BendTwistSprings, DofLayout, StretchSprings

_CHI_MIN = 1e-10


@dataclass
class EnergyContribution:
    """Batched energies: ``energy (B,)``, ``gradient (B, n)``, ``hessian (B, n, n)``, ``indices (B, n)``."""

    energy: NDArray[np.float64]
    gradient: NDArray[np.float64]
    hessian: NDArray[np.float64] | None
    indices: NDArray[np.int64]

    def __len__(self) -> int:
        return len(self.energy)

    @property
    def total(self) -> float:
        return float(np.sum(self.energy))

    @classmethod
    def empty(cls, n_local: int) -> EnergyContribution:
        return cls(
            energy=np.zeros(0),
            gradient=np.zeros((0, n_local)),
            hessian=np.zeros((0, n_local, n_local)),
            indices=np.zeros((0, n_local), dtype=np.int64),
        )

    def gradient_vector(self, size: int) -> NDArray[np.float64]:
        """Scatter-add the local gradients into a dense vector of length ``size``."""
        return np.bincount(self.indices.ravel(), weights=self.gradient.ravel(), minlength=size)

    def hessian_triplets(self) -> tuple[NDArray[np.int64], NDArray[np.int64], NDArray[np.float64]]:
        """COO rows, cols and values of the local Hessians."""
        if self.hessian is None:
            raise ValueError("Invalid contribution: assembled without a Hessian.")
        n = self.indices.shape[1]
        rows = np.repeat(self.indices, n, axis=1).ravel()
        cols = np.tile(self.indices, (1, n)).ravel()
        return rows, cols, self.hessian.ravel()


def _outer(a: NDArray[np.float64], b: NDArray[np.float64]) -> NDArray[np.float64]:
    return np.einsum("...i,...j->...ij", a, b)


def _skew(v: NDArray[np.float64]) -> NDArray[np.float64]:
    """``[v×]`` per row."""
    out = np.zeros(v.shape + (3,))
    out[..., 0, 1], out[..., 0, 2] = -v[..., 2], v[..., 1]
    out[..., 1, 0], out[..., 1, 2] = v[..., 2], -v[..., 0]
    out[..., 2, 0], out[..., 2, 1] = -v[..., 1], v[..., 0]
    return out


def _dot(a: NDArray[np.float64], b: NDArray[np.float64]) -> NDArray[np.float64]:
    return np.einsum("...i,...i->...", a, b)


def curvature_binormal(e_i: ArrayLike, e_j: ArrayLike) -> NDArray[np.float64]:
    """``2 eᵢ×eⱼ / (|eᵢ||eⱼ| + eᵢ·eⱼ)``; rows allowed."""
    a, b = np.asarray(e_i, dtype=float), np.asarray(e_j, dtype=float)
    denom = np.linalg.norm(a, axis=-1) * np.linalg.norm(b, axis=-1) + _dot(a, b)
    scale = np.linalg.norm(a, axis=-1) * np.linalg.norm(b, axis=-1)
    if np.any(denom <= _CHI_MIN * scale):
        raise SingularConfigurationError("Invalid edges: antiparallel. Curvature binormal is undefined.")
    return 2.0 * np.cross(a, b) / np.asarray(denom)[..., None]


# --- stretch -----------------------------------------------------------------


def stretch_contribution(springs: StretchSprings, q: NDArray[np.float64], hessian: bool = True) -> EnergyContribution:
    """``E = ½ k ε² |ē|`` with ``ε = |e|/|ē| − 1``, over the six nodal DOFs."""
    if len(springs) == 0:
        return EnergyContribution.empty(6)
    x = q.reshape(-1)[: 3 * (int(springs.nodes.max()) + 1)].reshape(-1, 3)
    n0, n1 = springs.nodes[:, 0], springs.nodes[:, 1]
    e = x[n1] - x[n0]
    length = np.linalg.norm(e, axis=1)
    if np.any(length <= 0.0):
        raise ValueError(f"Invalid stretch spring {int(np.flatnonzero(length <= 0.0)[0])}: zero current length.")
    rest = springs.rest_length
    k = springs.stiffness
    eps = length / rest - 1.0
    t = e / length[:, None]

    f = (k * eps)[:, None] * t
    grad = np.concatenate([-f, f], axis=1)
    idx = np.concatenate([3 * n0[:, None] + np.arange(3), 3 * n1[:, None] + np.arange(3)], axis=1)

    hess = None
    if hessian:
        eye = np.eye(3)[None]
        m = k[:, None, None] * (
            (1.0 / rest - 1.0 / length)[:, None, None] * eye + _outer(e, e) / (length**3)[:, None, None]
        )
        hess = np.zeros((len(springs), 6, 6))
        hess[:, :3, :3] = m
        hess[:, 3:, 3:] = m
        hess[:, :3, 3:] = -m
        hess[:, 3:, :3] = -m
    return EnergyContribution(energy=0.5 * k * eps**2 * rest, gradient=grad, hessian=hess, indices=idx)


# --- bend / twist ------------------------------------------------------------


@dataclass
class _StencilGeometry:
    x0: NDArray[np.float64]
    x1: NDArray[np.float64]
    x2: NDArray[np.float64]
    theta_e: NDArray[np.float64]
    theta_f: NDArray[np.float64]
    m1e: NDArray[np.float64]
    m2e: NDArray[np.float64]
    m1f: NDArray[np.float64]
    m2f: NDArray[np.float64]
    indices: NDArray[np.int64]
    signs: NDArray[np.float64]


def _stencil_geometry(
    springs: BendTwistSprings, q: NDArray[np.float64], frames: FrameSet, layout: DofLayout
) -> _StencilGeometry:
    """Gather positions and sign-flipped frames so each stencil sees edge e into and edge f out of its centre."""
    x = q[: layout.theta_offset].reshape(-1, 3)
    theta = q[layout.theta_offset : layout.theta_offset + layout.n_twist]
    m1, m2 = frames.material_directors(theta)
    ea, eb = springs.edges[:, 0], springs.edges[:, 1]
    sa, sb = springs.signs[:, 0], springs.signs[:, 1]
    idx = np.concatenate(
        [layout.node_dofs(springs.nodes).reshape(-1, 9), layout.theta_dofs(springs.edges)],
        axis=1,
    )
    return _StencilGeometry(
        x0=x[springs.nodes[:, 0]],
        x1=x[springs.nodes[:, 1]],
        x2=x[springs.nodes[:, 2]],
        theta_e=sa * theta[ea],
        theta_f=sb * theta[eb],
        m1e=sa[:, None] * m1[ea],
        m2e=m2[ea],
        m1f=sb[:, None] * m1[eb],
        m2f=m2[eb],
        indices=idx,
        signs=springs.signs,
    )


def _edge_terms(g: _StencilGeometry) -> tuple[NDArray[np.float64], ...]:
    ee, ef = g.x1 - g.x0, g.x2 - g.x1
    norm_e = np.linalg.norm(ee, axis=1)
    norm_f = np.linalg.norm(ef, axis=1)
    te, tf = ee / norm_e[:, None], ef / norm_f[:, None]
    chi = 1.0 + _dot(te, tf)
    if np.any(chi <= _CHI_MIN):
        raise SingularConfigurationError(
            f"Invalid bend-twist stencil {int(np.flatnonzero(chi <= _CHI_MIN)[0])}: antiparallel edges."
        )
    kb = 2.0 * np.cross(te, tf) / chi[:, None]
    return norm_e, norm_f, te, tf, chi, kb


def _resign(g: _StencilGeometry, grad: NDArray[np.float64], hess: NDArray[np.float64] | None) -> None:
    """Map θ-derivatives of the flipped local angles back onto the stored θ DOFs."""
    s = np.ones((len(g.signs), grad.shape[1]))
    s[:, 9] = g.signs[:, 0]
    s[:, 10] = g.signs[:, 1]
    grad *= s
    if hess is not None:
        hess *= s[:, :, None] * s[:, None, :]


def curvatures(
    springs: BendTwistSprings, q: NDArray[np.float64], frames: FrameSet, layout: DofLayout
) -> NDArray[np.float64]:
    """Material curvatures ``(κ⁽¹⁾, κ⁽²⁾)`` per bend-twist spring."""
    if len(springs) == 0:
        return np.zeros((0, 2))
    g = _stencil_geometry(springs, q, frames, layout)
    _, _, _, _, _, kb = _edge_terms(g)
    return np.stack([0.5 * _dot(kb, g.m2e + g.m2f), -0.5 * _dot(kb, g.m1e + g.m1f)], axis=1)


def twists(
    springs: BendTwistSprings, q: NDArray[np.float64], frames: FrameSet, layout: DofLayout
) -> NDArray[np.float64]:
    """Integrated twist ``θᶠ − θᵉ + Δm_ref`` per bend-twist spring."""
    if len(springs) == 0:
        return np.zeros(0)
    g = _stencil_geometry(springs, q, frames, layout)
    return g.theta_f - g.theta_e + frames.ref_twist


def bend_twist_state(
    springs: BendTwistSprings, q: NDArray[np.float64], frames: FrameSet, layout: DofLayout
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    return curvatures(springs, q, frames, layout), twists(springs, q, frames, layout)


def bend_contribution(
    springs: BendTwistSprings,
    q: NDArray[np.float64],
    frames: FrameSet,
    layout: DofLayout,
    hessian: bool = True,
) -> EnergyContribution:
    """``E = ½ Σⱼ EI (κ⁽ʲ⁾ − κ̄⁽ʲ⁾)² / Δl`` over the 11 stencil DOFs (3 nodes, 2 θ)."""
    n = len(springs)
    if n == 0:
        return EnergyContribution.empty(11)
    g = _stencil_geometry(springs, q, frames, layout)
    norm_e, norm_f, te, tf, chi, kb = _edge_terms(g)
    m1e, m2e, m1f, m2f = g.m1e, g.m2e, g.m1f, g.m2f

    tilde_t = (te + tf) / chi[:, None]
    tilde_d1 = (m1e + m1f) / chi[:, None]
    tilde_d2 = (m2e + m2f) / chi[:, None]
    kappa1 = 0.5 * _dot(kb, m2e + m2f)
    kappa2 = -0.5 * _dot(kb, m1e + m1f)

    tf_c_d2t = np.cross(tf, tilde_d2)
    te_c_d2t = np.cross(te, tilde_d2)
    tf_c_d1t = np.cross(tf, tilde_d1)
    te_c_d1t = np.cross(te, tilde_d1)

    dk1_de = (-kappa1[:, None] * tilde_t + tf_c_d2t) / norm_e[:, None]
    dk1_df = (-kappa1[:, None] * tilde_t - te_c_d2t) / norm_f[:, None]
    dk2_de = (-kappa2[:, None] * tilde_t - tf_c_d1t) / norm_e[:, None]
    dk2_df = (-kappa2[:, None] * tilde_t + te_c_d1t) / norm_f[:, None]

    grad_kappa = np.zeros((n, 11, 2))
    grad_kappa[:, 0:3, 0] = -dk1_de
    grad_kappa[:, 3:6, 0] = dk1_de - dk1_df
    grad_kappa[:, 6:9, 0] = dk1_df
    grad_kappa[:, 0:3, 1] = -dk2_de
    grad_kappa[:, 3:6, 1] = dk2_de - dk2_df
    grad_kappa[:, 6:9, 1] = dk2_df
    grad_kappa[:, 9, 0] = -0.5 * _dot(kb, m1e)
    grad_kappa[:, 10, 0] = -0.5 * _dot(kb, m1f)
    grad_kappa[:, 9, 1] = -0.5 * _dot(kb, m2e)
    grad_kappa[:, 10, 1] = -0.5 * _dot(kb, m2f)

    EI = np.stack([springs.EI, springs.EI], axis=1)
    dkappa = np.stack([kappa1, kappa2], axis=1) - springs.kappa_bar
    vl = springs.voronoi_length
    energy = 0.5 * np.sum(EI * dkappa**2, axis=1) / vl
    coeff = EI * dkappa / vl[:, None]
    grad = np.einsum("sij,sj->si", grad_kappa, coeff)

    hess = None
    if hessian:
        ddk1, ddk2 = _kappa_hessians(
            norm_e, norm_f, te, tf, chi, kb, tilde_t, kappa1, kappa2, m1e, m2e, m1f, m2f,
            tilde_d1, tilde_d2, tf_c_d2t, te_c_d2t, tf_c_d1t, te_c_d1t,
        )  # fmt: skip
        hess = np.einsum("sij,sj,skj->sik", grad_kappa, EI / vl[:, None], grad_kappa)
        hess += coeff[:, 0, None, None] * ddk1 + coeff[:, 1, None, None] * ddk2

    _resign(g, grad, hess)
    return EnergyContribution(energy=energy, gradient=grad, hessian=hess, indices=g.indices)


def _assign_blocks(
    out: NDArray[np.float64],
    de2: NDArray[np.float64],
    dedf: NDArray[np.float64],
    df2: NDArray[np.float64],
    dt1: NDArray[np.float64],
    dt2: NDArray[np.float64],
    coupled: tuple[tuple[NDArray[np.float64], NDArray[np.float64]], tuple[NDArray[np.float64], NDArray[np.float64]]],
) -> None:
    dfde = dedf.transpose(0, 2, 1)
    out[:, :3, :3] = de2
    out[:, :3, 3:6] = -de2 + dedf
    out[:, :3, 6:9] = -dedf
    out[:, 3:6, :3] = -de2 + dfde
    out[:, 3:6, 3:6] = de2 - dedf - dfde + df2
    out[:, 3:6, 6:9] = dedf - df2
    out[:, 6:9, :3] = -dfde
    out[:, 6:9, 3:6] = dfde - df2
    out[:, 6:9, 6:9] = df2
    out[:, 9, 9] = dt1
    out[:, 10, 10] = dt2
    for col, (d_e, d_f) in zip((9, 10), coupled):
        block = np.concatenate([-d_e, d_e - d_f, d_f], axis=1)
        out[:, :9, col] = block
        out[:, col, :9] = block


def _kappa_hessians(
    norm_e: NDArray[np.float64],
    norm_f: NDArray[np.float64],
    te: NDArray[np.float64],
    tf: NDArray[np.float64],
    chi: NDArray[np.float64],
    kb: NDArray[np.float64],
    tilde_t: NDArray[np.float64],
    kappa1: NDArray[np.float64],
    kappa2: NDArray[np.float64],
    m1e: NDArray[np.float64],
    m2e: NDArray[np.float64],
    m1f: NDArray[np.float64],
    m2f: NDArray[np.float64],
    tilde_d1: NDArray[np.float64],
    tilde_d2: NDArray[np.float64],
    tf_c_d2t: NDArray[np.float64],
    te_c_d2t: NDArray[np.float64],
    tf_c_d1t: NDArray[np.float64],
    te_c_d1t: NDArray[np.float64],
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    n = len(chi)
    eye = np.eye(3)[None]
    ne2 = (norm_e**2)[:, None, None]
    nf2 = (norm_f**2)[:, None, None]
    nef = (norm_e * norm_f)[:, None, None]
    c = chi[:, None, None]
    k1 = kappa1[:, None, None]
    k2 = kappa2[:, None, None]
    tt_tt = _outer(tilde_t, tilde_t)
    proj_e = eye - _outer(te, te)
    proj_f = eye - _outer(tf, tf)
    te_tf = _outer(te, tf)

    d2k1_de2 = (
        (2 * k1 * tt_tt - _outer(tf_c_d2t, tilde_t) - _outer(tilde_t, tf_c_d2t)) / ne2
        - k1 / (c * ne2) * proj_e
        + _outer(kb, m2e) / (2 * ne2)
    )
    d2k1_df2 = (
        (2 * k1 * tt_tt + _outer(te_c_d2t, tilde_t) + _outer(tilde_t, te_c_d2t)) / nf2
        - k1 / (c * nf2) * proj_f
        + _outer(kb, m2f) / (2 * nf2)
    )
    d2k1_dedf = -k1 / (c * nef) * (eye + te_tf) + (
        2 * k1 * tt_tt - _outer(tf_c_d2t, tilde_t) + _outer(tilde_t, te_c_d2t) - _skew(tilde_d2)
    ) / nef

    d2k2_de2 = (
        (2 * k2 * tt_tt + _outer(tf_c_d1t, tilde_t) + _outer(tilde_t, tf_c_d1t)) / ne2
        - k2 / (c * ne2) * proj_e
        - _outer(kb, m1e) / (2 * ne2)
    )
    d2k2_df2 = (
        (2 * k2 * tt_tt - _outer(te_c_d1t, tilde_t) - _outer(tilde_t, te_c_d1t)) / nf2
        - k2 / (c * nf2) * proj_f
        - _outer(kb, m1f) / (2 * nf2)
    )
    d2k2_dedf = -k2 / (c * nef) * (eye + te_tf) + (
        2 * k2 * tt_tt + _outer(tf_c_d1t, tilde_t) - _outer(tilde_t, te_c_d1t) + _skew(tilde_d1)
    ) / nef

    def coupled_e(m: NDArray[np.float64]) -> NDArray[np.float64]:
        return (0.5 * kb * _dot(m, tilde_t)[:, None] - np.cross(tf, m) / chi[:, None]) / norm_e[:, None]

    def coupled_f(m: NDArray[np.float64]) -> NDArray[np.float64]:
        return (0.5 * kb * _dot(m, tilde_t)[:, None] + np.cross(te, m) / chi[:, None]) / norm_f[:, None]

    ddk1 = np.zeros((n, 11, 11))
    ddk2 = np.zeros((n, 11, 11))
    _assign_blocks(
        ddk1, d2k1_de2, d2k1_dedf, d2k1_df2,
        -0.5 * _dot(kb, m2e), -0.5 * _dot(kb, m2f),
        ((coupled_e(m1e), coupled_f(m1e)), (coupled_e(m1f), coupled_f(m1f))),
    )  # fmt: skip
    _assign_blocks(
        ddk2, d2k2_de2, d2k2_dedf, d2k2_df2,
        0.5 * _dot(kb, m1e), 0.5 * _dot(kb, m1f),
        ((coupled_e(m2e), coupled_f(m2e)), (coupled_e(m2f), coupled_f(m2f))),
    )  # fmt: skip
    return ddk1, ddk2


def twist_contribution(
    springs: BendTwistSprings,
    q: NDArray[np.float64],
    frames: FrameSet,
    layout: DofLayout,
    hessian: bool = True,
) -> EnergyContribution:
    """``E = ½ (GJ/Δl)(τ − τ̄)²`` with ``τ = θᶠ − θᵉ + Δm_ref``."""
    n = len(springs)
    if n == 0:
        return EnergyContribution.empty(11)
    g = _stencil_geometry(springs, q, frames, layout)
    norm_e, norm_f, te, tf, chi, kb = _edge_terms(g)
    tilde_t = (te + tf) / chi[:, None]

    grad_twist = np.zeros((n, 11))
    grad_twist[:, 0:3] = -0.5 * kb / norm_e[:, None]
    grad_twist[:, 6:9] = 0.5 * kb / norm_f[:, None]
    grad_twist[:, 3:6] = -(grad_twist[:, 0:3] + grad_twist[:, 6:9])
    grad_twist[:, 9] = -1.0
    grad_twist[:, 10] = 1.0

    twist = g.theta_f - g.theta_e + frames.ref_twist
    dtwist = twist - springs.twist_bar
    stiff = springs.GJ / springs.voronoi_length
    energy = 0.5 * stiff * dtwist**2
    grad = (stiff * dtwist)[:, None] * grad_twist

    hess = None
    if hessian:
        ne2 = (norm_e**2)[:, None, None]
        nf2 = (norm_f**2)[:, None, None]
        nef = (norm_e * norm_f)[:, None, None]
        c2 = (2.0 / chi)[:, None, None]
        d2m_de2 = -0.5 / ne2 * (_outer(kb, te + tilde_t) + c2 * _skew(tf))
        d2m_df2 = -0.5 / nf2 * (_outer(kb, tf + tilde_t) + c2 * _skew(te))
        d2m_dedf = 0.5 / nef * (c2 * _skew(te) - _outer(kb, tilde_t))
        d2m_dfde = 0.5 / nef * (-c2 * _skew(tf) - _outer(kb, tilde_t))

        dd = np.zeros((n, 11, 11))
        dd[:, 0:3, 0:3] = d2m_de2
        dd[:, 0:3, 3:6] = -d2m_de2 + d2m_dedf
        dd[:, 3:6, 0:3] = -d2m_de2 + d2m_dfde
        dd[:, 3:6, 3:6] = d2m_de2 - (d2m_dedf + d2m_dfde) + d2m_df2
        dd[:, 0:3, 6:9] = -d2m_dedf
        dd[:, 6:9, 0:3] = -d2m_dfde
        dd[:, 6:9, 3:6] = d2m_dfde - d2m_df2
        dd[:, 3:6, 6:9] = d2m_dedf - d2m_df2
        dd[:, 6:9, 6:9] = d2m_df2
        hess = stiff[:, None, None] * (dtwist[:, None, None] * dd + _outer(grad_twist, grad_twist))

    _resign(g, grad, hess)
    return EnergyContribution(energy=energy, gradient=grad, hessian=hess, indices=g.indices)
