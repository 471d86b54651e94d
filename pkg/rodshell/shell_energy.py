"""Shell bending: four-node hinges and per-triangle mid-edge normal elements."""

from __future__ import annotations

from typing import TYPE_CHECKING

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .frames import SingularConfigurationError
from .rod_energy import EnergyContribution, _dot, _outer

if TYPE_CHECKING:
    from .topology import DofLayout, HingeSprings, MidedgeElements

_PROJECTION_MIN = 1e-8


# --- hinge -------------------------------------------------------------------


def hinge_angle(x0: ArrayLike, x1: ArrayLike, x2: ArrayLike, x3: ArrayLike) -> NDArray[np.float64]:
    """Signed dihedral angle of the hinge on edge ``x0→x1`` with wings ``x2`` and ``x3``.

    Zero when flat; the sign follows the right-hand rule about ``x1 − x0``.
    """
    x0, x1, x2, x3 = (np.asarray(a, dtype=float) for a in (x0, x1, x2, x3))
    e0 = x1 - x0
    c0 = np.cross(e0, x2 - x0)
    c1 = np.cross(x3 - x0, e0)
    if np.any(np.linalg.norm(c0, axis=-1) == 0.0) or np.any(np.linalg.norm(c1, axis=-1) == 0.0):
        raise SingularConfigurationError("Invalid hinge: degenerate triangle.")
    w = np.cross(c0, c1)
    angle = np.arctan2(np.linalg.norm(w, axis=-1), _dot(c0, c1))
    return np.where(_dot(e0, w) < 0.0, -angle, angle)


def hinge_angle_derivatives(
    x0: NDArray[np.float64], x1: NDArray[np.float64], x2: NDArray[np.float64], x3: NDArray[np.float64]
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Gradient ``(H, 12)`` and Hessian ``(H, 12, 12)`` of :func:`hinge_angle`."""
    n = x0.shape[0]
    e0, e1, e2, e3, e4 = x1 - x0, x2 - x0, x3 - x0, x2 - x1, x3 - x1
    l0, l1, l2, l3, l4 = (np.linalg.norm(e, axis=-1, keepdims=True) for e in (e0, e1, e2, e3, e4))

    cos1 = _dot(e0, e1)[:, None] / (l0 * l1)
    cos2 = _dot(e0, e2)[:, None] / (l0 * l2)
    cos3 = -_dot(e0, e3)[:, None] / (l0 * l3)
    cos4 = -_dot(e0, e4)[:, None] / (l0 * l4)
    sin1 = np.linalg.norm(np.cross(e0, e1), axis=-1, keepdims=True) / (l0 * l1)
    sin2 = np.linalg.norm(np.cross(e0, e2), axis=-1, keepdims=True) / (l0 * l2)
    sin3 = -np.linalg.norm(np.cross(e0, e3), axis=-1, keepdims=True) / (l0 * l3)
    sin4 = -np.linalg.norm(np.cross(e0, e4), axis=-1, keepdims=True) / (l0 * l4)

    nn1 = np.cross(e0, e3)
    nn1 /= np.linalg.norm(nn1, axis=-1, keepdims=True)
    nn2 = -np.cross(e0, e4)
    nn2 /= np.linalg.norm(nn2, axis=-1, keepdims=True)

    h1, h2 = l0 * sin1, l0 * sin2
    h3, h4 = -l0 * sin3, -l0 * sin4
    h01, h02 = l1 * sin1, l2 * sin2

    grad = np.zeros((n, 12))
    grad[:, 0:3] = cos3 * nn1 / h3 + cos4 * nn2 / h4
    grad[:, 3:6] = cos1 * nn1 / h1 + cos2 * nn2 / h2
    grad[:, 6:9] = -nn1 / h01
    grad[:, 9:12] = -nn2 / h02

    m1 = np.cross(nn1, e1) / l1
    m2 = -np.cross(nn2, e2) / l2
    m3 = -np.cross(nn1, e3) / l3
    m4 = np.cross(nn2, e4) / l4
    m01 = -np.cross(nn1, e0) / l0
    m02 = np.cross(nn2, e0) / l0

    def scaled(s: NDArray[np.float64], a: NDArray[np.float64], b: NDArray[np.float64]) -> NDArray[np.float64]:
        return s[..., None] * _outer(a, b)

    def sym(mat: NDArray[np.float64]) -> NDArray[np.float64]:
        return mat + mat.transpose(0, 2, 1)

    m331 = scaled(cos3 / h3**2, m3, nn1)
    m311 = scaled(cos3 / (h3 * h1), m1, nn1)
    m131 = scaled(cos1 / (h1 * h3), m3, nn1)
    m3011 = scaled(cos3 / (h3 * h01), m01, nn1)
    m111 = scaled(cos1 / h1**2, m1, nn1)
    m1011 = scaled(cos1 / (h1 * h01), m01, nn1)
    m442 = scaled(cos4 / h4**2, m4, nn2)
    m422 = scaled(cos4 / (h4 * h2), m2, nn2)
    m242 = scaled(cos2 / (h2 * h4), m4, nn2)
    m4022 = scaled(cos4 / (h4 * h02), m02, nn2)
    m222 = scaled(cos2 / h2**2, m2, nn2)
    m2022 = scaled(cos2 / (h2 * h02), m02, nn2)
    b1 = scaled(1.0 / l0**2, nn1, m01)
    b2 = scaled(1.0 / l0**2, nn2, m02)
    n13 = scaled(1.0 / (h01 * h3), nn1, m3)
    n24 = scaled(1.0 / (h02 * h4), nn2, m4)
    n11 = scaled(1.0 / (h01 * h1), nn1, m1)
    n22 = scaled(1.0 / (h02 * h2), nn2, m2)
    n101 = scaled(1.0 / h01**2, nn1, m01)
    n202 = scaled(1.0 / h02**2, nn2, m02)

    hess = np.zeros((n, 12, 12))
    hess[:, 0:3, 0:3] = sym(m331) - b1 + sym(m442) - b2
    hess[:, 0:3, 3:6] = m311 + m131.transpose(0, 2, 1) + b1 + m422 + m242.transpose(0, 2, 1) + b2
    hess[:, 0:3, 6:9] = m3011 - n13
    hess[:, 0:3, 9:12] = m4022 - n24
    hess[:, 3:6, 3:6] = sym(m111) - b1 + sym(m222) - b2
    hess[:, 3:6, 6:9] = m1011 - n11
    hess[:, 3:6, 9:12] = m2022 - n22
    hess[:, 6:9, 6:9] = -sym(n101)
    hess[:, 9:12, 9:12] = -sym(n202)
    for r, c in ((3, 0), (6, 0), (9, 0), (6, 3), (9, 3)):
        hess[:, r : r + 3, c : c + 3] = hess[:, c : c + 3, r : r + 3].transpose(0, 2, 1)
    return grad, hess


def hinge_contribution(
    springs: HingeSprings, q: NDArray[np.float64], layout: DofLayout, hessian: bool = True
) -> EnergyContribution:
    """``E = ½ k_b (φ − φ̄)²`` over the twelve nodal DOFs of each hinge."""
    if len(springs) == 0:
        return EnergyContribution.empty(12)
    x = q[: layout.theta_offset].reshape(-1, 3)
    xs = [x[springs.nodes[:, k]] for k in range(4)]
    dphi = hinge_angle(*xs) - springs.phi_bar
    grad_phi, hess_phi = hinge_angle_derivatives(*xs)
    grad = (springs.kb * dphi)[:, None] * grad_phi
    hess = None
    if hessian:
        hess = springs.kb[:, None, None] * (_outer(grad_phi, grad_phi) + dphi[:, None, None] * hess_phi)
    return EnergyContribution(
        energy=0.5 * springs.kb * dphi**2,
        gradient=grad,
        hessian=hess,
        indices=layout.node_dofs(springs.nodes).reshape(-1, 12),
    )


# --- mid-edge ----------------------------------------------------------------


def _element_geometry(
    elements: MidedgeElements, x: NDArray[np.float64], tau0: NDArray[np.float64]
) -> tuple[NDArray[np.float64], ...]:
    """Unit normal, area, edge normals ``tᵏ = eᵏ × n`` and signed ``τᵏ`` per triangle."""
    p = x[elements.nodes]  # (T, 3 nodes, 3)
    cross = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    area2 = np.linalg.norm(cross, axis=1)
    if np.any(area2 <= 0.0):
        raise SingularConfigurationError(f"Invalid triangle {int(np.flatnonzero(area2 <= 0.0)[0])}: degenerate.")
    normal = cross / area2[:, None]
    edge_vec = p[:, [2, 0, 1]] - p[:, [1, 2, 0]]  # edge k runs from node k+1 to node k+2
    tangents = np.cross(edge_vec, normal[:, None, :])
    tau = elements.signs[:, :, None] * tau0[elements.edges]
    return normal, 0.5 * area2, tangents, tau


def midedge_coefficients(
    elements: MidedgeElements, x: NDArray[np.float64], xi: NDArray[np.float64], tau0: NDArray[np.float64]
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Per-edge shape-operator coefficients ``aᵏ = cᵏ(sᵏξᵏ − fᵏ)`` and the tangents ``tᵏ``."""
    normal, _, tangents, tau = _element_geometry(elements, x, tau0)
    c = _projection_scale(elements, tangents, tau)
    f = np.einsum("ti,tki->tk", normal, tau)
    return c * (elements.signs * xi[elements.edges] - f), tangents


def _projection_scale(
    elements: MidedgeElements, tangents: NDArray[np.float64], tau: NDArray[np.float64]
) -> NDArray[np.float64]:
    t_hat = tangents / np.linalg.norm(tangents, axis=2, keepdims=True)
    proj = np.einsum("tki,tki->tk", t_hat, tau)
    if np.any(np.abs(proj) < _PROJECTION_MIN):
        bad = int(np.argwhere(np.abs(proj) < _PROJECTION_MIN)[0, 0])
        raise SingularConfigurationError(f"Invalid mid-edge element {bad}: edge normal perpendicular to τ⁰.")
    return 1.0 / (elements.rest_area[:, None] * elements.rest_edge_length * proj)


def midedge_shape_operator(
    elements: MidedgeElements, x: NDArray[np.float64], xi: NDArray[np.float64], tau0: NDArray[np.float64]
) -> NDArray[np.float64]:
    """Per-triangle ``Λ = Σₖ aᵏ tᵏ⊗tᵏ``, shape ``(T, 3, 3)``."""
    coeff, tangents = midedge_coefficients(elements, x, xi, tau0)
    return np.einsum("tk,tki,tkj->tij", coeff, tangents, tangents)


def midedge_contribution(
    elements: MidedgeElements,
    q: NDArray[np.float64],
    tau0: NDArray[np.float64],
    layout: DofLayout,
    hessian: bool = True,
) -> EnergyContribution:
    """``E = k_b Ā [(1−ν) Tr((Λ−Λ̄)²) + ν (TrΛ − TrΛ̄)²]`` over 9 nodal DOFs and 3 ξ.

    Derivatives flow only through ``fᵏ = n·τᵏ`` and ξ; ``cᵏ`` and ``tᵏ`` are held at
    their current values, and the position-position block uses the symmetrized
    second derivative of ``fᵏ`` about the frozen tangents.
    """
    n_t = len(elements)
    if n_t == 0:
        return EnergyContribution.empty(12)
    x = q[: layout.theta_offset].reshape(-1, 3)
    xi = q[layout.xi_offset : layout.xi_offset + layout.n_xi]
    normal, area, tangents, tau = _element_geometry(elements, x, tau0)
    c = _projection_scale(elements, tangents, tau)
    f = np.einsum("ti,tki->tk", normal, tau)
    s = elements.signs
    d = c * (s * xi[elements.edges] - f) - elements.coeff_bar

    gram = np.einsum("tki,tli->tkl", tangents, tangents) ** 2
    l2 = np.einsum("tki,tki->tk", tangents, tangents)
    nu = elements.nu
    quad = (1.0 - nu) * gram + nu * _outer(l2, l2)
    scale = elements.kb * elements.rest_area
    energy = scale * np.einsum("tk,tkl,tl->t", d, quad, d)

    # ∂fᵏ/∂x_m = (τᵏ·tᵐ) n / 2A
    tau_t = np.einsum("tki,tmi->tkm", tau, tangents) / (2.0 * area)[:, None, None]
    jac = np.zeros((n_t, 3, 12))
    jac[:, :, :9] = -(c[:, :, None, None] * tau_t[:, :, :, None] * normal[:, None, None, :]).reshape(n_t, 3, 9)
    jac[:, [0, 1, 2], [9, 10, 11]] = c * s

    weights = 2.0 * scale[:, None] * np.einsum("tkl,tl->tk", quad, d)
    grad = np.einsum("tk,tkj->tj", weights, jac)

    hess = None
    if hessian:
        hess = 2.0 * scale[:, None, None] * np.einsum("tki,tkl,tlj->tij", jac, quad, jac)
        # Σₖ wₖ ∂²aᵏ with ∂²fᵏ/∂x_a∂x_b = (τᵏ·tᵃ)(n⊗tᵇ + tᵇ⊗n) / 4A²
        alpha = -np.einsum("tk,tk,tka->ta", weights, c, tau_t) / (2.0 * area)[:, None]
        sym = _outer(normal[:, None, :], tangents) + _outer(tangents, normal[:, None, :])  # (T, b, 3, 3)
        block = alpha[:, :, None, None, None] * sym[:, None, :, :, :]  # (T, a, b, 3, 3)
        xx = block.transpose(0, 1, 3, 2, 4).reshape(n_t, 9, 9)
        hess[:, :9, :9] += 0.5 * (xx + xx.transpose(0, 2, 1))

    idx = np.concatenate([layout.node_dofs(elements.nodes).reshape(-1, 9), layout.xi_dofs(elements.edges)], axis=1)
    return EnergyContribution(energy=energy, gradient=grad, hessian=hess, indices=idx)
