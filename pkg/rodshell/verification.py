"""Independent checks: finite-difference derivatives, Euler–Bernoulli cantilevers, mesh
dependence, locomotion properties and rigid-body deviation.

The oracles here re-derive what they compare against (beam formulas, a frozen-coefficient
mid-edge energy, SVD alignment) rather than calling back into the kernels they check.
"""

from __future__ import annotations

import csv
import logging
import math
from collections.abc import Callable, Iterable, Sequence
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np
import scipy.sparse as sp
from numpy.typing import ArrayLike, NDArray

from .config import ContactParams, FloorParams, MaterialParams, SphereObstacle
from .contact import assemble_imc
from .environment import (
    aero_drag,
    floor_contributions,
    gravity_contribution,
    rft_force,
    sphere_obstacle,
    viscous_damping,
)
from .frames import init_reference_frames, snapshot_tau0, time_update_frames
from .geometry_io import read_summary
from .integrator import solve_static
from .meshes import MESH_FAMILIES
from .rod_energy import EnergyContribution, bend_contribution, stretch_contribution, twist_contribution
from .runner import run_scenario
from .scenarios import build_scenario, rod_cantilever, shell_cantilever
from .shell_energy import hinge_contribution, midedge_contribution
from .topology import DofLayout, MeshTopology, build_springs, build_topology, nodal_lengths

log = logging.getLogger("rodshell.verification")

GRADIENT_TOLERANCE = 1e-5
HESSIAN_TOLERANCE = 1e-4

# Relative Euler–Bernoulli error allowed per bending model
CANTILEVER_TOLERANCE = {"rod": 0.05, "hinge": 0.15, "midedge": 0.15}

Derivatives = tuple[float, NDArray[np.float64], NDArray[np.float64]]


# --- finite differences --------------------------------------------------------


@dataclass
class FdReport:
    """Worst relative FD errors over the samples of one energy or force.

    ``gradient_error`` is NaN for dissipative forces (no energy to differentiate).
    ``ungated_error`` covers Hessian entries reported but excluded from the pass/fail gate.
    """

    name: str
    gradient_error: float = float("nan")
    hessian_error: float = 0.0
    ungated_error: float = float("nan")
    worst_sample: int = 0
    samples: int = 1

    def __post_init__(self) -> None:
        for value in (self.gradient_error, self.hessian_error, self.ungated_error):
            if value < 0:
                raise ValueError(f"Invalid FD error: {value!r}. Must be >= 0.")

    def passed(self, gradient_tol: float = GRADIENT_TOLERANCE, hessian_tol: float = HESSIAN_TOLERANCE) -> bool:
        grad_ok = math.isnan(self.gradient_error) or self.gradient_error <= gradient_tol
        return grad_ok and self.hessian_error <= hessian_tol


def _relative(approx: NDArray[np.float64], exact: NDArray[np.float64]) -> float:
    if approx.size == 0:
        return 0.0
    scale = max(float(np.max(np.abs(exact))), float(np.max(np.abs(approx))), 1e-300)
    return float(np.max(np.abs(approx - exact))) / scale


def fd_check(
    evaluate: Callable[[NDArray[np.float64]], Derivatives],
    q: ArrayLike,
    frozen: Iterable[int] = (),
    *,
    name: str = "energy",
    conservative: bool = True,
    energy: Callable[[NDArray[np.float64]], float] | None = None,
    hessian_from: str = "gradient",
    gated: NDArray[np.bool_] | None = None,
    step: float | None = None,
) -> FdReport:
    """Compare ``evaluate(q) -> (E, ∇E, ∇²E)`` against central differences.

    Gradients are differenced from ``energy`` (``evaluate``'s energy by default). Hessians
    are differenced from the analytic gradient, or with ``hessian_from="energy"`` from
    second differences of ``energy``. DOFs in ``frozen`` are neither perturbed nor compared.
    """
    q = np.asarray(q, dtype=float)
    n = len(q)
    live = np.setdiff1d(np.arange(n), np.asarray(list(frozen), dtype=np.int64))
    energy_fn = energy or (lambda x: evaluate(x)[0])
    e0, grad, hess = evaluate(q)
    if not np.isfinite(e0) or not np.all(np.isfinite(grad)):
        raise ValueError(f"Invalid {name} evaluation: non-finite energy or gradient.")
    scale = max(float(np.max(np.abs(q))), 1e-3)

    report = FdReport(name=name)
    if conservative:
        h = step or 1e-7 * scale
        fd_grad = np.zeros(len(live))
        for k, i in enumerate(live):
            qp, qm = q.copy(), q.copy()
            qp[i] += h
            qm[i] -= h
            ep, em = energy_fn(qp), energy_fn(qm)
            if not (np.isfinite(ep) and np.isfinite(em)):
                raise ValueError(f"Invalid {name} evaluation: non-finite energy at DOF {int(i)}.")
            fd_grad[k] = (ep - em) / (2.0 * h)
        report.gradient_error = _relative(fd_grad, grad[live])

    fd_hess = np.zeros((len(live), len(live)))
    if hessian_from == "energy":
        h = step or 1e-4 * scale
        for a, i in enumerate(live):
            for b, j in enumerate(live[a:], start=a):
                total = 0.0
                for si, sj, sign in ((1, 1, 1), (1, -1, -1), (-1, 1, -1), (-1, -1, 1)):
                    qs = q.copy()
                    qs[i] += si * h
                    qs[j] += sj * h
                    total += sign * energy_fn(qs)
                fd_hess[a, b] = fd_hess[b, a] = total / (4.0 * h * h)
    else:
        h = step or 1e-7 * scale
        for k, j in enumerate(live):
            qp, qm = q.copy(), q.copy()
            qp[j] += h
            qm[j] -= h
            fd_hess[:, k] = (evaluate(qp)[1][live] - evaluate(qm)[1][live]) / (2.0 * h)

    exact = hess[np.ix_(live, live)]
    mask = np.ones_like(exact, dtype=bool) if gated is None else gated[np.ix_(live, live)]
    report.hessian_error = _relative(fd_hess[mask], exact[mask])
    if not np.all(mask):
        report.ungated_error = _relative(fd_hess[~mask], exact[~mask])
    return report


def merge_reports(name: str, reports: Sequence[FdReport]) -> FdReport:
    """Worst case over per-sample reports; ``worst_sample`` indexes the largest gated error."""
    if not reports:
        raise ValueError(f"Invalid FD run {name!r}: no samples.")

    def worst(attr: str) -> float:
        values = [getattr(r, attr) for r in reports if not math.isnan(getattr(r, attr))]
        return max(values) if values else float("nan")

    scores = [max(0.0 if math.isnan(r.gradient_error) else r.gradient_error / GRADIENT_TOLERANCE,
                  r.hessian_error / HESSIAN_TOLERANCE) for r in reports]
    return FdReport(
        name=name,
        gradient_error=worst("gradient_error"),
        hessian_error=worst("hessian_error"),
        ungated_error=worst("ungated_error"),
        worst_sample=int(np.argmax(scores)),
        samples=len(reports),
    )


# --- random stencils -------------------------------------------------------------


@dataclass
class _Case:
    evaluate: Callable[[NDArray[np.float64]], Derivatives]
    q: NDArray[np.float64]
    conservative: bool = True
    energy: Callable[[NDArray[np.float64]], float] | None = None
    hessian_from: str = "gradient"
    gated: NDArray[np.bool_] | None = None


def _dense(contribution: EnergyContribution, size: int) -> Derivatives:
    grad = contribution.gradient_vector(size)
    rows, cols, vals = contribution.hessian_triplets()
    hess = sp.coo_matrix((vals, (rows, cols)), shape=(size, size)).toarray()
    return contribution.total, grad, hess


def _random_unit(rng: np.random.Generator) -> NDArray[np.float64]:
    v = rng.normal(size=3)
    return v / np.linalg.norm(v)


def _random_polyline(rng: np.random.Generator, n_nodes: int, length: float = 0.1) -> NDArray[np.float64]:
    """A wiggly open curve with no sharp reversals."""
    d = _random_unit(rng)
    pts = [np.zeros(3)]
    for _ in range(n_nodes - 1):
        pts.append(pts[-1] + length * rng.uniform(0.5, 1.5) * d)
        d = d + 0.6 * rng.normal(size=3)
        d /= np.linalg.norm(d)
    return np.array(pts)


def _rod_setup(rng: np.random.Generator, n_nodes: int = 3) -> tuple[MeshTopology, Any, DofLayout, NDArray, Any]:
    natural = _random_polyline(rng, n_nodes)
    edges = np.column_stack([np.arange(n_nodes - 1), np.arange(1, n_nodes)])
    topology = build_topology(natural, edges)
    material = MaterialParams(youngs_rod=1e6, r0=1e-2)
    springs = build_springs(topology, material)
    layout = DofLayout.from_topology(topology)
    q_nat = np.concatenate([natural.ravel(), np.zeros(topology.n_twist_edges)])
    q = q_nat.copy()
    q[: 3 * n_nodes] += 0.015 * rng.normal(size=3 * n_nodes)
    q[layout.theta_offset :] = rng.uniform(-0.5, 0.5, size=topology.n_twist_edges)
    base = time_update_frames(init_reference_frames(topology, q_nat), q, topology)
    return topology, springs, layout, q, base


def _patch(rng: np.random.Generator) -> tuple[NDArray[np.float64], NDArray[np.int64]]:
    """Two triangles sharing edge (0, 1), folded by a random angle."""
    fold = rng.uniform(-0.6, 0.6)
    nodes = np.array(
        [
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.5, 0.8, 0.0],
            [0.5, -0.8 * math.cos(fold), 0.8 * math.sin(fold)],
        ]
    )
    nodes += 0.05 * rng.normal(size=nodes.shape)
    return nodes, np.array([[0, 1, 2], [1, 0, 3]])


def _stretch_case(rng: np.random.Generator) -> _Case:
    topology, springs, layout, q, _ = _rod_setup(rng)
    return _Case(lambda x: _dense(stretch_contribution(springs.stretch, x), layout.size), q)


def _bend_case(rng: np.random.Generator) -> _Case:
    topology, springs, layout, q, base = _rod_setup(rng, 4)
    return _Case(
        lambda x: _dense(
            bend_contribution(springs.bend_twist, x, time_update_frames(base, x, topology), layout), layout.size
        ),
        q,
    )


def _twist_case(rng: np.random.Generator) -> _Case:
    topology, springs, layout, q, base = _rod_setup(rng, 4)
    return _Case(
        lambda x: _dense(
            twist_contribution(springs.bend_twist, x, time_update_frames(base, x, topology), layout), layout.size
        ),
        q,
    )


def _hinge_case(rng: np.random.Generator) -> _Case:
    nodes, tris = _patch(rng)
    topology = build_topology(nodes, None, tris)
    springs = build_springs(topology, MaterialParams(youngs_shell=1e6, h=1e-2), "hinge")
    layout = DofLayout.from_topology(topology, "hinge")
    q = nodes.ravel() + 0.05 * rng.normal(size=nodes.size)
    return _Case(lambda x: _dense(hinge_contribution(springs.hinge, x, layout), layout.size), q)


def midedge_frozen_energy(
    elements: Any, q: NDArray[np.float64], tau0: NDArray[np.float64], layout: DofLayout, q_frozen: NDArray[np.float64]
) -> float:
    """Mid-edge bending energy with the projection scales and edge normals held at ``q_frozen``.

    Built from explicit 3×3 shape operators, independently of the kernel's Gram-matrix form.
    """
    def geometry(points: NDArray[np.float64]) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        cross = np.cross(points[:, 1] - points[:, 0], points[:, 2] - points[:, 0])
        normal = cross / np.linalg.norm(cross, axis=1, keepdims=True)
        edge = points[:, [2, 0, 1]] - points[:, [1, 2, 0]]
        return normal, np.cross(edge, normal[:, None, :])

    x = q[: layout.theta_offset].reshape(-1, 3)
    x_frozen = q_frozen[: layout.theta_offset].reshape(-1, 3)
    xi = q[layout.xi_offset : layout.xi_offset + layout.n_xi]
    tau = elements.signs[:, :, None] * tau0[elements.edges]
    _, tangents = geometry(x_frozen[elements.nodes])
    t_hat = tangents / np.linalg.norm(tangents, axis=2, keepdims=True)
    c = 1.0 / (elements.rest_area[:, None] * elements.rest_edge_length * np.einsum("tki,tki->tk", t_hat, tau))
    normal, _ = geometry(x[elements.nodes])
    f = np.einsum("ti,tki->tk", normal, tau)
    coeff = c * (elements.signs * xi[elements.edges] - f)
    total = 0.0
    for k in range(len(elements)):
        outer = [np.outer(t, t) for t in tangents[k]]
        shape = sum(a * o for a, o in zip(coeff[k], outer))
        shape_bar = sum(a * o for a, o in zip(elements.coeff_bar[k], outer))
        diff = shape - shape_bar
        trace = np.trace(diff)
        total += elements.kb[k] * elements.rest_area[k] * (
            (1.0 - elements.nu) * np.trace(diff @ diff) + elements.nu * trace * trace
        )
    return float(total)


def _midedge_case(rng: np.random.Generator) -> _Case:
    nodes, tris = _patch(rng)
    topology = build_topology(nodes, None, tris)
    springs = build_springs(topology, MaterialParams(youngs_shell=1e6, h=1e-2), "midedge")
    layout = DofLayout.from_topology(topology, "midedge")
    _, tau0 = snapshot_tau0(topology, nodes)
    q = np.concatenate([nodes.ravel() + 0.05 * rng.normal(size=nodes.size), rng.uniform(-0.2, 0.2, layout.n_xi)])
    gated = np.ones((layout.size, layout.size), dtype=bool)
    gated[: layout.theta_offset, : layout.theta_offset] = False
    q_frozen = q.copy()
    return _Case(
        lambda x: _dense(midedge_contribution(springs.midedge, x, tau0, layout), layout.size),
        q,
        energy=lambda x: midedge_frozen_energy(springs.midedge, x, tau0, layout, q_frozen),
        hessian_from="energy",
        gated=gated,
    )


def _gravity_case(rng: np.random.Generator) -> _Case:
    weight = rng.normal(size=(3, 3))
    q = rng.normal(size=9)
    return _Case(lambda x: _dense(gravity_contribution(weight, x), 9), q)


_DT = 1e-2
_SLIP = 1e-2


def _moving(rng: np.random.Generator, q: NDArray[np.float64], n_nodes: int) -> NDArray[np.float64]:
    q_prev = q.copy()
    q_prev[: 3 * n_nodes] -= _DT * 0.05 * rng.normal(size=3 * n_nodes)
    return q_prev


def _floor_case(rng: np.random.Generator, friction: bool) -> _Case:
    material = MaterialParams(r0=1e-3)
    floor = FloorParams(enabled=True, stiffness=20.0, delta=1e-3, mu=0.25, slip_tolerance=_SLIP)
    nodes = np.column_stack([np.linspace(0.0, 0.1, 3), np.zeros(3), np.zeros(3)])
    nodes[:, 1] += 0.01 * rng.normal(size=3)
    nodes[:, 2] = material.r0 + rng.uniform(-0.8, 0.8, size=3) * floor.delta
    topology = build_topology(nodes, [[0, 1], [1, 2]])
    size = DofLayout.from_topology(topology).size
    q = np.concatenate([nodes.ravel(), np.zeros(topology.n_twist_edges)])
    q_prev = _moving(rng, q, 3)
    pick = 1 if friction else 0
    return _Case(
        lambda x: _dense(floor_contributions(topology, material, floor, x, q_prev, _DT)[pick], size),
        q,
        conservative=not friction,
    )


def _crossing_edges(rng: np.random.Generator, gap: float) -> NDArray[np.float64]:
    """Two unit-scale segments whose closest points are interior and ``gap`` apart."""
    a = _random_unit(rng)
    b = _random_unit(rng)
    while abs(float(a @ b)) > 0.9:
        b = _random_unit(rng)
    normal = np.cross(a, b)
    normal /= np.linalg.norm(normal)
    half = 0.03
    sa, sb = rng.uniform(-0.3, 0.3, size=2) * half
    ca = -sa * a
    cb = gap * normal - sb * b
    return np.array([ca - half * a, ca + half * a, cb - half * b, cb + half * b])


def _contact_case(rng: np.random.Generator, friction: bool) -> _Case:
    material = MaterialParams(r0=1e-3)
    params = ContactParams(enabled=True, stiffness=20.0, delta=1e-3, mu=0.25, slip_tolerance=_SLIP)
    nodes = _crossing_edges(rng, 2.0 * material.r0 + rng.uniform(-0.8, 0.8) * params.delta)
    topology = build_topology(nodes, [[0, 1], [2, 3]])
    size = DofLayout.from_topology(topology).size
    q = np.concatenate([nodes.ravel(), np.zeros(topology.n_twist_edges)])
    q_prev = _moving(rng, q, 4)

    def evaluate(x: NDArray[np.float64]) -> Derivatives:
        imc = assemble_imc(topology, x, q_prev, _DT, params, material)
        return _dense(imc.friction if friction else imc.contact, size)

    return _Case(evaluate, q, conservative=not friction)


def _viscous_case(rng: np.random.Generator) -> _Case:
    topology, _, layout, q, _ = _rod_setup(rng)
    q_prev = _moving(rng, q, topology.n_nodes)
    lengths = nodal_lengths(topology)
    return _Case(lambda x: _dense(viscous_damping(lengths, 0.5, x, q_prev, _DT), layout.size), q, conservative=False)


def _rft_case(rng: np.random.Generator) -> _Case:
    topology, _, layout, q, _ = _rod_setup(rng)
    q_prev = _moving(rng, q, topology.n_nodes)
    return _Case(lambda x: _dense(rft_force(topology, 0.01, 0.1, x, q_prev, _DT), layout.size), q, conservative=False)


def _drag_case(rng: np.random.Generator) -> _Case:
    nodes, tris = _patch(rng)
    topology = build_topology(nodes, None, tris)
    q = nodes.ravel().copy()
    q_prev = _moving(rng, q, 4)
    return _Case(lambda x: _dense(aero_drag(topology, 1.0, 10.0, x, q_prev, _DT), 12), q, conservative=False)


def _sphere_case(rng: np.random.Generator, friction: bool) -> _Case:
    material = MaterialParams(r0=1e-3)
    obstacle = SphereObstacle(radius=0.02, stiffness=20.0, delta=1e-3, mu=0.25, slip_tolerance=_SLIP)
    direction = _random_unit(rng)
    normal = _random_unit(rng)
    normal -= (normal @ direction) * direction
    normal /= np.linalg.norm(normal)
    reach = obstacle.radius + material.r0 + rng.uniform(-0.8, 0.8) * obstacle.delta
    mid = reach * normal + rng.uniform(-0.005, 0.005) * direction
    nodes = np.array([mid - 0.02 * direction, mid + 0.02 * direction])
    topology = build_topology(nodes, [[0, 1]])
    size = DofLayout.from_topology(topology).size
    q = np.concatenate([nodes.ravel(), np.zeros(1)])
    q_prev = _moving(rng, q, 2)
    pick = 1 if friction else 0
    return _Case(
        lambda x: _dense(sphere_obstacle(topology, material, obstacle, x, q_prev, _DT)[pick], size),
        q,
        conservative=not friction,
    )


_CASES: dict[str, Callable[[np.random.Generator], _Case]] = {
    "stretch": _stretch_case,
    "bend": _bend_case,
    "twist": _twist_case,
    "hinge": _hinge_case,
    "midedge": _midedge_case,
    "gravity": _gravity_case,
    "floor": lambda rng: _floor_case(rng, friction=False),
    "floor-friction": lambda rng: _floor_case(rng, friction=True),
    "contact": lambda rng: _contact_case(rng, friction=False),
    "friction": lambda rng: _contact_case(rng, friction=True),
    "viscous": _viscous_case,
    "rft": _rft_case,
    "drag": _drag_case,
    "sphere": lambda rng: _sphere_case(rng, friction=False),
    "sphere-friction": lambda rng: _sphere_case(rng, friction=True),
}

GRADIENT_MODULES = tuple(_CASES)


def check_gradients(module: str, samples: int = 100, seed: int = 0) -> FdReport:
    """FD-check one energy or force over ``samples`` random stencils."""
    if module not in _CASES:
        raise ValueError(f"Invalid module: {module!r}. Must be one of {', '.join(GRADIENT_MODULES)}.")
    if samples < 1:
        raise ValueError(f"Invalid samples: {samples!r}. Must be >= 1.")
    rng = np.random.default_rng(seed)
    reports = []
    for k in range(samples):
        case = _CASES[module](rng)
        reports.append(
            fd_check(
                case.evaluate,
                case.q,
                name=f"{module}[{k}]",
                conservative=case.conservative,
                energy=case.energy,
                hessian_from=case.hessian_from,
                gated=case.gated,
            )
        )
    report = merge_reports(module, reports)
    log.debug(
        "FD %s: grad %.2e, hess %.2e over %d samples", module, report.gradient_error, report.hessian_error, samples
    )
    return report


def check_all_gradients(modules: Sequence[str] | None = None, samples: int = 100, seed: int = 0) -> list[FdReport]:
    return [check_gradients(m, samples, seed) for m in (modules or GRADIENT_MODULES)]


# --- Euler–Bernoulli ---------------------------------------------------------------


def euler_bernoulli_tip_deflection(
    youngs: float,
    rho: float,
    length: float,
    gravity: float = 9.8,
    r0: float | None = None,
    h: float | None = None,
    b: float | None = None,
) -> float:
    """Tip deflection ``wL⁴/(8EI)`` of a cantilever under its own weight ``w = ρAg``.

    Give ``r0`` for a circular rod, or ``h`` and ``b`` for a rectangular strip.
    """
    if r0 is not None:
        area, inertia = math.pi * r0**2, math.pi * r0**4 / 4.0
    elif h is not None and b is not None:
        area, inertia = b * h, b * h**3 / 12.0
    else:
        raise ValueError("Invalid section: give r0, or both h and b.")
    if youngs <= 0:
        raise ValueError(f"Invalid youngs: {youngs!r}. Must be > 0.")
    w = rho * area * abs(gravity)
    return w * length**4 / (8.0 * youngs * inertia)


@dataclass
class CantileverResult:
    """Simulated and Euler–Bernoulli tip deflection (m) for one model, modulus and mesh family."""

    model: str
    youngs: float
    simulated: float
    theory: float
    family: str = ""
    relative_error: float = field(init=False)
    normalized: float = field(init=False)

    def __post_init__(self) -> None:
        if not self.theory > 0:
            raise ValueError(f"Invalid theory deflection: {self.theory!r}. Must be > 0.")
        self.relative_error = abs(self.simulated - self.theory) / self.theory
        self.normalized = self.simulated / self.theory


def _static_tip_deflection(scenario: Any) -> float:
    body = scenario.build_body()
    tips = np.array(scenario.config.output.tracked_nodes)
    z0 = body.state.positions(body.topology.n_nodes)[tips, 2].mean()
    solve_static(body, scenario.config.solver)
    return float(z0 - body.state.positions(body.topology.n_nodes)[tips, 2].mean())


def validate_cantilever(
    model: str,
    youngs: Sequence[float] = (2e10, 2e9, 2e8, 2e7),
    family: str = "equilateral",
    n_nodes: int = 21,
    rows: int = 2,
    seed: int = 0,
) -> list[CantileverResult]:
    """Static tip deflection under gravity against the Euler–Bernoulli oracle, per modulus."""
    if model not in ("rod", "hinge", "midedge"):
        raise ValueError(f"Invalid model: {model!r}. Must be 'rod', 'hinge' or 'midedge'.")
    results = []
    for e in youngs:
        if model == "rod":
            scenario = rod_cantilever(e, n_nodes)
            m = scenario.config.material
            theory = euler_bernoulli_tip_deflection(e, m.rho_rod, 0.1, r0=m.r0)
        else:
            scenario = shell_cantilever(model, family, youngs=e, rows=rows, seed=seed)
            m = scenario.config.material
            theory = euler_bernoulli_tip_deflection(e, m.rho_shell, 0.1, h=m.h, b=0.02)
        result = CantileverResult(model, e, _static_tip_deflection(scenario), theory, family if model != "rod" else "")
        log.info(
            "Cantilever %s E=%.3g: %.4e vs EB %.4e (%.2f%%)",
            model,
            e,
            result.simulated,
            theory,
            100 * result.relative_error,
        )
        results.append(result)
    return results


def mesh_study(
    models: Sequence[str] = ("hinge", "midedge"),
    families: Sequence[str] = MESH_FAMILIES,
    youngs: float = 2e9,
    rows: int = 2,
    seed: int = 0,
) -> list[CantileverResult]:
    """Normalized static deflection per bending model per mesh family."""
    return [
        result
        for model in models
        for family in families
        for result in validate_cantilever(model, (youngs,), family, rows=rows, seed=seed)
    ]


def normalized_spread(results: Iterable[CantileverResult], model: str) -> float:
    """Max minus min normalized deflection of one model across families."""
    values = [r.normalized for r in results if r.model == model]
    if not values:
        raise ValueError(f"Invalid model: {model!r}. No results for it.")
    return max(values) - min(values)


def cantilever_check(results: Sequence[CantileverResult]) -> PropertyCheck:
    """Relative Euler–Bernoulli error of the stiffest modulus in a one-model sweep.

    Softer moduli leave the small-deflection regime and are reported, not gated.
    """
    if not results:
        raise ValueError("Invalid cantilever results: empty. Needs at least one modulus.")
    stiffest = max(results, key=lambda r: r.youngs)
    threshold = CANTILEVER_TOLERANCE[stiffest.model]
    return PropertyCheck(
        f"{stiffest.model}-cantilever",
        stiffest.relative_error,
        threshold,
        stiffest.relative_error < threshold,
        f"E={stiffest.youngs:.3g} {stiffest.family}".strip(),
    )


def mesh_dependence_check(results: Iterable[CantileverResult]) -> PropertyCheck | None:
    """Mid-edge spread strictly below hinge spread; None unless both models ran on 2+ families."""
    results = list(results)
    if not {"hinge", "midedge"} <= {r.model for r in results} or len({r.family for r in results}) < 2:
        return None
    hinge = normalized_spread(results, "hinge")
    midedge = normalized_spread(results, "midedge")
    return PropertyCheck("mesh-dependence", midedge, hinge, midedge < hinge, f"hinge spread {hinge:.4g}")


# --- trajectories ------------------------------------------------------------------


def rigid_deviation(reference: ArrayLike, current: ArrayLike) -> float:
    """RMS distance between ``current`` and the best rigid motion of ``reference`` (SVD alignment)."""
    a = np.asarray(reference, dtype=float)
    b = np.asarray(current, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"Invalid shapes: {a.shape!r} vs {b.shape!r}. Must match.")
    a = a - a.mean(axis=0)
    b = b - b.mean(axis=0)
    u, _, vt = np.linalg.svd(a.T @ b)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    rotation = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    return float(np.sqrt(np.mean(np.sum((a @ rotation.T - b) ** 2, axis=1))))


def node_positions_log(states_path: str | Path, n_nodes: int) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Times and ``(frames, N, 3)`` positions from a states CSV."""
    _, data = read_summary(states_path)
    if data.shape[1] < 1 + 3 * n_nodes:
        raise ValueError(f"Invalid state log {str(states_path)!r}: fewer than {3 * n_nodes} position columns.")
    return data[:, 0], data[:, 1 : 1 + 3 * n_nodes].reshape(len(data), n_nodes, 3)


def peak_rigid_deviation(states_path: str | Path, n_nodes: int) -> float:
    """Largest deviation from a rigid motion of the first logged frame."""
    _, x = node_positions_log(states_path, n_nodes)
    return max(rigid_deviation(x[0], frame) for frame in x)


def tracked_series(
    summary_path: str | Path, node: int, axis: str = "x"
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Time and one coordinate of a tracked node (0-based) from a summary CSV."""
    header, data = read_summary(summary_path)
    column = f"{axis}{node + 1}"
    if column not in header:
        raise ValueError(f"Invalid summary {str(summary_path)!r}: no column {column!r}.")
    return data[:, 0], data[:, header.index(column)]


# --- locomotion properties -----------------------------------------------------------


@dataclass
class PropertyCheck:
    name: str
    value: float
    threshold: float
    passed: bool
    detail: str = ""


def _net(summary: str | Path, node: int, axis: str = "x") -> tuple[float, float]:
    t, x = tracked_series(summary, node, axis)
    if len(x) < 2:
        raise ValueError(f"Invalid summary {str(summary)!r}: needs at least two frames.")
    slope = float(np.polyfit(t, x, 1)[0])
    return float(x[-1] - x[0]), slope


def earthworm_properties(
    with_friction: str | Path, frictionless: str | Path, node: int, stroke: float
) -> list[PropertyCheck]:
    net_mu, _ = _net(with_friction, node)
    net_0, _ = _net(frictionless, node)
    return [
        PropertyCheck("earthworm-forward", net_mu, 0.0, net_mu > 0.0, "front node net dx with friction > 0"),
        PropertyCheck("earthworm-frictionless", abs(net_0), 0.1 * stroke, abs(net_0) < 0.1 * stroke,
                      "front node |net dx| without friction < 10% of the stroke"),
    ]


def snake_properties(
    anisotropic: str | Path, isotropic: str | Path, node: int, body_length: float
) -> list[PropertyCheck]:
    net, slope = _net(anisotropic, node)
    net_iso, _ = _net(isotropic, node)
    _, z = tracked_series(anisotropic, node, "z")
    z_max = float(np.max(np.abs(z - z[0])))
    return [
        PropertyCheck("snake-forward", net, 0.0, net > 0.0 and slope > 0.0, "head net dx > 0 with a rising trend"),
        PropertyCheck("snake-isotropic", abs(net_iso), 0.05 * body_length, abs(net_iso) < 0.05 * body_length,
                      "head |net dx| with C_t = C_n < 5% of body length"),
        PropertyCheck("snake-planar", z_max, 1e-12, z_max <= 1e-12, "head z stays at its initial value"),
    ]


def manta_properties(summary: str | Path, node: int, tolerance: float = 1e-6) -> list[PropertyCheck]:
    _, x = tracked_series(summary, node, "x")
    drift = float(np.max(np.abs(x - x[0])))
    return [PropertyCheck("manta-symmetric", drift, tolerance, drift < tolerance, "leading-edge midpoint x constant")]


def locomotion_properties(name: str, out_dir: str | Path, total_time: float | None = None) -> list[PropertyCheck]:
    """Run the variants a showcase's locomotion properties need and evaluate them."""
    out = Path(out_dir)
    extra = {} if total_time is None else {"solver.total_time": total_time}

    def run(tag: str, overrides: dict[str, Any]) -> tuple[Path, int]:
        scenario = build_scenario(name, {**extra, **overrides})
        result = run_scenario(scenario, out / tag)
        if not result.success:
            raise RuntimeError(f"{name} run {tag!r} failed: {result.error}")
        assert result.summary_path is not None
        return result.summary_path, scenario.config.output.tracked_nodes[0]

    if name == "earthworm":
        rough, node = run("earthworm-mu", {})
        smooth, _ = run("earthworm-frictionless", {"env.floor.mu": 0.0})
        return earthworm_properties(rough, smooth, node, stroke=1e-3)
    if name == "snake":
        aniso, node = run("snake-rft", {})
        iso, _ = run("snake-isotropic", {"env.rft_ct": 0.1})
        return snake_properties(aniso, iso, node, body_length=0.1)
    if name == "manta":
        summary, node = run("manta", {})
        return manta_properties(summary, node)
    raise ValueError(f"Invalid locomotion scenario: {name!r}. Must be 'earthworm', 'snake' or 'manta'.")


def write_report(path: str | Path, records: Sequence[Any]) -> None:
    """Write dataclass records (FD reports, cantilever results, property checks) as CSV."""
    if not records:
        raise ValueError("Invalid report: no records.")
    names = [f.name for f in fields(records[0])]
    with Path(path).open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=names)
        writer.writeheader()
        for record in records:
            writer.writerow(asdict(record))
    log.info("Wrote %d report rows to %s", len(records), path)
