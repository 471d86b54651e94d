"""Time stepping: Newton–Raphson over the free DOFs, three integrators and a static solve.

The residual of each implicit scheme is written against ``SoftBody.assemble``; nothing here
knows which forces exist. Fixed DOFs never move: Newton updates touch only the free set.
"""

from __future__ import annotations

import logging
import warnings
from collections.abc import Callable
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np
import scipy.sparse as sp
from numpy.typing import NDArray
from scipy.sparse.linalg import MatrixRankWarning, spsolve

from .config import ALPHA_MIN, BoundaryConditions, SolverSettings

if TYPE_CHECKING:
    from .system import Assembly, SoftBody
    from .topology import DofLayout

log = logging.getLogger("rodshell.integrator")

ResidualFn = Callable[[NDArray[np.float64], bool], tuple]  # (f, J | None, Assembly)


@dataclass
class StepReport:
    """What one step (or one static solve) did."""

    time: float
    dt: float
    iterations: int = 0
    residual: float = float("inf")
    alphas: list[float] = field(default_factory=list)
    converged: bool = False
    contact_gap: float = float("inf")
    halvings: int = 0
    load_steps: int = 1


class ConvergenceError(RuntimeError):
    """Newton did not reach the tolerance; ``report`` says how far it got."""

    def __init__(self, message: str, report: StepReport) -> None:
        super().__init__(message)
        self.report = report


class SolverDivergenceError(RuntimeError):
    """The state or the residual became non-finite, or blew past the divergence limit."""


# --- boundary conditions -------------------------------------------------------


def apply_boundary_conditions(layout: DofLayout, bc: BoundaryConditions, planar: bool = False) -> DofLayout:
    """Fix the scalar DOFs named by ``bc``; ``planar`` also fixes every z and every θ."""
    fixed: list[int] = []
    for node in bc.fixed_nodes:
        _check_range(node, layout.n_nodes, "fixed node")
        fixed.extend(range(3 * node, 3 * node + 3))
    for node, axis in bc.fixed_node_axes:
        _check_range(node, layout.n_nodes, "fixed node")
        fixed.append(3 * node + axis)
    for edge in bc.fixed_twist_edges:
        _check_range(edge, layout.n_twist, "fixed twist edge")
        fixed.append(layout.theta_offset + edge)
    for edge in bc.fixed_shell_edges:
        _check_range(edge, layout.n_xi, "fixed shell edge")
        fixed.append(layout.xi_offset + edge)
    if planar:
        fixed.extend(range(2, 3 * layout.n_nodes, 3))
        fixed.extend(range(layout.theta_offset, layout.xi_offset))
    out = layout.with_fixed(np.array(fixed, dtype=np.int64)) if fixed else layout
    if not np.any(out.free):
        raise ValueError("Invalid boundary conditions: every DOF is fixed. Nothing left to solve for.")
    return out


def _check_range(index: int, size: int, what: str) -> None:
    if not 0 <= index < size:
        raise ValueError(f"Invalid {what}: {index!r}. Must be in [0, {size - 1}].")


# --- residuals ---------------------------------------------------------------


def residual_and_jacobian(
    body: SoftBody,
    q_trial: NDArray[np.float64],
    q_k: NDArray[np.float64],
    u_k: NDArray[np.float64],
    dt: float,
    time: float,
    scheme: str = "backward-euler",
    hessian: bool = True,
) -> tuple[NDArray[np.float64], sp.csr_matrix | None, Assembly]:
    """Equations of motion at a trial state.

    Backward Euler: ``f = M(q − q_k − Δt u_k)/Δt² + ∇E(q) − F(q)``. Implicit midpoint
    evaluates the forces at ``(q + q_k)/2`` and doubles the inertial term; its ``time`` is
    the half step ``t_k + Δt/2``.
    """
    mass = body.mass.values
    inertia = mass * (q_trial - q_k - dt * u_k) / dt**2
    if scheme == "implicit-midpoint":
        q_eval = 0.5 * (q_trial + q_k)
        asm = body.assemble(q_eval, q_k, 0.5 * dt, body.frames_at(q_eval), time, hessian=hessian)
        f = 2.0 * inertia + asm.gradient
        _check_finite(f, time)
        jac = None
        if hessian:
            jac = (sp.diags(2.0 * mass / dt**2) + 0.5 * asm.jacobian).tocsr()
        return f, jac, asm
    asm = body.assemble(q_trial, q_k, dt, body.frames_at(q_trial), time, hessian=hessian)
    f = inertia + asm.gradient
    jac = (sp.diags(mass / dt**2) + asm.jacobian).tocsr() if hessian else None
    _check_finite(f, time)
    return f, jac, asm


def static_residual(
    body: SoftBody, q: NDArray[np.float64], dt: float, time: float, load_scale: float = 1.0, hessian: bool = True
) -> tuple[NDArray[np.float64], sp.csr_matrix | None, Assembly]:
    """``∇E − F`` with no inertia; dissipative forces see zero velocity."""
    asm = body.assemble(q, q, dt, body.frames_at(q), time, load_scale=load_scale, hessian=hessian)
    _check_finite(asm.gradient, time)
    return asm.gradient, asm.jacobian, asm


def _check_finite(f: NDArray[np.float64], time: float) -> None:
    bad = np.flatnonzero(~np.isfinite(f))
    if len(bad):
        raise SolverDivergenceError(f"Non-finite residual at DOF {int(bad[0])} (t={time:.6g}).")


# --- Newton ------------------------------------------------------------------


def _solve_free(jac: sp.csr_matrix, f: NDArray[np.float64], free: NDArray[np.int64], label: str) -> NDArray[np.float64]:
    sub = jac[free][:, free].tocsc()
    with warnings.catch_warnings():
        warnings.simplefilter("error", MatrixRankWarning)
        try:
            dq = spsolve(sub, f[free])
        except MatrixRankWarning as exc:
            raise ConvergenceError(f"{label}: singular Jacobian on the free DOFs.", StepReport(0.0, 0.0)) from exc
    dq = np.atleast_1d(dq)
    if not np.all(np.isfinite(dq)):
        raise ConvergenceError(f"{label}: singular Jacobian on the free DOFs.", StepReport(0.0, 0.0))
    return dq


def _trial_norm(residual: ResidualFn, q: NDArray[np.float64], free: NDArray[np.int64]) -> float:
    try:
        f, _, _ = residual(q, False)
    except (ValueError, SolverDivergenceError):
        return float("inf")
    return float(np.linalg.norm(f[free]))


def newton_step(
    residual: ResidualFn,
    q: NDArray[np.float64],
    f: NDArray[np.float64],
    jac: sp.csr_matrix,
    free: NDArray[np.int64],
    line_search: bool = True,
    label: str = "step",
) -> tuple[NDArray[np.float64], float, float]:
    """One Newton update of the free DOFs; returns ``(q_new, α, ‖f_free(q_new)‖)``.

    With line search, α halves from 1 until the residual norm drops; below α_min the α_min
    step is taken anyway and a warning logged.
    """
    dq = _solve_free(jac, f, free, label)
    r0 = float(np.linalg.norm(f[free]))
    alpha = 1.0
    while True:
        q_new = q.copy()
        q_new[free] -= alpha * dq
        if not line_search:
            return q_new, alpha, float("nan")
        r_new = _trial_norm(residual, q_new, free)
        if r_new < r0:
            return q_new, alpha, r_new
        if alpha / 2.0 < ALPHA_MIN:
            log.warning(
                "%s: line search accepted alpha=%.3g without a decrease (%.3e -> %.3e)", label, alpha, r0, r_new
            )
            return q_new, alpha, r_new
        alpha /= 2.0


def newton_solve(
    residual: ResidualFn,
    q0: NDArray[np.float64],
    free: NDArray[np.int64],
    settings: SolverSettings,
    report: StepReport,
    label: str = "step",
) -> tuple[NDArray[np.float64], Assembly]:
    """Iterate :func:`newton_step` until ``‖f_free‖ ≤ tolerance``; fills ``report`` in place."""
    q = q0.copy()
    for iteration in range(settings.max_iterations + 1):
        f, jac, asm = residual(q, True)
        norm = float(np.linalg.norm(f[free]))
        report.iterations, report.residual, report.contact_gap = iteration, norm, asm.contact_gap
        log.debug("%s: iter %d  |f_free|=%.3e", label, iteration, norm)
        if norm <= settings.tolerance:
            report.converged = True
            return q, asm
        if iteration == settings.max_iterations:
            break
        try:
            q, alpha, _ = newton_step(residual, q, f, jac, free, settings.line_search, label)
        except ConvergenceError as exc:
            raise ConvergenceError(str(exc), report) from exc
        report.alphas.append(alpha)
    raise ConvergenceError(
        f"{label}: no convergence after {settings.max_iterations} iterations (|f_free|={report.residual:.3e}).",
        report,
    )


# --- steppers ------------------------------------------------------------------


def _initial_guess(body: SoftBody, dt: float, settings: SolverSettings) -> NDArray[np.float64]:
    q_k, u_k = body.state.q, body.state.u
    if not settings.predictor:
        return q_k.copy()
    guess = q_k + dt * u_k
    fixed = body.layout.fixed_indices
    guess[fixed] = q_k[fixed]
    return guess


def _implicit_step(body: SoftBody, dt: float, settings: SolverSettings, scheme: str) -> StepReport:
    q_k, u_k = body.state.q.copy(), body.state.u.copy()
    time = body.state.time + dt
    # forces and natural quantities at the time the scheme evaluates them
    t_eval = body.state.time + 0.5 * dt if scheme == "implicit-midpoint" else time
    body.actuate(t_eval)
    report = StepReport(time=time, dt=dt)

    def residual(q: NDArray[np.float64], hessian: bool) -> tuple:
        return residual_and_jacobian(body, q, q_k, u_k, dt, t_eval, scheme, hessian)

    label = f"{scheme} t={time:.6g}"
    q, _ = newton_solve(residual, _initial_guess(body, dt, settings), body.layout.free_indices, settings, report, label)
    if scheme == "implicit-midpoint":
        u = 2.0 * (q - q_k) / dt - u_k
    else:
        u = (q - q_k) / dt
    u[body.layout.fixed_indices] = 0.0
    body.commit(q, u, time)
    return report


def step_backward_euler(body: SoftBody, dt: float, settings: SolverSettings) -> StepReport:
    """One implicit Euler step; ``u_{k+1} = (q_{k+1} − q_k)/Δt``."""
    return _implicit_step(body, dt, settings, "backward-euler")


def step_implicit_midpoint(body: SoftBody, dt: float, settings: SolverSettings) -> StepReport:
    """One implicit midpoint step; ``u_{k+1} = 2(q_{k+1} − q_k)/Δt − u_k``."""
    return _implicit_step(body, dt, settings, "implicit-midpoint")


def step_forward_euler(body: SoftBody, dt: float, settings: SolverSettings) -> StepReport:
    """Explicit update with no linear solve: ``u ← u + Δt M⁻¹F(q_k)``, then ``q ← q + Δt u``."""
    q_k, u_k = body.state.q, body.state.u
    time = body.state.time + dt
    body.actuate(body.state.time)
    asm = body.assemble(q_k, q_k - dt * u_k, dt, body.frames, body.state.time, hessian=False)
    u = u_k - dt * asm.gradient / body.mass.values
    fixed = body.layout.fixed_indices
    u[fixed] = 0.0
    q = q_k + dt * u
    q[fixed] = q_k[fixed]
    bad = np.flatnonzero(~np.isfinite(q) | (np.abs(q) > settings.divergence_limit))
    if len(bad):
        raise SolverDivergenceError(f"Forward Euler diverged at DOF {int(bad[0])} (t={time:.6g}).")
    body.commit(q, u, time)
    return StepReport(time=time, dt=dt, converged=True, contact_gap=asm.contact_gap)


_STEPPERS = {
    "backward-euler": step_backward_euler,
    "implicit-midpoint": step_implicit_midpoint,
    "forward-euler": step_forward_euler,
}


def solve_static(body: SoftBody, settings: SolverSettings, continuation_steps: int | None = None) -> StepReport:
    """Equilibrium of the current loads; falls back to load continuation if Newton stalls."""
    time = body.state.time
    body.actuate(time)
    free = body.layout.free_indices
    report = StepReport(time=time, dt=settings.dt)
    q_start = body.state.q.copy()
    try:
        q, _ = newton_solve(
            lambda q, h: static_residual(body, q, settings.dt, time, 1.0, h), q_start, free, settings, report, "static"
        )
    except (ConvergenceError, SolverDivergenceError) as exc:
        n = continuation_steps or settings.continuation_steps
        log.warning("Static solve did not converge (%s); ramping loads in %d increments", exc, n)
        report = _continuation(body, settings, q_start, n)
        q = body.state.q
    body.commit(q, np.zeros_like(q), time)
    log.info("Static solve: %d iterations, |f_free|=%.3e", report.iterations, report.residual)
    return report


def _continuation(body: SoftBody, settings: SolverSettings, q_start: NDArray[np.float64], n: int) -> StepReport:
    time = body.state.time
    free = body.layout.free_indices
    q = q_start
    total = StepReport(time=time, dt=settings.dt, load_steps=n)
    for k in range(1, n + 1):
        scale = k / n
        report = StepReport(time=time, dt=settings.dt)
        q, _ = newton_solve(
            lambda q, h, s=scale: static_residual(body, q, settings.dt, time, s, h),
            q,
            free,
            settings,
            report,
            f"static load {k}/{n}",
        )
        body.commit(q, np.zeros_like(q), time)
        total.iterations += report.iterations
        total.alphas.extend(report.alphas)
        total.residual, total.converged, total.contact_gap = report.residual, report.converged, report.contact_gap
    return total


def advance(body: SoftBody, settings: SolverSettings, dt: float | None = None) -> StepReport:
    """One step of the configured integrator, with opt-in Δt halving on non-convergence."""
    dt = settings.dt if dt is None else dt
    stepper = _STEPPERS[settings.integrator]
    try:
        return stepper(body, dt, settings)
    except ConvergenceError as exc:
        if not settings.adaptive_dt or settings.integrator == "forward-euler":
            log.error("Step rejected at t=%.6g: %s", body.state.time + dt, exc)
            raise
        failure = exc
    for halvings in range(1, settings.max_halvings + 1):
        substeps = 2**halvings
        h = dt / substeps
        snapshot = (body.state.copy(), body.frames.copy())
        try:
            report = StepReport(time=body.state.time + dt, dt=dt)
            for _ in range(substeps):
                sub = stepper(body, h, settings)
                report.iterations += sub.iterations
                report.alphas.extend(sub.alphas)
                report.residual, report.contact_gap = sub.residual, min(report.contact_gap, sub.contact_gap)
            report.converged, report.halvings = True, halvings
            log.debug("Step at t=%.6g needed %d halvings", report.time, halvings)
            return report
        except ConvergenceError as exc:
            body.state, body.frames = snapshot
            failure = exc
    log.error("Step rejected at t=%.6g after %d halvings: %s", body.state.time + dt, settings.max_halvings, failure)
    raise failure

