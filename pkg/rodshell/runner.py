"""Run a body through time (or to static equilibrium) and log the trajectory to CSV."""

from __future__ import annotations

import logging
import time as _time
from collections.abc import Callable
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .actuation import read_schedule_csv
from .config import ScenarioConfig, load_config
from .environment import floor_gap, node_radii, sphere_clearance
from .frames import AntiparallelTangentsError, SingularConfigurationError
from .geometry_io import TrajectoryWriter, parse_geometry
from .integrator import ConvergenceError, SolverDivergenceError, StepReport, advance, solve_static
from .scenarios import Scenario
from .system import SoftBody
from .topology import build_topology

log = logging.getLogger("rodshell.runner")

FrameCallback = Callable[[SoftBody, StepReport | None], None]

_STEP_FAILURES = (ConvergenceError, SolverDivergenceError, SingularConfigurationError, AntiparallelTangentsError)


@dataclass
class SimulationResult:
    """Outcome of one run."""

    success: bool
    error: str = ""
    steps: int = 0
    time: float = 0.0
    frames: int = 0
    newton_iterations: int = 0
    min_gaps: dict[str, float] = field(default_factory=dict)
    failed_report: StepReport | None = None
    state_path: Path | None = None
    summary_path: Path | None = None
    elapsed_s: float = 0.0


def contact_gaps(body: SoftBody, contact_gap: float = float("inf")) -> dict[str, float]:
    """Smallest surface gap to the floor, each sphere and (from the last assembly) between edges."""
    params = body.environment.params
    x = body.state.positions(body.topology.n_nodes)
    gaps: dict[str, float] = {}
    if params.floor.enabled:
        gaps["floor"] = float(np.min(floor_gap(x, node_radii(body.topology, body.material), params.floor)))
    for k, obstacle in enumerate(params.obstacles):
        gaps[f"sphere{k}"] = sphere_clearance(body.topology, body.material, obstacle, body.state.q)
    if body.contact.enabled and np.isfinite(contact_gap):
        gaps["contact"] = contact_gap
    return gaps


def _penetration_limits(body: SoftBody) -> dict[str, float]:
    params = body.environment.params
    limits = {"floor": params.floor.delta, "contact": body.contact.delta}
    limits.update({f"sphere{k}": ob.delta for k, ob in enumerate(params.obstacles)})
    return limits


def load_body(geometry_path: str | Path, config: ScenarioConfig | str | Path) -> tuple[SoftBody, ScenarioConfig]:
    """Geometry file plus config (or config file) to a ready body with its CSV schedules attached."""
    if not isinstance(config, ScenarioConfig):
        config = load_config(config)
    geometry = parse_geometry(geometry_path)
    body = SoftBody.from_config(build_topology(geometry.nodes, geometry.edges, geometry.triangles), config)
    for ref in config.actuation:
        body.schedules.extend(read_schedule_csv(ref.file, ref.quantity, body.springs))
    return body, config


def run_simulation(
    body: SoftBody,
    config: ScenarioConfig,
    out_dir: str | Path,
    log_every: int | None = None,
    on_frame: FrameCallback | None = None,
) -> SimulationResult:
    """Step ``body`` to ``solver.total_time`` (or solve statically) and write states/summary CSVs.

    A solver failure ends the run with ``success=False``; frames logged so far are kept.
    """
    solver, output = config.solver, config.output
    every = log_every or output.log_every
    for node in output.tracked_nodes:
        if not 0 <= node < body.topology.n_nodes:
            raise ValueError(f"Invalid tracked node: {node!r}. Must be in [0, {body.topology.n_nodes - 1}].")
    result = SimulationResult(success=True)
    limits = _penetration_limits(body)
    started = _time.perf_counter()

    with TrajectoryWriter(out_dir, body.n_dof, output.tracked_nodes, output.log_energy) as writer:
        result.state_path, result.summary_path = writer.state_path, writer.summary_path

        def log_frame(report: StepReport | None) -> None:
            state = body.state
            writer.write(state.time, state.q, state.u, body.total_energy() if output.log_energy else None)
            gap = report.contact_gap if report is not None else float("inf")
            for name, value in contact_gaps(body, gap).items():
                result.min_gaps[name] = min(result.min_gaps.get(name, float("inf")), value)
                if value < -limits[name]:
                    log.warning("Penetration beyond delta at t=%.6g: %s gap %.3e", state.time, name, value)
            if on_frame is not None:
                on_frame(body, report)

        try:
            if solver.static:
                report = solve_static(body, solver)
                result.newton_iterations = report.iterations
                log_frame(report)
            else:
                log.info("Running %d steps of %s (dt=%.3g)", solver.n_steps, solver.integrator, solver.dt)
                log_frame(None)
                for step in range(1, solver.n_steps + 1):
                    report = advance(body, solver)
                    result.steps = step
                    result.newton_iterations += report.iterations
                    if step % every == 0 or step == solver.n_steps:
                        log_frame(report)
        except _STEP_FAILURES as exc:
            result.success = False
            result.error = f"{type(exc).__name__}: {exc}"
            result.failed_report = getattr(exc, "report", None)
            log.error("Run failed at t=%.6g: %s", body.state.time, exc)
        result.frames = writer.frames

    result.time = body.state.time
    result.elapsed_s = round(_time.perf_counter() - started, 3)
    outcome = "finished" if result.success else "failed"
    log.info("Run %s: %d steps, %d frames, %.2fs", outcome, result.steps, result.frames, result.elapsed_s)
    return result


def run_scenario(
    scenario: Scenario, out_dir: str | Path, log_every: int | None = None, on_frame: FrameCallback | None = None
) -> SimulationResult:
    return run_simulation(scenario.build_body(), scenario.config, out_dir, log_every, on_frame)
