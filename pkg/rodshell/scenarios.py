"""The seven bundled showcases and the cantilever builders used by the validation harness.

Each builder returns a :class:`Scenario`: geometry, config, actuation schedules, custom
forces and point masses. ``Scenario.build_body()`` turns it into a ready ``SoftBody``.
Resolutions and durations are desk-scale; physical parameters follow the showcases.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Mapping
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from numpy.typing import NDArray

from .actuation import ActuationSchedule, Waveform
from .config import (
    BUNDLED_SCENARIOS,
    HINGE_LATTICE_FACTOR,
    BoundaryConditions,
    ContactParams,
    EnvironmentParams,
    FloorParams,
    MaterialParams,
    OutputSettings,
    ScenarioConfig,
    SolverSettings,
    SphereObstacle,
    with_overrides,
)
from .environment import CustomForce, constant_nodal_force
from .geometry_io import GeometryArrays
from .meshes import arc_rod, clamp_nodes, hexagon, hexagon_corners, rod, strip_mesh, symmetric_plate, tip_nodes
from .system import SoftBody
from .topology import DofLayout, MeshTopology, build_topology

log = logging.getLogger("rodshell.scenarios")

GRAVITY = (0.0, 0.0, -9.8)

PNEUNET_CURVATURES = (15.70, 31.45, 47.15)
PNEUNET_TIP_LOAD = (175.0, 0.0, 7.0)

SCENARIO_DESCRIPTIONS = {
    "pneunet": "Pre-curved rod actuator, static equilibrium under gravity (optional tip load)",
    "earthworm": "Three-node rod crawling on a frictional floor by alternating edge lengths",
    "manta": "Hinge-shell plate flapping its centre line in a dense fluid",
    "snake": "Planar rod swimming with resistive force theory and a travelling curvature wave",
    "parachute": "Hexagonal shell canopy with six rod ropes and a payload mass, falling with drag",
    "rod-drop": "Rod released 5 cm above a frictional floor, with self-contact",
    "gripper": "Clamped rod curling around a rigid sphere by ramping its natural curvature",
}


@dataclass
class Scenario:
    """A runnable setup: geometry plus everything ``SoftBody.from_config`` does not cover."""

    name: str
    geometry: GeometryArrays
    config: ScenarioConfig
    schedules: list[ActuationSchedule] = field(default_factory=list)
    custom_forces: list[CustomForce] = field(default_factory=list)
    point_masses: dict[int, float] = field(default_factory=dict)

    def topology(self) -> MeshTopology:
        g = self.geometry
        return build_topology(g.nodes, g.edges, g.triangles)

    def build_body(self) -> SoftBody:
        body = SoftBody.from_config(self.topology(), self.config)
        for node, mass in self.point_masses.items():
            body.add_point_mass(node, mass)
        body.schedules = list(self.schedules)
        for callback in self.custom_forces:
            body.environment.custom.register(callback, q=body.state.q, u=body.state.u)
        return body


# --- helpers -------------------------------------------------------------------


def _config(overrides: Mapping[str, Any] | None, **sections: Any) -> ScenarioConfig:
    config = ScenarioConfig(**sections)
    return with_overrides(config, overrides) if overrides else config


def _n_dof(topology: MeshTopology, config: ScenarioConfig) -> int:
    return DofLayout.from_topology(topology, config.shell_mode).size


def _rod_clamp(n_twist: int = 1) -> BoundaryConditions:
    """First two nodes and the first edge's twist fixed."""
    return BoundaryConditions(fixed_nodes=(0, 1), fixed_twist_edges=tuple(range(n_twist)))


def _stencil_centres(topology: MeshTopology) -> NDArray[np.int64]:
    return topology.bend_twist_stencils.nodes[:, 1]


# --- showcases -----------------------------------------------------------------


def pneunet(overrides: Mapping[str, Any] | None = None, curvature: float = 15.70, tip_scale: float = 0.0) -> Scenario:
    """A rod pre-curved into an arc, solved statically under gravity."""
    nodes, edges = arc_rod(21, 0.1, curvature)
    config = _config(
        overrides,
        material=MaterialParams(rho_rod=1200.0, youngs_rod=2e10, nu_rod=0.5, r0=1e-3),
        environment=EnvironmentParams(gravity=GRAVITY),
        solver=SolverSettings(dt=1e-2, total_time=0.0, static=True, tolerance=1e-9),
        output=OutputSettings(tracked_nodes=(len(nodes) - 1,)),
        boundary=_rod_clamp(),
    )
    geometry = GeometryArrays(nodes=nodes, edges=edges)
    forces: list[CustomForce] = []
    if tip_scale != 0.0:
        n_dof = _n_dof(build_topology(nodes, edges), config)
        load = tip_scale * np.asarray(PNEUNET_TIP_LOAD)
        forces.append(constant_nodal_force(len(nodes) - 1, load, n_dof))
    return Scenario("pneunet", geometry, config, custom_forces=forces)


def earthworm_schedules(
    rest_length: float, stroke: float, fast: float, slow: float, total_time: float
) -> list[ActuationSchedule]:
    """Rear edge contracts fast and recovers slowly, then the front edge extends fast and recovers slowly."""
    period = 2.0 * (fast + slow)
    cycles = math.ceil(total_time / period) + 1
    rear_t, rear_v, front_t, front_v = [0.0], [rest_length], [0.0], [rest_length]
    for c in range(cycles):
        t0 = c * period
        rear_t += [t0 + fast, t0 + fast + slow, t0 + period]
        rear_v += [rest_length - stroke, rest_length, rest_length]
        front_t += [t0 + fast + slow, t0 + 2 * fast + slow, t0 + period]
        front_v += [rest_length, rest_length + stroke, rest_length]
    return [
        ActuationSchedule("length", np.array([0]), np.array(rear_t), np.array(rear_v), tag="rear"),
        ActuationSchedule("length", np.array([1]), np.array(front_t), np.array(front_v), tag="front"),
    ]


def earthworm(overrides: Mapping[str, Any] | None = None, stroke: float = 1e-3) -> Scenario:
    """Three nodes on a floor; y and every twist are fixed, the worm may lift in z."""
    r0 = 1e-3
    nodes, edges = rod(3, 0.1, origin=(0.0, 0.0, r0))
    config = _config(
        overrides,
        material=MaterialParams(rho_rod=1200.0, youngs_rod=2e8, nu_rod=0.5, r0=r0),
        environment=EnvironmentParams(
            gravity=GRAVITY,
            floor=FloorParams(enabled=True, stiffness=1000.0, delta=5e-4, mu=0.25, slip_tolerance=1.5e-2),
        ),
        solver=SolverSettings(dt=5e-3, total_time=2.2),
        output=OutputSettings(log_every=2, tracked_nodes=(2,)),
        boundary=BoundaryConditions(fixed_node_axes=tuple((n, 1) for n in range(3)), fixed_twist_edges=(0, 1)),
    )
    schedules = earthworm_schedules(0.05, stroke, fast=0.05, slow=0.5, total_time=config.solver.total_time)
    return Scenario("earthworm", GeometryArrays(nodes=nodes, edges=edges), config, schedules=schedules)


def manta(overrides: Mapping[str, Any] | None = None, size: float = 1.0, half_columns: int = 2) -> Scenario:
    """A mirror-symmetric plate whose centre-line hinges fold as a wave from leading to trailing edge."""
    nodes, tris = symmetric_plate(size, half_columns)
    topology = build_topology(nodes, None, tris)
    leading = int(np.flatnonzero((np.abs(nodes[:, 0]) < 1e-9) & (np.abs(nodes[:, 1] - size) < 1e-9))[0])
    config = _config(
        overrides,
        material=MaterialParams(rho_shell=1057.0, youngs_shell=6e9, nu_shell=0.3, h=5e-3),
        environment=EnvironmentParams(gravity=GRAVITY, rho_medium=1000.0, drag_cd=0.5),
        solver=SolverSettings(dt=2e-3, total_time=0.3),
        output=OutputSettings(log_every=5, tracked_nodes=(leading,)),
        shell_mode="hinge",
    )
    interior = topology.interior_shell_edges
    ends = nodes[topology.shell_edges[interior]]
    on_axis = np.all(np.abs(ends[:, :, 0]) < 1e-9, axis=1)
    hinges = np.flatnonzero(on_axis)
    s = 1.0 - ends[hinges, :, 1].mean(axis=1) / size
    wave = Waveform(amplitude=2.0 * math.pi / 3.0, frequency=3.4, phase=-math.pi * s, ramp_time=0.1)
    schedule = ActuationSchedule("phi", hinges, waveform=wave, tag="centre line")
    return Scenario("manta", GeometryArrays(nodes=nodes, triangles=tris), config, schedules=[schedule])


def snake(overrides: Mapping[str, Any] | None = None, n_nodes: int = 21) -> Scenario:
    """A planar rod driven by a curvature wave travelling from head (x = L) to tail."""
    length = 0.1
    nodes, edges = rod(n_nodes, length)
    topology = build_topology(nodes, edges)
    config = _config(
        overrides,
        material=MaterialParams(rho_rod=1200.0, youngs_rod=2e6, nu_rod=0.5, r0=1e-3),
        environment=EnvironmentParams(rft_ct=0.01, rft_cn=0.1),
        solver=SolverSettings(dt=1e-2, total_time=2.0, planar=True),
        output=OutputSettings(log_every=2, tracked_nodes=(n_nodes - 1,)),
    )
    s = nodes[_stencil_centres(topology), 0]
    wave = Waveform(amplitude=0.05, frequency=1.0, phase=2.0 * math.pi * s / length, ramp_time=0.25)
    springs = np.arange(len(s))
    schedule = ActuationSchedule("kappa1", springs, waveform=wave, tag="body wave")
    return Scenario("snake", GeometryArrays(nodes=nodes, edges=edges), config, schedules=[schedule])


def parachute(
    overrides: Mapping[str, Any] | None = None, divisions: int = 2, rope_edges: int = 3, depth: float = 1.0
) -> Scenario:
    """Hexagonal canopy, six ropes from its corners to one payload node carrying a point mass."""
    canopy, tris = hexagon(1.0, divisions)
    corners = hexagon_corners(canopy, 1.0)
    payload_pos = np.array([0.0, 0.0, -depth])
    nodes = [*canopy]
    payload = len(canopy) + len(corners) * (rope_edges - 1)
    edges = []
    for corner in corners:
        prev = int(corner)
        for k in range(1, rope_edges):
            frac = k / rope_edges
            nodes.append((1.0 - frac) * canopy[corner] + frac * payload_pos)
            edges.append((prev, len(nodes) - 1))
            prev = len(nodes) - 1
        edges.append((prev, payload))
    nodes.append(payload_pos)
    config = _config(
        overrides,
        material=MaterialParams(
            rho_rod=1500.0, rho_shell=1500.0, youngs_rod=1e7, youngs_shell=1e9, nu_rod=0.5, nu_shell=0.3, h=1e-3
        ),
        environment=EnvironmentParams(gravity=GRAVITY, rho_medium=1.0, drag_cd=10.0),
        solver=SolverSettings(dt=5e-3, total_time=0.5),
        output=OutputSettings(log_every=5, tracked_nodes=(payload,)),
    )
    geometry = GeometryArrays(nodes=np.array(nodes), edges=np.array(edges, dtype=np.int64), triangles=tris)
    return Scenario("parachute", geometry, config, point_masses={payload: 0.13})


def rod_drop(overrides: Mapping[str, Any] | None = None, n_nodes: int = 11, tilt: float = 0.1) -> Scenario:
    """A rod whose lowest node starts 5 cm above the floor; ``tilt`` (rad) makes one end land first."""
    direction = (math.cos(tilt), 0.0, math.sin(tilt))
    nodes, edges = rod(n_nodes, 0.1, origin=(0.0, 0.0, 0.05), direction=direction)
    config = _config(
        overrides,
        material=MaterialParams(rho_rod=1500.0, youngs_rod=2e6, nu_rod=0.3, r0=1e-3),
        environment=EnvironmentParams(
            gravity=GRAVITY, floor=FloorParams(enabled=True, stiffness=20.0, delta=2e-3, mu=0.25)
        ),
        contact=ContactParams(enabled=True, stiffness=20.0, delta=2e-3, mu=0.25),
        solver=SolverSettings(dt=1e-3, total_time=0.3),
        output=OutputSettings(log_every=5, tracked_nodes=(0, n_nodes // 2, n_nodes - 1)),
    )
    return Scenario("rod-drop", GeometryArrays(nodes=nodes, edges=edges), config)


GRIPPER_SPHERE = SphereObstacle(center=(0.1, 0.0, 0.05), radius=0.025, stiffness=20.0, delta=2e-3, mu=0.25)


def gripper(overrides: Mapping[str, Any] | None = None, curvature: float = 0.1886, ramp: float = 1.0) -> Scenario:
    """A clamped rod whose last three quarters curl toward +z, onto a fixed sphere."""
    length = 0.1
    nodes, edges = rod(9, length)
    topology = build_topology(nodes, edges)
    config = _config(
        overrides,
        material=MaterialParams(rho_rod=1200.0, youngs_rod=2e8, nu_rod=0.5, r0=1e-3),
        environment=EnvironmentParams(obstacles=(GRIPPER_SPHERE,)),
        solver=SolverSettings(dt=1e-2, total_time=ramp),
        output=OutputSettings(log_every=5, tracked_nodes=(len(nodes) - 1,)),
        boundary=_rod_clamp(),
    )
    centres = nodes[_stencil_centres(topology), 0]
    springs = np.flatnonzero(centres >= 0.25 * length - 1e-12)
    schedule = ActuationSchedule(
        "kappa2", springs, times=np.array([0.0, ramp]), values=np.array([0.0, curvature]), tag="curl"
    )
    return Scenario("gripper", GeometryArrays(nodes=nodes, edges=edges), config, schedules=[schedule])


_BUILDERS: dict[str, Callable[..., Scenario]] = {
    "pneunet": pneunet,
    "earthworm": earthworm,
    "manta": manta,
    "snake": snake,
    "parachute": parachute,
    "rod-drop": rod_drop,
    "gripper": gripper,
}


def build_scenario(name: str, overrides: Mapping[str, Any] | None = None, **options: Any) -> Scenario:
    """A bundled scenario by name; ``overrides`` use config-file keys, ``options`` go to the builder."""
    if name not in _BUILDERS:
        raise ValueError(f"Invalid scenario: {name!r}. Must be one of {', '.join(BUNDLED_SCENARIOS)}.")
    scenario = _BUILDERS[name](overrides, **options)
    log.info("Scenario %s: %d nodes, shell_mode=%s", name, len(scenario.geometry.nodes), scenario.config.shell_mode)
    return scenario


# --- cantilevers -----------------------------------------------------------------


def rod_cantilever(
    youngs: float,
    n_nodes: int = 21,
    length: float = 0.1,
    r0: float = 1e-3,
    rho: float = 1200.0,
    nu: float = 0.5,
) -> Scenario:
    """A rod cantilever with ``n_nodes`` on its free span plus one clamp node behind x = 0."""
    spacing = length / (n_nodes - 1)
    nodes, edges = rod(n_nodes + 1, length + spacing, origin=(-spacing, 0.0, 0.0))
    config = ScenarioConfig(
        material=MaterialParams(rho_rod=rho, youngs_rod=youngs, nu_rod=nu, r0=r0),
        environment=EnvironmentParams(gravity=GRAVITY),
        solver=SolverSettings(static=True, total_time=0.0, tolerance=1e-10, max_iterations=40),
        output=OutputSettings(tracked_nodes=(n_nodes,)),
        boundary=_rod_clamp(),
    )
    return Scenario("rod-cantilever", GeometryArrays(nodes=nodes, edges=edges), config)


def shell_cantilever(
    model: str,
    family: str = "equilateral",
    youngs: float = 2e9,
    length: float = 0.1,
    width: float = 0.02,
    h: float = 1e-3,
    rho: float = 1200.0,
    nu: float = 0.5,
    rows: int = 2,
    seed: int = 0,
    hinge_stiffness_factor: float = HINGE_LATTICE_FACTOR,
) -> Scenario:
    """A shell strip clamped on ``x <= 0``; mid-edge ξ on edges inside the clamp are fixed too.

    Hinge strips default to the lattice-calibrated stiffness so their sag is comparable with
    Euler–Bernoulli beam theory.
    """
    nodes, tris = strip_mesh(family, length, width, rows, seed)
    clamp = clamp_nodes(nodes)
    fixed_edges: tuple[int, ...] = ()
    if model == "midedge":
        topology = build_topology(nodes, None, tris)
        inside = np.all(np.isin(topology.shell_edges, clamp), axis=1)
        fixed_edges = tuple(int(e) for e in np.flatnonzero(inside))
    config = ScenarioConfig(
        material=MaterialParams(
            rho_shell=rho, youngs_shell=youngs, nu_shell=nu, h=h, hinge_stiffness_factor=hinge_stiffness_factor
        ),
        environment=EnvironmentParams(gravity=GRAVITY),
        solver=SolverSettings(static=True, total_time=0.0, tolerance=1e-10, max_iterations=40),
        output=OutputSettings(tracked_nodes=tuple(int(n) for n in tip_nodes(nodes))),
        boundary=BoundaryConditions(fixed_nodes=tuple(int(n) for n in clamp), fixed_shell_edges=fixed_edges),
        shell_mode=model,
    )
    return Scenario(f"{model}-cantilever-{family}", GeometryArrays(nodes=nodes, triangles=tris), config)
