"""SoftBody: one structure with its springs, mass, frames and state, plus sparse force assembly."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from numpy.typing import ArrayLike, NDArray

from .actuation import ActuationSchedule, apply_actuation
from .config import ContactParams, MaterialParams, ScenarioConfig
from .contact import assemble_imc
from .environment import EnvironmentForces, nodal_weight
from .frames import FrameSet, StateVector, init_reference_frames, snapshot_tau0, time_update_frames
from .integrator import SolverDivergenceError, apply_boundary_conditions
from .rod_energy import EnergyContribution, bend_contribution, stretch_contribution, twist_contribution
from .shell_energy import hinge_contribution, midedge_contribution
from .topology import DofLayout, LumpedMass, MeshTopology, SpringSet, build_springs, lumped_mass

log = logging.getLogger("rodshell.system")

ELASTIC_FAMILIES = ("stretch", "bend", "twist", "hinge", "midedge")


@dataclass
class Assembly:
    """Summed gradient of everything but inertia, its Jacobian, and the per-term energies."""

    gradient: NDArray[np.float64]
    jacobian: sp.csr_matrix | None
    energies: dict[str, float]
    contact_gap: float = float("inf")


def assemble_contributions(
    contributions: list[EnergyContribution], size: int, hessian: bool = True
) -> tuple[NDArray[np.float64], sp.csr_matrix | None]:
    """Scatter local gradients and Hessians into a dense vector and a CSR matrix."""
    grad = np.zeros(size)
    rows, cols, vals = [], [], []
    for c in contributions:
        if len(c) == 0:
            continue
        grad += c.gradient_vector(size)
        if hessian:
            r, k, v = c.hessian_triplets()
            rows.append(r)
            cols.append(k)
            vals.append(v)
    if not hessian:
        return grad, None
    if not rows:
        return grad, sp.csr_matrix((size, size))
    jac = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(size, size)
    ).tocsr()
    return grad, jac


@dataclass
class SoftBody:
    """A rod, shell or rod-shell structure ready to be stepped.

    ``state`` and ``frames`` always describe the last committed time; Newton trial states
    never touch them.
    """

    topology: MeshTopology
    material: MaterialParams
    springs: SpringSet
    layout: DofLayout
    mass: LumpedMass
    frames: FrameSet
    state: StateVector
    environment: EnvironmentForces
    contact: ContactParams = field(default_factory=ContactParams)
    schedules: list[ActuationSchedule] = field(default_factory=list)

    @classmethod
    def from_config(cls, topology: MeshTopology, config: ScenarioConfig) -> SoftBody:
        """Springs, mass, boundary conditions and initial state from a scenario config."""
        mode = config.shell_mode
        theta0 = np.full(topology.n_twist_edges, config.initial.theta)
        springs = build_springs(topology, config.material, mode, theta0=theta0)
        layout = apply_boundary_conditions(
            DofLayout.from_topology(topology, mode), config.boundary, planar=config.solver.planar
        )
        mass = lumped_mass(topology, springs, config.material)

        q0 = np.zeros(layout.size)
        q0[: 3 * topology.n_nodes] = topology.node_positions.ravel()
        q0[layout.theta_offset : layout.xi_offset] = theta0
        u0 = np.zeros(layout.size)
        u0[: 3 * topology.n_nodes] = np.tile(config.initial.velocity, topology.n_nodes)
        u0[layout.theta_offset : layout.xi_offset] = config.initial.theta_rate
        u0[layout.fixed_indices] = 0.0

        body = cls(
            topology=topology,
            material=config.material,
            springs=springs,
            layout=layout,
            mass=mass,
            frames=init_reference_frames(topology, q0),
            state=StateVector(q=q0, u=u0),
            environment=EnvironmentForces.build(topology, config.material, config.environment, mass, layout.size),
            contact=config.contact,
        )
        log.debug(
            "Built body: %d nodes, %d DOFs (%d free), mode=%s",
            topology.n_nodes,
            layout.size,
            len(layout.free_indices),
            mode,
        )
        return body

    @property
    def n_dof(self) -> int:
        return self.layout.size

    def add_point_mass(self, node: int, mass: float) -> None:
        """Add a dense point mass; the buoyant weight is rebuilt to include it."""
        self.mass.add_point_mass(node, mass)
        env = self.environment
        if env.params.has_gravity:
            env.weight = nodal_weight(self.topology, self.material, env.params, self.mass)
        log.debug("Point mass %.4g kg on node %d", mass, node)

    def frames_at(self, q: NDArray[np.float64], base: FrameSet | None = None) -> FrameSet:
        """Frames for a trial ``q``, time-transported from ``base`` (the committed frames by default)."""
        return time_update_frames(self.frames if base is None else base, q, self.topology)

    # --- elastic -------------------------------------------------------------

    def elastic_contributions(
        self, q: NDArray[np.float64], frames: FrameSet, hessian: bool = True
    ) -> dict[str, EnergyContribution]:
        s = self.springs
        out = {
            "stretch": stretch_contribution(s.stretch, q, hessian),
            "bend": bend_contribution(s.bend_twist, q, frames, self.layout, hessian),
            "twist": twist_contribution(s.bend_twist, q, frames, self.layout, hessian),
        }
        if s.hinge is not None:
            out["hinge"] = hinge_contribution(s.hinge, q, self.layout, hessian)
        if s.midedge is not None:
            out["midedge"] = midedge_contribution(s.midedge, q, frames.tau0, self.layout, hessian)
        return out

    def elastic_energy(self, q: ArrayLike | None = None) -> dict[str, float]:
        """Per-family elastic energy at ``q`` (the committed state by default)."""
        q = self.state.q if q is None else np.asarray(q, dtype=float)
        contributions = self.elastic_contributions(q, self.frames_at(q), hessian=False)
        return {name: contributions[name].total if name in contributions else 0.0 for name in ELASTIC_FAMILIES}

    def kinetic_energy(self, u: ArrayLike | None = None) -> float:
        u = self.state.u if u is None else np.asarray(u, dtype=float)
        return 0.5 * float(np.dot(self.mass.values * u, u))

    def total_energy(self) -> float:
        """Elastic plus kinetic plus gravitational potential of the committed state."""
        q = self.state.q
        gravity = 0.0
        if self.environment.params.has_gravity:
            x = self.state.positions(self.topology.n_nodes)
            gravity = -float(np.sum(self.environment.weight * x))
        return sum(self.elastic_energy(q).values()) + self.kinetic_energy() + gravity

    # --- full assembly ---------------------------------------------------------

    def assemble(
        self,
        q: NDArray[np.float64],
        q_prev: NDArray[np.float64],
        dt: float,
        frames: FrameSet,
        time: float,
        load_scale: float = 1.0,
        hessian: bool = True,
    ) -> Assembly:
        """``∇E − F_ext − F_contact`` at ``q`` and, optionally, its sparse Jacobian.

        Velocity-dependent forces use ``(q − q_prev)/dt``.
        """
        terms: dict[str, EnergyContribution] = dict(self.elastic_contributions(q, frames, hessian))
        terms.update(self.environment.contributions(q, q_prev, dt, load_scale, hessian))
        gap = float("inf")
        if self.contact.enabled:
            imc = assemble_imc(self.topology, q, q_prev, dt, self.contact, self.material, hessian)
            terms["contact"], terms["friction"] = imc.contact, imc.friction
            gap = imc.min_distance
        grad, jac = assemble_contributions(list(terms.values()), self.n_dof, hessian)

        if len(self.environment.custom):
            force, custom_jac = self.environment.custom.evaluate(q, (q - q_prev) / dt, time, load_scale)
            grad -= force
            if hessian and custom_jac is not None:
                jac = jac - custom_jac

        bad = np.flatnonzero(~np.isfinite(grad))
        if len(bad):
            raise SolverDivergenceError(f"Non-finite force at DOF {int(bad[0])} (t={time:.6g}).")
        energies = {name: c.total for name, c in terms.items()}
        return Assembly(gradient=grad, jacobian=jac, energies=energies, contact_gap=gap)

    # --- stepping hooks ----------------------------------------------------------

    def actuate(self, time: float) -> None:
        """Overwrite natural quantities from every schedule at ``time``."""
        if not self.schedules:
            return
        apply_actuation(self.springs, self.schedules, time)

    def commit(self, q: NDArray[np.float64], u: NDArray[np.float64], time: float) -> None:
        """Accept a converged step: transport frames, refresh τ⁰, store the state."""
        frames = self.frames_at(q)
        if self.topology.n_shell_edges:
            x = q[: 3 * self.topology.n_nodes].reshape(-1, 3)
            frames.normals, frames.tau0 = snapshot_tau0(self.topology, x)
        self.frames = frames
        self.state = StateVector(q=q.copy(), u=u.copy(), time=time)
