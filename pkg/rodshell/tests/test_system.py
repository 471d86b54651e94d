"""Tests for SoftBody construction, energies and sparse assembly."""

import math

import numpy as np
import pytest
import scipy.sparse as sp
from numpy.testing import assert_allclose

from rodshell.config import (
    BoundaryConditions,
    EnvironmentParams,
    InitialConditions,
    ScenarioConfig,
    SolverSettings,
)
from rodshell.rod_energy import EnergyContribution
from rodshell.system import ELASTIC_FAMILIES, SoftBody, assemble_contributions
from rodshell.topology import build_topology


def _body(topology, **kwargs):
    return SoftBody.from_config(topology, ScenarioConfig(**kwargs))


class TestAssembleContributions:
    def _pair(self):
        a = EnergyContribution(
            np.zeros(1), np.array([[1.0, 2.0]]), np.array([[[2.0, 1.0], [1.0, 2.0]]]), np.array([[0, 2]])
        )
        b = EnergyContribution(np.zeros(1), np.array([[3.0]]), np.array([[[5.0]]]), np.array([[2]]))
        return a, b

    def test_sums_overlapping_entries(self):
        grad, jac = assemble_contributions(list(self._pair()), 3)
        assert grad.tolist() == [1.0, 0.0, 5.0]
        assert isinstance(jac, sp.csr_matrix)
        assert jac.toarray().tolist() == [[2.0, 0.0, 1.0], [0.0, 0.0, 0.0], [1.0, 0.0, 7.0]]

    def test_without_hessian(self):
        grad, jac = assemble_contributions(list(self._pair()), 3, hessian=False)
        assert jac is None
        assert grad[2] == 5.0

    def test_empty(self):
        grad, jac = assemble_contributions([EnergyContribution.empty(6)], 4)
        assert grad.tolist() == [0.0] * 4
        assert jac.shape == (4, 4)
        assert jac.nnz == 0


class TestFromConfig:
    def test_layout_and_state(self, straight_rod):
        body = _body(
            straight_rod,
            boundary=BoundaryConditions(fixed_nodes=(0,)),
            initial=InitialConditions(velocity=(0.0, 1.0, 0.0), theta_rate=2.0),
        )
        assert body.n_dof == 19
        assert body.layout.fixed_indices.tolist() == [0, 1, 2]
        u = body.state.u
        assert u[:3].tolist() == [0.0, 0.0, 0.0]
        assert u[4] == 1.0
        assert_allclose(u[15:], 2.0)
        assert body.state.time == 0.0

    def test_initial_theta(self, straight_rod):
        body = _body(straight_rod, initial=InitialConditions(theta=0.3))
        assert_allclose(body.state.q[15:], 0.3)
        assert_allclose(body.elastic_energy()["twist"], 0.0, atol=1e-20)

    def test_planar_fixes_z_and_theta(self, straight_rod):
        body = _body(straight_rod, solver=SolverSettings(planar=True))
        fixed = set(body.layout.fixed_indices.tolist())
        assert set(range(2, 15, 3)) <= fixed
        assert set(range(15, 19)) <= fixed

    def test_midedge_mode(self, two_triangles):
        body = _body(two_triangles, shell_mode="midedge")
        assert body.n_dof == 17
        assert body.springs.hinge is None


class TestEnergies:
    def test_rest_state_is_stress_free(self, rod_shell_joint):
        body = _body(rod_shell_joint)
        energies = body.elastic_energy()
        assert set(energies) == set(ELASTIC_FAMILIES)
        assert_allclose(list(energies.values()), 0.0, atol=1e-18)

    def test_kinetic(self, straight_rod):
        body = _body(straight_rod, initial=InitialConditions(velocity=(0.0, 0.0, 2.0)))
        total_mass = body.mass.nodal.sum()
        assert body.kinetic_energy() == pytest.approx(0.5 * total_mass * 4.0)

    def test_gravity_potential(self, straight_rod):
        body = _body(straight_rod, environment=EnvironmentParams(gravity=(0.0, 0.0, -10.0)))
        body.state.q[2:15:3] += 1.0
        assert body.total_energy() == pytest.approx(body.mass.nodal.sum() * 10.0)

    def test_point_mass_updates_weight(self, straight_rod):
        body = _body(straight_rod, environment=EnvironmentParams(gravity=(0.0, 0.0, -10.0)))
        before = body.environment.weight[4, 2]
        body.add_point_mass(4, 0.02)
        assert body.environment.weight[4, 2] == pytest.approx(before - 0.2)
        assert body.mass.values[14] == pytest.approx(body.mass.nodal[4])


class TestAssemble:
    def test_rest_gradient_is_zero(self, straight_rod):
        body = _body(straight_rod)
        q = body.state.q
        asm = body.assemble(q, q, 1e-3, body.frames, 0.0)
        assert_allclose(asm.gradient, 0.0, atol=1e-12)
        assert asm.jacobian.shape == (19, 19)
        assert asm.contact_gap == math.inf
        assert set(asm.energies) == {"stretch", "bend", "twist", "hinge"}

    def test_gravity_only_load(self, straight_rod):
        body = _body(straight_rod, environment=EnvironmentParams(gravity=(0.0, 0.0, -9.8)))
        q = body.state.q
        grad = body.assemble(q, q, 1e-3, body.frames, 0.0).gradient
        assert_allclose(grad[2:15:3], 9.8 * body.mass.nodal, rtol=1e-12)

    def test_jacobian_matches_gradient_difference(self, straight_rod, rng):
        body = _body(straight_rod)
        q = body.state.q + 1e-4 * rng.normal(size=19)
        frames = body.frames_at(q)
        jac = body.assemble(q, q, 1e-3, frames, 0.0).jacobian.toarray()
        h = 1e-8
        column = 7
        qp, qm = q.copy(), q.copy()
        qp[column] += h
        qm[column] -= h
        fd = (
            body.assemble(qp, qp, 1e-3, body.frames_at(qp, frames), 0.0, hessian=False).gradient
            - body.assemble(qm, qm, 1e-3, body.frames_at(qm, frames), 0.0, hessian=False).gradient
        ) / (2 * h)
        assert_allclose(jac[:, column], fd, rtol=1e-4, atol=1e-4 * np.abs(fd).max())

    def test_custom_force(self, straight_rod):
        body = _body(straight_rod)
        load = np.zeros(19)
        load[14] = 3.0
        body.environment.custom.register(lambda q, u, t: load)
        q = body.state.q
        assert body.assemble(q, q, 1e-3, body.frames, 0.0).gradient[14] == pytest.approx(-3.0)


class TestCommit:
    def test_commit_stores_state(self, straight_rod):
        body = _body(straight_rod)
        q = body.state.q.copy()
        q[:15] += 0.01
        body.commit(q, np.ones(19), 0.5)
        assert body.state.time == 0.5
        assert_allclose(body.state.q, q)
        q[0] = 99.0
        assert body.state.q[0] != 99.0

    def test_commit_refreshes_tau0(self):
        nodes = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
        body = _body(build_topology(nodes, None, [[0, 1, 2]]), shell_mode="midedge")
        rotated = nodes[:, [0, 2, 1]]
        q = body.state.q.copy()
        q[:9] = rotated.ravel()
        body.commit(q, np.zeros_like(q), 0.1)
        assert_allclose(np.abs(body.frames.normals[:, 1]), 1.0, atol=1e-12)
