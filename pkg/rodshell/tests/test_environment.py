"""Tests for gravity, floor, damping, RFT, drag, sphere obstacles and custom forces."""

import math

import numpy as np
import pytest
import scipy.sparse as sp
from numpy.testing import assert_allclose

from rodshell.config import EnvironmentParams, FloorParams, MaterialParams, SphereObstacle
from rodshell.environment import (
    CustomForceRegistry,
    EnvironmentForces,
    aero_drag,
    buoyancy_scale,
    constant_nodal_force,
    floor_contributions,
    gravity_contribution,
    nodal_weight,
    node_radii,
    register_custom_force,
    rft_force,
    sphere_clearance,
    sphere_obstacle,
    viscous_damping,
)
from rodshell.topology import build_topology, lumped_mass, nodal_lengths


def _lifted(topology, height):
    x = topology.node_positions.copy()
    x[:, 2] = height
    return x.ravel()


def _moved(q, dt, velocity):
    """Previous positions such that the backward-difference velocity is ``velocity``."""
    n = len(q) // 3
    return q - dt * np.tile(velocity, n)


class TestGravity:
    def test_buoyancy_scale(self):
        assert buoyancy_scale(1200.0, 1000.0) == pytest.approx(1.0 / 6.0)

    def test_buoyancy_rejects_zero_density(self):
        with pytest.raises(ValueError, match="Invalid density"):
            buoyancy_scale(0.0, 1.0)

    def test_rod_weight(self, straight_rod, rod_springs, material):
        env = EnvironmentParams(gravity=(0.0, 0.0, -9.8))
        mass = lumped_mass(straight_rod, rod_springs, material)
        weight = nodal_weight(straight_rod, material, env, mass)
        total = material.rho_rod * math.pi * material.r0**2 * 0.1 * 9.8
        assert weight[:, 2].sum() == pytest.approx(-total)
        assert_allclose(weight[:, :2], 0.0)

    def test_buoyant_rod(self, straight_rod, rod_springs, material):
        env = EnvironmentParams(gravity=(0.0, 0.0, -9.8), rho_medium=1200.0)
        mass = lumped_mass(straight_rod, rod_springs, material)
        assert_allclose(nodal_weight(straight_rod, material, env, mass), 0.0)

    def test_point_mass_adds_weight(self, straight_rod, rod_springs, material):
        env = EnvironmentParams(gravity=(0.0, 0.0, -10.0))
        mass = lumped_mass(straight_rod, rod_springs, material)
        before = nodal_weight(straight_rod, material, env, mass)
        mass.add_point_mass(4, 0.01)
        after = nodal_weight(straight_rod, material, env, mass)
        assert after[4, 2] - before[4, 2] == pytest.approx(-0.1)

    def test_potential(self):
        weight = np.array([[0.0, 0.0, -2.0], [0.0, 0.0, -2.0]])
        q = np.array([0.0, 0.0, 1.0, 0.0, 0.0, 3.0])
        c = gravity_contribution(weight, q)
        assert c.total == pytest.approx(8.0)
        assert_allclose(c.gradient_vector(6), [0, 0, 2.0, 0, 0, 2.0])
        assert_allclose(c.hessian, 0.0)

    def test_load_scale(self):
        weight = np.array([[0.0, 0.0, -2.0]])
        c = gravity_contribution(weight, np.zeros(3), scale=0.25, hessian=False)
        assert c.gradient_vector(3)[2] == pytest.approx(0.5)
        assert c.hessian is None


class TestFloor:
    def test_node_radii(self, rod_shell_joint, material):
        radii = node_radii(rod_shell_joint, material)
        assert_allclose(radii[[2, 3, 4]], material.r0)
        assert_allclose(radii[[0, 1]], 0.5 * material.h)

    def test_far_nodes_skipped(self, straight_rod, material):
        q = _lifted(straight_rod, 1.0)
        contact, friction = floor_contributions(straight_rod, material, FloorParams(enabled=True), q, q, 1e-3)
        assert len(contact) == 0
        assert len(friction) == 0

    def test_pushes_up(self, straight_rod, material):
        q = _lifted(straight_rod, 5e-4)
        contact, friction = floor_contributions(straight_rod, material, FloorParams(enabled=True), q, q, 1e-3)
        assert len(contact) == 5
        force = -contact.gradient_vector(15).reshape(5, 3)
        assert (force[:, 2] > 0).all()
        assert_allclose(force[:, :2], 0.0)
        assert len(friction) == 0

    def test_tilted_floor(self, straight_rod, material):
        floor = FloorParams(enabled=True, normal=(0.0, 1.0, 1.0))
        q = straight_rod.node_positions.ravel()
        contact, _ = floor_contributions(straight_rod, material, floor, q, q, 1e-3)
        force = -contact.gradient_vector(15).reshape(5, 3)
        assert_allclose(force[:, 1], force[:, 2])

    def test_friction_dissipates(self, straight_rod, material):
        dt = 1e-3
        q = _lifted(straight_rod, 5e-4)
        q_prev = _moved(q, dt, [0.02, 0.01, 0.0])
        floor = FloorParams(enabled=True, mu=0.4)
        _, friction = floor_contributions(straight_rod, material, floor, q, q_prev, dt)
        force = -friction.gradient_vector(15).reshape(5, 3)
        assert np.sum(force * np.tile([0.02, 0.01, 0.0], (5, 1))) < 0.0
        assert_allclose(force[:, 2], 0.0, atol=1e-15)

    def test_friction_bounded_by_coulomb(self, straight_rod, material):
        dt = 1e-3
        q = _lifted(straight_rod, 5e-4)
        floor = FloorParams(enabled=True, mu=0.4)
        contact, friction = floor_contributions(straight_rod, material, floor, q, _moved(q, dt, [1.0, 0, 0]), dt)
        normal = np.abs(contact.gradient_vector(15).reshape(5, 3)[:, 2])
        tangential = np.linalg.norm(friction.gradient_vector(15).reshape(5, 3), axis=1)
        assert (tangential <= 0.4 * normal * (1 + 1e-12)).all()


class TestViscous:
    def test_force(self, straight_rod):
        dt = 1e-2
        lengths = nodal_lengths(straight_rod)
        q = straight_rod.node_positions.ravel()
        c = viscous_damping(lengths, 2.0, q, _moved(q, dt, [0.0, 1.0, 0.0]), dt)
        force = -c.gradient_vector(15).reshape(5, 3)
        assert_allclose(force[:, 1], -2.0 * lengths)
        assert c.total == 0.0

    def test_jacobian(self, straight_rod):
        lengths = nodal_lengths(straight_rod)
        q = straight_rod.node_positions.ravel()
        c = viscous_damping(lengths, 2.0, q, q, 0.5)
        assert_allclose(c.hessian[0], 4.0 * lengths[0] * np.eye(3))


class TestRft:
    def test_tangential_and_normal(self, straight_rod):
        dt = 1e-3
        q = straight_rod.node_positions.ravel()
        along = -rft_force(straight_rod, 0.1, 0.5, q, _moved(q, dt, [1.0, 0, 0]), dt).gradient_vector(15)
        across = -rft_force(straight_rod, 0.1, 0.5, q, _moved(q, dt, [0, 1.0, 0]), dt).gradient_vector(15)
        assert along.reshape(5, 3)[:, 0].sum() == pytest.approx(-0.1 * 0.1)
        assert across.reshape(5, 3)[:, 1].sum() == pytest.approx(-0.5 * 0.1)

    def test_anisotropy_gives_thrust(self, straight_rod):
        dt = 1e-3
        q = straight_rod.node_positions.ravel()
        diagonal = np.array([1.0, 1.0, 0.0]) / math.sqrt(2.0)
        force = -rft_force(straight_rod, 0.1, 0.5, q, _moved(q, dt, diagonal), dt).gradient_vector(15)
        total = force.reshape(5, 3).sum(axis=0)
        # resistance is weaker along the body, so the net force is not antiparallel to the motion
        assert abs(total[0]) < abs(total[1])

    def test_no_rods(self, two_triangles):
        q = two_triangles.node_positions.ravel()
        assert len(rft_force(two_triangles, 0.1, 0.5, q, q, 1e-3)) == 0


class TestDrag:
    def test_normal_motion(self, two_triangles):
        dt = 1e-3
        q = two_triangles.node_positions.ravel()
        c = aero_drag(two_triangles, 1.2, 1.0, q, _moved(q, dt, [0.0, 0.0, 1.0]), dt)
        force = -c.gradient_vector(12).reshape(4, 3)
        assert force[:, 2].sum() == pytest.approx(-1.2 * 0.8 / 2.0)
        assert_allclose(force[:, :2], 0.0, atol=1e-15)

    def test_in_plane_motion_is_free(self, two_triangles):
        dt = 1e-3
        q = two_triangles.node_positions.ravel()
        c = aero_drag(two_triangles, 1.2, 1.0, q, _moved(q, dt, [1.0, 0.0, 0.0]), dt)
        assert_allclose(c.gradient_vector(12), 0.0, atol=1e-15)

    def test_no_shell(self, straight_rod):
        q = straight_rod.node_positions.ravel()
        assert len(aero_drag(straight_rod, 1.2, 1.0, q, q, 1e-3)) == 0


class TestSphere:
    def _over(self, height):
        return build_topology([[-0.05, 0.0, height], [0.05, 0.0, height]], [[0, 1]])

    def test_clearance(self, material):
        topo = self._over(0.0205)
        gap = sphere_clearance(topo, material, SphereObstacle(), topo.node_positions.ravel())
        assert gap == pytest.approx(0.0205 - 0.02 - material.r0)

    def test_pushes_away(self, material):
        topo = self._over(0.0205)
        q = topo.node_positions.ravel()
        contact, friction = sphere_obstacle(topo, material, SphereObstacle(), q, q, 1e-3)
        force = -contact.gradient_vector(6).reshape(2, 3)
        assert (force[:, 2] > 0).all()
        assert force[0, 2] == pytest.approx(force[1, 2])
        assert len(friction) == 0

    def test_out_of_reach(self, material):
        topo = self._over(0.05)
        q = topo.node_positions.ravel()
        contact, _ = sphere_obstacle(topo, material, SphereObstacle(), q, q, 1e-3)
        assert len(contact) == 0

    def test_friction_dissipates(self, material):
        dt = 1e-3
        topo = self._over(0.0205)
        q = topo.node_positions.ravel()
        q_prev = _moved(q, dt, [0.0, 0.05, 0.0])
        _, friction = sphere_obstacle(topo, material, SphereObstacle(mu=0.3), q, q_prev, dt)
        force = -friction.gradient_vector(6).reshape(2, 3)
        assert force[:, 1].sum() < 0.0

    def test_edge_through_centre(self, material):
        topo = self._over(0.0)
        q = topo.node_positions.ravel()
        contact, _ = sphere_obstacle(topo, material, SphereObstacle(), q, q, 1e-3)
        overlap = 0.02 + material.r0
        assert contact.total == pytest.approx(20.0 * overlap**2)
        force = -contact.gradient_vector(6).reshape(2, 3)
        assert_allclose(force[:, 1], 20.0 * overlap)
        assert_allclose(force[:, [0, 2]], 0.0, atol=1e-12)
        assert np.isfinite(contact.hessian).all()


class TestCustomForces:
    def test_register_and_evaluate(self):
        registry = CustomForceRegistry(9)
        handle = registry.register(constant_nodal_force(1, [0.0, 0.0, 2.0], 9))
        force, jac = registry.evaluate(np.zeros(9), np.zeros(9), 0.0, scale=0.5)
        assert force.tolist() == [0, 0, 0, 0, 0, 1.0, 0, 0, 0]
        assert jac is None
        registry.remove(handle)
        assert len(registry) == 0

    def test_jacobian_summed(self):
        registry = CustomForceRegistry(3)

        def spring(q, u, t):
            return -q, -np.eye(3)

        register_custom_force(registry, spring)
        register_custom_force(registry, spring)
        force, jac = registry.evaluate(np.ones(3), np.zeros(3), 0.0)
        assert force.tolist() == [-2.0, -2.0, -2.0]
        assert isinstance(jac, sp.csr_matrix)
        assert_allclose(jac.toarray(), -2.0 * np.eye(3))

    def test_rejects_wrong_length(self):
        registry = CustomForceRegistry(6)
        with pytest.raises(ValueError, match="Invalid custom force length"):
            registry.register(lambda q, u, t: np.zeros(5))

    def test_unknown_handle(self):
        with pytest.raises(KeyError, match="Unknown custom force handle"):
            CustomForceRegistry(3).remove(7)

    def test_constant_force_validation(self):
        with pytest.raises(ValueError, match="3-vector"):
            constant_nodal_force(0, [1.0, 2.0], 6)
        with pytest.raises(ValueError, match="Invalid node index"):
            constant_nodal_force(2, [1.0, 2.0, 3.0], 6)


class TestEnvironmentForces:
    def test_only_enabled_forces(self, straight_rod, rod_springs, material):
        mass = lumped_mass(straight_rod, rod_springs, material)
        env = EnvironmentParams(
            gravity=(0.0, 0.0, -9.8),
            viscosity=1.0,
            floor={"enabled": True},
            obstacles=[{"center": (0.0, 0.0, -0.5)}],
        )
        forces = EnvironmentForces.build(straight_rod, material, env, mass, 19)
        q = np.concatenate([straight_rod.node_positions.ravel(), np.zeros(4)])
        out = forces.contributions(q, q, 1e-3)
        assert set(out) == {"gravity", "floor", "floor_friction", "viscous", "sphere0", "sphere0_friction"}

    def test_nothing_enabled(self, straight_rod, rod_springs):
        material = MaterialParams()
        mass = lumped_mass(straight_rod, rod_springs, material)
        forces = EnvironmentForces.build(straight_rod, material, EnvironmentParams(), mass, 19)
        q = np.concatenate([straight_rod.node_positions.ravel(), np.zeros(4)])
        assert forces.contributions(q, q, 1e-3) == {}
        assert_allclose(forces.weight, 0.0)
