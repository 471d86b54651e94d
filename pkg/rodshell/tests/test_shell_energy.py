"""Tests for hinge and mid-edge shell bending kernels."""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from rodshell.frames import SingularConfigurationError, snapshot_tau0
from rodshell.shell_energy import (
    hinge_angle,
    hinge_angle_derivatives,
    hinge_contribution,
    midedge_coefficients,
    midedge_contribution,
    midedge_shape_operator,
)
from rodshell.topology import DofLayout, build_springs


def _folded(topology, beta):
    """Rotate node 3 of the two-triangle fixture about the x axis by ``beta``."""
    x = topology.node_positions.copy()
    x[3] = [0.5, -0.8 * math.cos(beta), 0.8 * math.sin(beta)]
    return x


class TestHingeAngle:
    def test_flat(self):
        assert hinge_angle([0, 0, 0], [1, 0, 0], [0.5, 1, 0], [0.5, -1, 0]) == pytest.approx(0.0)

    def test_fold_sign(self):
        up = hinge_angle([0, 0, 0], [1, 0, 0], [0.5, 1, 0], [0.5, -math.cos(0.3), math.sin(0.3)])
        down = hinge_angle([0, 0, 0], [1, 0, 0], [0.5, 1, 0], [0.5, -math.cos(0.3), -math.sin(0.3)])
        assert up == pytest.approx(-0.3)
        assert down == pytest.approx(0.3)

    def test_degenerate(self):
        with pytest.raises(SingularConfigurationError):
            hinge_angle([0, 0, 0], [1, 0, 0], [2, 0, 0], [0.5, -1, 0])

    def test_derivative_matches_difference(self, rng):
        x = rng.normal(size=(1, 4, 3))
        grad, _ = hinge_angle_derivatives(*(x[:, k] for k in range(4)))
        h = 1e-6
        flat = x.reshape(1, 12)
        for i in range(12):
            xp, xm = flat.copy(), flat.copy()
            xp[0, i] += h
            xm[0, i] -= h
            fp = hinge_angle(*(xp.reshape(1, 4, 3)[:, k] for k in range(4)))
            fm = hinge_angle(*(xm.reshape(1, 4, 3)[:, k] for k in range(4)))
            assert grad[0, i] == pytest.approx(float((fp - fm)[0]) / (2 * h), rel=1e-5, abs=1e-7)


class TestHingeContribution:
    def test_flat_is_zero(self, two_triangles, material):
        springs = build_springs(two_triangles, material)
        layout = DofLayout.from_topology(two_triangles)
        c = hinge_contribution(springs.hinge, two_triangles.node_positions.ravel(), layout)
        assert c.total == pytest.approx(0.0, abs=1e-20)

    def test_fold_energy(self, two_triangles, material):
        springs = build_springs(two_triangles, material)
        layout = DofLayout.from_topology(two_triangles)
        c = hinge_contribution(springs.hinge, _folded(two_triangles, 0.4).ravel(), layout)
        assert c.total == pytest.approx(0.5 * springs.hinge.kb[0] * 0.4**2)

    def test_actuated_rest_angle(self, two_triangles, material):
        springs = build_springs(two_triangles, material)
        springs.hinge.phi_bar[:] = -0.4
        layout = DofLayout.from_topology(two_triangles)
        c = hinge_contribution(springs.hinge, _folded(two_triangles, 0.4).ravel(), layout)
        assert c.total == pytest.approx(0.0, abs=1e-18)

    def test_translation_gradient_sums_to_zero(self, two_triangles, material):
        springs = build_springs(two_triangles, material)
        layout = DofLayout.from_topology(two_triangles)
        grad = hinge_contribution(springs.hinge, _folded(two_triangles, 0.4).ravel(), layout).gradient_vector(12)
        assert_allclose(grad.reshape(4, 3).sum(axis=0), 0.0, atol=1e-12)


class TestMidedge:
    def _setup(self, topology, material):
        springs = build_springs(topology, material, "midedge")
        layout = DofLayout.from_topology(topology, "midedge")
        _, tau0 = snapshot_tau0(topology, topology.node_positions)
        return springs.midedge, layout, tau0

    def test_flat_rest_is_zero(self, two_triangles, material):
        elements, layout, tau0 = self._setup(two_triangles, material)
        q = np.concatenate([two_triangles.node_positions.ravel(), np.zeros(5)])
        c = midedge_contribution(elements, q, tau0, layout)
        assert c.total == pytest.approx(0.0, abs=1e-20)
        assert c.hessian.shape == (2, 12, 12)

    def test_shape_operator_flat(self, two_triangles, material):
        elements, _, tau0 = self._setup(two_triangles, material)
        shape = midedge_shape_operator(elements, two_triangles.node_positions, np.zeros(5), tau0)
        assert_allclose(shape, 0.0, atol=1e-12)

    def test_xi_bends(self, two_triangles, material):
        elements, layout, tau0 = self._setup(two_triangles, material)
        xi = np.zeros(5)
        xi[0] = 0.05
        q = np.concatenate([two_triangles.node_positions.ravel(), xi])
        assert midedge_contribution(elements, q, tau0, layout).total > 0.0
        coeff, _ = midedge_coefficients(elements, two_triangles.node_positions, xi, tau0)
        assert np.count_nonzero(np.abs(coeff) > 0) == 2

    def test_fold_bends(self, two_triangles, material):
        elements, layout, tau0 = self._setup(two_triangles, material)
        q = np.concatenate([_folded(two_triangles, 0.3).ravel(), np.zeros(5)])
        assert midedge_contribution(elements, q, tau0, layout).total > 0.0

    def test_indices_end_with_xi(self, two_triangles, material):
        elements, layout, tau0 = self._setup(two_triangles, material)
        q = np.concatenate([two_triangles.node_positions.ravel(), np.zeros(5)])
        c = midedge_contribution(elements, q, tau0, layout, hessian=False)
        assert c.hessian is None
        assert (c.indices[:, 9:] >= layout.xi_offset).all()
        assert (c.indices[:, :9] < layout.xi_offset).all()

    def test_xi_gradient_matches_difference(self, two_triangles, material, rng):
        elements, layout, tau0 = self._setup(two_triangles, material)
        q = np.concatenate([_folded(two_triangles, 0.2).ravel(), 0.05 * rng.normal(size=5)])
        grad = midedge_contribution(elements, q, tau0, layout).gradient_vector(17)
        h = 1e-7
        for i in range(12, 17):
            qp, qm = q.copy(), q.copy()
            qp[i] += h
            qm[i] -= h
            fd = (midedge_contribution(elements, qp, tau0, layout).total
                  - midedge_contribution(elements, qm, tau0, layout).total) / (2 * h)
            assert grad[i] == pytest.approx(fd, rel=1e-5, abs=1e-12)
