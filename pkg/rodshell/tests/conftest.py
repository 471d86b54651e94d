"""Shared test fixtures for the rodshell test suite."""

import numpy as np
import pytest

from rodshell.config import MaterialParams, ScenarioConfig
from rodshell.meshes import rod
from rodshell.topology import DofLayout, build_springs, build_topology


@pytest.fixture
def material():
    """Create default MaterialParams for tests."""
    return MaterialParams()


@pytest.fixture
def config():
    """Create a default ScenarioConfig for tests."""
    return ScenarioConfig()


@pytest.fixture
def straight_rod():
    """A 5-node straight rod along +x, 0.1 m long."""
    nodes, edges = rod(5, 0.1)
    return build_topology(nodes, edges)


@pytest.fixture
def rod_springs(straight_rod, material):
    """Springs for the straight rod fixture."""
    return build_springs(straight_rod, material)


@pytest.fixture
def rod_layout(straight_rod):
    """DOF layout for the straight rod fixture."""
    return DofLayout.from_topology(straight_rod)


@pytest.fixture
def two_triangles():
    """Two flat triangles sharing edge (0, 1) in the z = 0 plane."""
    nodes = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.5, 0.8, 0.0], [0.5, -0.8, 0.0]])
    return build_topology(nodes, None, [[0, 1, 2], [1, 0, 3]])


@pytest.fixture
def rod_shell_joint():
    """A triangle with a two-edge rod hanging off node 2 (node 2 is a joint)."""
    nodes = np.array(
        [[0.0, 0.0, 0.0], [0.1, 0.0, 0.0], [0.05, 0.08, 0.0], [0.05, 0.13, 0.0], [0.05, 0.18, 0.0]]
    )
    return build_topology(nodes, [[2, 3], [3, 4]], [[0, 1, 2]])


@pytest.fixture
def geometry_text():
    """A small geometry file body: 4 nodes, 2 rod edges, 1 triangle (1-based)."""
    return """# sample
*Nodes
0.0 0.0 0.0
0.01 0.0 0.0
0.02 0.0 0.0
0.01, 0.01, 0.0
*Edges
1 2
2 3
*Triangles
1 2 4
"""


@pytest.fixture
def rng():
    """Seeded random generator."""
    return np.random.default_rng(1234)
