import numpy as np
import pytest

from heatbem.mesh import SurfaceMesh, build_sphere_mesh


@pytest.fixture(scope="session")
def sphere0():
    return build_sphere_mesh(0)


@pytest.fixture(scope="session")
def sphere1():
    return build_sphere_mesh(1)


@pytest.fixture
def right_triangle():
    v = np.array([[0.0, 0, 0], [1.0, 0, 0], [0.0, 1, 0]])
    return SurfaceMesh(v, np.array([[0, 1, 2]]))


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for k in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[k])
