import numpy as np
import pytest

from toptrack.topology import TopologicalMap, generate_polytunnels


def line_map(n, spacing=1.0):
    coords = np.column_stack([np.arange(n) * spacing, np.zeros(n)])
    return TopologicalMap(coords, [(i, i + 1) for i in range(n - 1)])


def star_map(k, radius=1.0):
    """Hub node 0 with k spokes at equal angles."""
    ang = 2 * np.pi * np.arange(k) / k
    coords = np.vstack([[0.0, 0.0], np.column_stack([radius * np.cos(ang), radius * np.sin(ang)])])
    return TopologicalMap(coords, [(0, i + 1) for i in range(k)])


@pytest.fixture(scope="session")
def riseholme():
    return generate_polytunnels()


@pytest.fixture(scope="session")
def rmap(riseholme):
    return riseholme.tmap


@pytest.fixture
def two_node():
    return TopologicalMap([[0.0, 0.0], [1.0, 0.0]], [(0, 1)])


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
