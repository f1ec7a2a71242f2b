import numpy as np
import pytest
from hypothesis import settings

from hodgetrack.netgen import DomainSpec, grid_domain, torus_mesh
from hodgetrack.surface import build_surface

settings.register_profile("default", max_examples=25, deadline=None)
settings.load_profile("default")

OCTAHEDRON = [
    [0, 2, 4], [2, 1, 4], [1, 3, 4], [3, 0, 4],
    [2, 0, 5], [1, 2, 5], [3, 1, 5], [0, 3, 5],
]


def annulus_mesh(rings: int = 4, per_ring: int = 4):
    """Concentric rings of nodes joined by triangle strips; 1 hole."""
    faces, xy = [], []
    for i in range(rings):
        r = 1.0 + i
        for j in range(per_ring):
            t = 2 * np.pi * j / per_ring
            xy.append((r * np.cos(t), r * np.sin(t)))
    node = lambda i, j: i * per_ring + j % per_ring  # noqa: E731
    for i in range(rings - 1):
        for j in range(per_ring):
            a, b, c, d = node(i, j), node(i + 1, j), node(i + 1, j + 1), node(i, j + 1)
            faces += [[a, b, c], [a, c, d]]
    return build_surface(faces, coords=np.array(xy))


@pytest.fixture(scope="session")
def octahedron():
    return build_surface(OCTAHEDRON)


@pytest.fixture(scope="session")
def annulus():
    return annulus_mesh()


@pytest.fixture(scope="session")
def torus():
    return torus_mesh(8, 9, seed=3)


@pytest.fixture(scope="session")
def disk():
    return grid_domain(DomainSpec(holes=0, target_nodes=25, seed=0))


@pytest.fixture(scope="session")
def three_holes():
    return grid_domain(DomainSpec(width=2.0, holes=3, target_nodes=300, seed=1))


@pytest.fixture(scope="session")
def three_hole_basis(three_holes):
    from hodgetrack.basis import build_basis
    from hodgetrack.hodge import GossipConfig

    s, _ = three_holes
    return build_basis(s, GossipConfig(eps=1e-7, seed=0), canonical=True)


# ----------------------------------------------------------------------
# acceptance report: one line per criterion in the terminal summary

_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """``criterion(name, ok, detail)`` records one acceptance line."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def record(name, ok, detail=""):
        lines.append(f"{name} {'PASS' if ok else 'FAIL'}  {detail}".rstrip())
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda x: int(x.split()[0][1:])):
            terminalreporter.write_line(line)
