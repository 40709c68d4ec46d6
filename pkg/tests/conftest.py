import numpy as np
import pytest

from goafem.mesh import build_mesh, refine


def unit_square():
    """Unit square split along its diagonal; the diagonal is the reference
    edge of both halves."""
    return build_mesh([(0, 0), (1, 0), (1, 1), (0, 1)], [(0, 2, 1), (2, 0, 3)])


def reference_triangle():
    return build_mesh([(0, 0), (1, 0), (0, 1)], [(1, 2, 0)])


def random_refinement(rng, max_triangles=500, start=None):
    """A mesh obtained from ``start`` by random refinements, and all lineages."""
    mesh = unit_square() if start is None else start
    lineages = []
    while True:
        k = int(rng.integers(1, max(2, mesh.n_edges // 4) + 1))
        marks = rng.choice(mesh.n_edges, size=k, replace=False)
        fine, lin = refine(mesh, marks)
        if fine.n_triangles > max_triangles:
            return mesh, lineages
        mesh = fine
        lineages.append(lin)


def triangle_set(mesh):
    """Order-free description of a mesh: sorted vertex coordinate triples."""
    pts = mesh.vertices[mesh.triangles]
    keys = [tuple(sorted(map(tuple, np.round(t, 14).tolist()))) for t in pts]
    return sorted(keys)


@pytest.fixture
def square():
    return unit_square()


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


ACCEPTANCE_LINES = []


def report(criterion, ok, detail):
    """Record and print one pass/fail line of the acceptance suite."""
    line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
