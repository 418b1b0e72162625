import numpy as np
import pytest

from parlab.geometry import MeshManifold, build_annulus_mesh, build_disk_mesh, build_halfannulus_mesh

_CRITERIA = {}


def record_criterion(number: int, title: str, passed: bool, detail: str) -> None:
    _CRITERIA[number] = (title, passed, detail)


@pytest.fixture
def criterion():
    return record_criterion


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        title, ok, detail = _CRITERIA[n]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {n:2d} {title}: {detail}")


def square_mesh(n: int = 4, size: float = 1.0, labels=("d0", "d0", "d0", "d0")) -> MeshManifold:
    """Structured right-triangle mesh of [0, size]^2; labels for bottom, right, top, left sides."""
    xs = np.linspace(0.0, size, n + 1)
    X, Y = np.meshgrid(xs, xs, indexing="xy")
    V = np.column_stack([X.ravel(), Y.ravel()])
    idx = lambda i, j: j * (n + 1) + i
    T = []
    for j in range(n):
        for i in range(n):
            a, b, c, d = idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)
            T += [(a, b, c), (a, c, d)]
    edges, labs, marks = [], [], []
    names = ("bottom", "right", "top", "left")
    for i in range(n):
        for side, (p, q) in enumerate([(idx(i, 0), idx(i + 1, 0)), (idx(n, i), idx(n, i + 1)),
                                       (idx(n - i, n), idx(n - i - 1, n)), (idx(0, n - i), idx(0, n - i - 1))]):
            edges.append((p, q))
            labs.append(labels[side])
            marks.append(names[side])
    return MeshManifold(V, np.array(T), np.array(edges), labs, marks)


@pytest.fixture(scope="session")
def annulus_003():
    return build_annulus_mesh(1.0, 2.0, 0.03)


@pytest.fixture(scope="session")
def annulus_010():
    return build_annulus_mesh(1.0, 2.0, 0.1)


@pytest.fixture(scope="session")
def halfannulus_003():
    return build_halfannulus_mesh(1.0, 2.0, 0.03)


@pytest.fixture(scope="session")
def disk_010():
    return build_disk_mesh(1.0, 0.1)
