import numpy as np
import pytest
import scipy.sparse as sp

import levipod.fem as fem
import levipod.sim as sim
from levipod.mesh import PLATE, DeformBox, Geometry, generate_mesh

ASSEMBLY_LOG = {"checked": 0}


def check_operators(mesh, materials, A, B):
    """Symmetry of A and B, constant null vector of unconstrained B, plate support of A."""
    for name, M in (("A", A), ("B", B)):
        scale = abs(M).max() if M.nnz else 1.0
        asym = abs(M - M.T).max() if M.nnz else 0.0
        assert asym <= 1e-12 * scale, f"{name} not symmetric: {asym / scale:.2e}"
    Bfull = fem.assemble_stiffness(mesh, materials, constrained=False)
    ones = np.ones(mesh.n_nodes)
    assert abs(Bfull @ ones).max() <= 1e-12 * abs(Bfull).max()
    plate_dofs = mesh.dof_map[mesh.region_nodes(PLATE)]
    allowed = np.zeros(A.shape[0], dtype=bool)
    allowed[plate_dofs[plate_dofs >= 0]] = True
    coo = sp.coo_matrix(A)
    assert allowed[coo.row].all() and allowed[coo.col].all(), "A has entries off the plate dofs"
    ASSEMBLY_LOG["checked"] += 1


_original_assemble_system = fem.assemble_system


def _checked_assemble_system(mesh, materials, source):
    system = _original_assemble_system(mesh, materials, source)
    check_operators(mesh, materials, system.A, system.B)
    return system


@pytest.fixture(autouse=True)
def _assert_every_assembly(monkeypatch):
    monkeypatch.setattr(fem, "assemble_system", _checked_assemble_system)
    monkeypatch.setattr(sim, "assemble_system", _checked_assemble_system)
    yield


@pytest.fixture(scope="session")
def geometry():
    return Geometry()


@pytest.fixture(scope="session")
def coarse_mesh(geometry):
    return generate_mesh(geometry, DeformBox(), 0.008)


# acceptance criteria outcomes: number -> (passed, detail)
ACCEPTANCE = {}


class Criterion:
    """Record one acceptance line; an exception inside the block counts as a failure."""

    def __init__(self, number, title):
        self.number, self.title = number, title
        self.ok, self.detail = False, ""

    def __enter__(self):
        return self

    def __exit__(self, kind, exc, tb):
        if exc is not None and not self.detail:
            self.detail = f"{kind.__name__}: {exc}"
        ACCEPTANCE[self.number] = (self.ok and exc is None, self.title, self.detail)
        return False


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, title, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {n:>2}. {title}: {detail}")
