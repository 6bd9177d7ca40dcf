import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from levipod.config import SimConfig
from levipod.errors import DimensionMismatch, NumericalFailure, OutOfBounds, SolverFailure
from levipod.fem import AssembledSystem, FieldSolution, MaterialMap, SourceSpec
from levipod.mesh import remesh
from levipod.mor import compute_basis
from levipod.report import l2_relative_error
from levipod.sim import (MechParams, MechState, TimeGrid, Trajectory, common_basis, deform_snapshots,
                         run_full, run_rom_deform, step_full, step_mechanics)

DESK = SimConfig(density=0.008, time=TimeGrid(steps=150), window=(0, 150, 1))


@pytest.fixture(scope="module")
def desk_reference():
    snaps, ref = deform_snapshots(DESK)
    return snaps, ref


def _system(A, B, load, amplitude=1.0):
    return AssembledSystem(sp.csr_matrix(A), sp.csr_matrix(B), np.asarray(load, float),
                           SourceSpec(amplitude=amplitude))


def test_step_full_zero():
    s = _system(np.eye(3), 2 * np.eye(3), np.zeros(3))
    assert not step_full(s, np.zeros(3), 2e-4, 5e-3).any()


def test_step_full_scalar_hand_value():
    s = _system([[1.0]], [[1.0]], [1.0])
    # i(5 ms) = sin(pi / 2) = 1, so c = 1
    assert step_full(s, np.zeros(1), 1.0, 5e-3)[0] == pytest.approx(0.5, rel=1e-15)


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_step_full_dissipative(seed):
    rng = np.random.default_rng(seed)
    G, H = rng.standard_normal((2, 5, 5))
    A, B = G @ G.T + 0.1 * np.eye(5), H @ H.T + 0.1 * np.eye(5)
    s = _system(A, B, np.zeros(5))
    x = rng.standard_normal(5)
    norm = np.sqrt(x @ A @ x)
    for _ in range(8):
        x = step_full(s, x, 1e-2, 0.0)
        new = np.sqrt(x @ A @ x)
        assert new <= norm * (1 + 1e-12)
        norm = new


def test_step_full_singular():
    s = _system(np.zeros((2, 2)), np.zeros((2, 2)), np.ones(2))
    with pytest.raises(SolverFailure):
        step_full(s, np.zeros(2), 1.0, 5e-3)


def test_mechanics_force_balance():
    p = MechParams()
    s = step_mechanics(MechState(0.01), p, p.m * p.g, 2e-4)
    assert (s.y, s.v) == (0.01, 0.0)


def test_mechanics_hand_values():
    s = step_mechanics(MechState(0.0), MechParams(m=1.0, xi=1.0, k=0.0, g=0.0), 1.0, 1.0)
    assert s.v == pytest.approx(0.5) and s.y == pytest.approx(0.5) and s.dy == pytest.approx(0.5)


@settings(max_examples=25, deadline=None)
@given(m=st.floats(0.01, 2), xi=st.floats(0, 5), k=st.floats(0, 50), F=st.floats(-5, 5),
       y=st.floats(-0.1, 0.1), v=st.floats(-1, 1), dt=st.floats(1e-5, 1e-2))
def test_mechanics_satisfies_implicit_equation(m, xi, k, F, y, v, dt):
    p = MechParams(m=m, xi=xi, k=k)
    s = step_mechanics(MechState(y, v), p, F, dt)
    residual = m * (s.v - v) / dt + xi * s.v + k * s.y + m * p.g - F
    assert abs(residual) <= 1e-9 * (abs(F) + m * p.g + m * abs(v) / dt + 1)
    assert s.y == pytest.approx(y + dt * s.v, abs=1e-15)


def test_mechanics_terminal_velocity():
    p = MechParams(m=0.107, xi=1.0)
    F = 3.0
    s = MechState(0.0)
    for _ in range(20000):
        s = step_mechanics(s, p, F, 2e-4)
    assert s.v == pytest.approx((F - p.m * p.g) / p.xi, rel=1e-9)


def _free_fall(cfg, K):
    """Closed form of v_k = a v_{k-1} + b, y_k = y_{k-1} + dt v_k from rest."""
    m, xi, g = cfg.mech.m, cfg.mech.xi, cfg.mech.g
    dt = cfg.time.dt
    a = m / (m + xi * dt)
    v_inf = -m * g / xi
    k = np.arange(1, K + 1)
    v = v_inf * (1 - a**k)
    y = cfg.geometry.plate_initial_clearance + dt * v_inf * (k - a * (1 - a**k) / (1 - a))
    return y, v


def test_run_without_conductivity_is_free_fall():
    cfg = SimConfig(density=0.008, materials=MaterialMap(sigma_plate=0.0), time=TimeGrid(steps=8))
    traj = run_full(cfg)
    assert not traj.F_em.any()
    y, v = _free_fall(cfg, 8)
    np.testing.assert_allclose(traj.y, y, rtol=1e-12)
    np.testing.assert_allclose(traj.v, v, rtol=1e-12)


def test_plate_leaving_box_is_an_error():
    cfg = SimConfig(density=0.008, source=SourceSpec(amplitude=0.0), time=TimeGrid(steps=200))
    with pytest.raises(NumericalFailure) as info:
        run_full(cfg)
    assert isinstance(info.value.cause, OutOfBounds)
    assert info.value.step > 1


def test_determinism_and_csv_round_trip(tmp_path, desk_reference):
    _, ref = desk_reference
    again = run_full(DESK, steps=20)
    for col in ("y", "v", "F_em"):
        assert np.array_equal(getattr(again, col), getattr(ref, col)[:20])
    path = tmp_path / "t.csv"
    ref.to_csv(path)
    assert path.read_text().splitlines()[0] == "t,y,v,F_em,dofs,r,wall_ms"
    back = Trajectory.from_csv(path)
    for col in ("t", "y", "v", "F_em", "dofs", "r", "wall_ms"):
        assert np.array_equal(getattr(back, col), getattr(ref, col))
    assert len(ref) == 150 and np.all(np.diff(ref.t) > 0)


def test_plate_lifts_off(desk_reference):
    _, ref = desk_reference
    assert ref.F_em.max() > 0
    assert ref.y[-1] > ref.y[0]


def test_nested_bases_do_not_increase_error(desk_reference):
    snaps, ref = desk_reference
    full = compute_basis(snaps, rank=12)
    errors = [l2_relative_error(run_rom_deform(DESK, full.truncate(r)), ref) for r in (3, 6, 12)]
    assert errors[0] >= errors[1] >= errors[2]


def test_rom_basis_must_match_mesh(desk_reference):
    with pytest.raises(DimensionMismatch):
        run_rom_deform(DESK, np.eye(5), steps=1)


def test_common_basis_on_snapshot_mesh_equals_raw_basis(coarse_mesh):
    mesh = remesh(coarse_mesh.geometry, 6e-3, 0.008)
    rng = np.random.default_rng(12)
    raw = rng.standard_normal((mesh.n_dofs, 6))
    store = [FieldSolution(raw[:, j], mesh) for j in range(6)]
    got = common_basis(store, mesh, eps=1e-8)
    ref = compute_basis(raw, eps=1e-8)
    assert got.r == ref.r
    np.testing.assert_allclose(np.abs(got.psi.T @ ref.psi), np.eye(ref.r), atol=1e-10)
