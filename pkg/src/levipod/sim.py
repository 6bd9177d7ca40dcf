"""Weakly coupled electromechanical time stepping.

Each step solves the magnetics on the geometry of the previous plate
position, evaluates the Lorentz force from the new field, then advances the
plate with an implicit Euler step of ``m v' + xi v + k y + m g = F``.
Three field solvers share this loop: the full FE model, the reduced model
with a fixed POD basis on a deforming mesh, and the reduced model rebuilt on
a fresh mesh at every step.
"""
from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Sequence

import numpy as np
import scipy.sparse.linalg as spla

from .errors import DimensionMismatch, LevipodError, NumericalFailure, OutOfBounds, SolverFailure
from .fem import FieldSolution, assemble_system, compute_lorentz_force
from .mesh import deform_subdomain, generate_mesh, remesh
from .mor import (MeshTransfer, ReducedBasis, build_snapshots, compute_basis, reduce_operators,
                  step_reduced)

if TYPE_CHECKING:
    from .config import SimConfig


@dataclass(frozen=True)
class MechParams:
    m: float = 0.107
    xi: float = 1.0
    k: float = 0.0
    g: float = 9.81

    def __post_init__(self):
        if not self.m > 0:
            raise ValueError("mass must be positive")
        if self.xi < 0 or self.k < 0:
            raise ValueError("friction and stiffness must be non-negative")


@dataclass(frozen=True)
class MechState:
    y: float
    v: float = 0.0
    dy: float = 0.0


@dataclass(frozen=True)
class TimeGrid:
    dt: float = 2e-4
    steps_per_period: int = 100
    periods: int = 50
    # optional override of periods * steps_per_period
    steps: int | None = None

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("time step must be positive")
        if self.steps_per_period < 1 or self.periods < 1:
            raise ValueError("steps_per_period and periods must be >= 1")
        if self.steps is not None and self.steps < 1:
            raise ValueError("steps must be >= 1")

    @property
    def total_steps(self) -> int:
        return self.steps if self.steps is not None else self.periods * self.steps_per_period


COLUMNS = ("t", "y", "v", "F_em", "dofs", "r", "wall_ms")


@dataclass
class Trajectory:
    t: np.ndarray
    y: np.ndarray
    v: np.ndarray
    F_em: np.ndarray
    dofs: np.ndarray
    r: np.ndarray
    wall_ms: np.ndarray
    mode: str = ""
    fields: list[FieldSolution] | None = field(default=None, repr=False)

    def __len__(self):
        return len(self.t)

    @property
    def wall_time(self) -> float:
        """Total online wall time in seconds."""
        return float(np.sum(self.wall_ms)) / 1e3

    def head(self, n: int) -> "Trajectory":
        fields = self.fields[:n] if self.fields is not None else None
        return Trajectory(*(getattr(self, c)[:n] for c in COLUMNS), mode=self.mode, fields=fields)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(",".join(COLUMNS) + "\n")
            for row in zip(*(getattr(self, c) for c in COLUMNS)):
                fh.write(",".join(f"{v:.17g}" if isinstance(v, float) else str(v)
                                  for v in (x.item() for x in row)) + "\n")

    @classmethod
    def from_csv(cls, path, mode: str = "") -> "Trajectory":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if tuple(header) != COLUMNS:
                raise ValueError(f"unexpected trajectory header {header}")
            rows = list(reader)
        cols = list(zip(*rows)) if rows else [()] * len(COLUMNS)
        data = {}
        for name, values in zip(COLUMNS, cols):
            kind = np.int64 if name in ("dofs", "r") else float
            data[name] = np.array([kind(v) for v in values], dtype=kind)
        return cls(**data, mode=mode)


def step_full(system, x_prev, dt: float, t_k: float) -> np.ndarray:
    """Solve ``(A/dt + B) x_k = (A/dt) x_prev + C(t_k)`` with a sparse LU."""
    K = (system.A / dt + system.B).tocsc()
    rhs = system.A @ np.asarray(x_prev, dtype=float) / dt + system.C(t_k)
    try:
        x = spla.splu(K).solve(rhs)
    except RuntimeError as exc:
        raise SolverFailure(str(exc)) from exc
    if not np.all(np.isfinite(x)):
        raise SolverFailure("linear solve produced non-finite values")
    return x


def step_mechanics(state: MechState, params: MechParams, F_em: float, dt: float) -> MechState:
    """Implicit Euler step of the plate motion.

    With ``y_k = y_{k-1} + dt v_k`` substituted into
    ``m (v_k - v_{k-1})/dt + xi v_k + k y_k + m g = F`` the update is

        v_k = (m v_{k-1}/dt + F - m g - k y_{k-1}) / (m/dt + xi + k dt)
    """
    m, xi, k, g = params.m, params.xi, params.k, params.g
    v = (m * state.v / dt + F_em - m * g - k * state.y) / (m / dt + xi + k * dt)
    dy = dt * v
    return MechState(state.y + dy, v, dy)


class _FullDeform:
    def __init__(self, cfg):
        self.cfg = cfg
        self.mesh0 = generate_mesh(cfg.geometry, cfg.box, cfg.density)
        self.x = np.zeros(self.mesh0.n_dofs)

    def advance(self, t, y):
        cfg = self.cfg
        mesh = deform_subdomain(self.mesh0, cfg.box, y)
        system = assemble_system(mesh, cfg.materials, cfg.source)
        x = step_full(system, self.x, cfg.time.dt, t)
        F = compute_lorentz_force(mesh, x, self.x, cfg.time.dt, cfg.materials)
        self.x = x
        return F, FieldSolution(x, mesh, t), 0


class _FullRemesh:
    def __init__(self, cfg):
        self.cfg = cfg
        self.prev = None

    def advance(self, t, y):
        cfg = self.cfg
        mesh = remesh(cfg.geometry, y, cfg.density)
        if self.prev is None:
            x_prev = np.zeros(mesh.n_dofs)
        else:
            # only plate values enter the mass term
            x_prev = MeshTransfer(self.prev.mesh).dof_matrix(mesh, region="plate") @ self.prev.x
        system = assemble_system(mesh, cfg.materials, cfg.source)
        x = step_full(system, x_prev, cfg.time.dt, t)
        F = compute_lorentz_force(mesh, x, x_prev, cfg.time.dt, cfg.materials)
        self.prev = FieldSolution(x, mesh, t)
        return F, self.prev, 0


class _RomDeform:
    def __init__(self, cfg, basis: ReducedBasis):
        self.cfg = cfg
        self.mesh0 = generate_mesh(cfg.geometry, cfg.box, cfg.density)
        psi = basis.psi if isinstance(basis, ReducedBasis) else np.asarray(basis)
        if psi.shape[0] != self.mesh0.n_dofs:
            raise DimensionMismatch(
                f"basis has {psi.shape[0]} rows but the deformation mesh has {self.mesh0.n_dofs} dofs")
        self.psi = psi
        self.x_r = np.zeros(psi.shape[1])

    def advance(self, t, y):
        cfg = self.cfg
        dt = cfg.time.dt
        mesh = deform_subdomain(self.mesh0, cfg.box, y)
        system = assemble_system(mesh, cfg.materials, cfg.source)
        ops = reduce_operators(system.A, system.B, system.C, self.psi)
        x_r = step_reduced(ops, self.x_r, dt, t)
        x = self.psi @ x_r
        F = compute_lorentz_force(mesh, x, self.psi @ self.x_r, dt, cfg.materials)
        self.x_r = x_r
        return F, FieldSolution(x, mesh, t), self.psi.shape[1]


def common_basis(store: Sequence[FieldSolution], mesh, eps=None, rank=None, transfers=None) -> ReducedBasis:
    """POD basis of stored snapshots interpolated onto ``mesh``.

    Snapshots of different sizes are first brought to the dofs of ``mesh``
    (plate nodes in the plate frame, the rest by linear interpolation).
    """
    transfers = transfers or [MeshTransfer(s.mesh) for s in store]
    free = mesh.free_nodes
    cols = np.empty((mesh.n_dofs, len(store)))
    for j, (s, tr) in enumerate(zip(store, transfers)):
        W = tr.weights(mesh, region="all")
        cols[:, j] = (W @ s.mesh.to_nodal(s.x))[free]
    if rank is not None:
        rank = min(rank, mesh.n_dofs)
    return compute_basis(cols, eps=eps, rank=rank)


class _RomRemesh:
    def __init__(self, cfg, store: Sequence[FieldSolution], eps=None, rank=None):
        if not store:
            raise ValueError("empty snapshot store")
        self.cfg = cfg
        self.store = list(store)
        self.transfers = [MeshTransfer(s.mesh) for s in self.store]
        self.eps, self.rank = eps, rank
        self.prev = None

    def advance(self, t, y):
        cfg = self.cfg
        dt = cfg.time.dt
        mesh = remesh(cfg.geometry, y, cfg.density)
        basis = common_basis(self.store, mesh, self.eps, self.rank, self.transfers)
        psi = basis.psi
        if self.prev is None:
            x_prev = np.zeros(mesh.n_dofs)
        else:
            x_prev = MeshTransfer(self.prev.mesh).dof_matrix(mesh, region="all") @ self.prev.x
        system = assemble_system(mesh, cfg.materials, cfg.source)
        ops = reduce_operators(system.A, system.B, system.C, psi)
        x_r_prev = psi.T @ x_prev
        x_r = step_reduced(ops, x_r_prev, dt, t)
        x = psi @ x_r
        F = compute_lorentz_force(mesh, x, psi @ x_r_prev, dt, cfg.materials)
        self.prev = FieldSolution(x, mesh, t)
        return F, self.prev, basis.r


def _integrate(cfg: "SimConfig", stepper, mode: str, steps: int | None = None,
               store_fields: bool = False, bounded: bool = True) -> Trajectory:
    dt = cfg.time.dt
    K = steps if steps is not None else cfg.time.total_steps
    thickness = cfg.geometry.plate_thickness
    state = MechState(cfg.geometry.plate_initial_clearance)
    cols = {c: np.zeros(K, dtype=np.int64 if c in ("dofs", "r") else float) for c in COLUMNS}
    fields = [] if store_fields else None
    for k in range(1, K + 1):
        t = k * dt
        t0 = time.perf_counter()
        try:
            F, sol, r = stepper.advance(t, state.y)
        except LevipodError as exc:
            raise NumericalFailure(k, exc) from exc
        state = step_mechanics(state, cfg.mech, F, dt)
        wall = (time.perf_counter() - t0) * 1e3
        i = k - 1
        cols["t"][i], cols["y"][i], cols["v"][i], cols["F_em"][i] = t, state.y, state.v, F
        cols["dofs"][i], cols["r"][i], cols["wall_ms"][i] = len(sol.x), r, wall
        if fields is not None:
            fields.append(sol)
        if bounded and not cfg.box.admissible(state.y, thickness):
            raise NumericalFailure(k, OutOfBounds(f"plate left the deformation box at y={state.y:.6g} m"))
        if not bounded and state.y <= cfg.geometry.coil_top:
            raise NumericalFailure(k, OutOfBounds(f"plate hit the coils at y={state.y:.6g} m"))
    return Trajectory(**cols, mode=mode, fields=fields)


def run_full(cfg: "SimConfig", steps: int | None = None, store_fields: bool = False,
             movement: str | None = None) -> Trajectory:
    """Full-order run; ``movement`` is ``"deform"`` (default from config) or ``"remesh"``."""
    movement = movement or cfg.movement
    if movement == "deform":
        return _integrate(cfg, _FullDeform(cfg), "full", steps, store_fields, bounded=True)
    if movement == "remesh":
        return _integrate(cfg, _FullRemesh(cfg), "full", steps, store_fields, bounded=False)
    raise ValueError(f"unknown movement {movement!r}")


def run_rom_deform(cfg: "SimConfig", basis, steps: int | None = None,
                   store_fields: bool = False) -> Trajectory:
    """Reduced run with a fixed basis on the deforming mesh."""
    return _integrate(cfg, _RomDeform(cfg, basis), "rom-deform", steps, store_fields, bounded=True)


def run_rom_remesh(cfg: "SimConfig", store: Sequence[FieldSolution], eps: float | None = None,
                   steps: int | None = None, rank: int | None = None,
                   store_fields: bool = False) -> Trajectory:
    """Reduced run rebuilding the basis on a fresh mesh at every step."""
    return _integrate(cfg, _RomRemesh(cfg, store, eps, rank), "rom-remesh", steps, store_fields,
                      bounded=False)


def deform_snapshots(cfg: "SimConfig", window=None, reference: Trajectory | None = None):
    """Snapshot matrix from a full deformation run over ``window``."""
    start, stop, stride = window or cfg.window
    if reference is None or reference.fields is None or len(reference.fields) < stop:
        reference = run_full(cfg, steps=stop, store_fields=True, movement="deform")
    return build_snapshots(reference.fields, (start, stop, stride)), reference


def remesh_snapshot_store(cfg: "SimConfig", window=None, reference: Trajectory | None = None):
    """Stored solutions (each on its own mesh) from a full remeshing run."""
    start, stop, stride = window or cfg.window
    if reference is None or reference.fields is None or len(reference.fields) < stop:
        reference = run_full(cfg, steps=stop, store_fields=True, movement="remesh")
    return reference.fields[start:stop:stride], reference
