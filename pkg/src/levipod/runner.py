"""Run orchestration shared by the CLI and the comparison report.

Offline work (reference runs, snapshot collection, basis construction) is
cached per physical setup so that several reduced runs compared against one
full run reuse it.  Only online steps count towards a trajectory's wall time.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

from .config import SimConfig
from .errors import ValidationError
from .mor import ReducedBasis, SnapshotMatrix, compute_basis, read_snapshots
from .report import ErrorReport, ReportRow, l2_relative_error, peak_errors, speedup
from .sim import Trajectory, deform_snapshots, remesh_snapshot_store, run_full, run_rom_deform, \
    run_rom_remesh


def _setup_key(cfg: SimConfig, movement: str):
    """Everything that changes the full-order solution."""
    return (movement, cfg.geometry, cfg.box, cfg.materials, cfg.source, cfg.mech, cfg.time,
            cfg.density)


@dataclass
class RunCache:
    references: dict = field(default_factory=dict)
    offline_s: dict = field(default_factory=dict)

    def reference(self, cfg: SimConfig, movement: str, steps: int) -> Trajectory:
        """Full run with stored fields covering at least ``steps`` steps."""
        key = _setup_key(cfg, movement)
        ref = self.references.get(key)
        if ref is None or len(ref) < steps or ref.fields is None:
            t0 = time.perf_counter()
            ref = run_full(cfg, steps=steps, store_fields=True, movement=movement)
            self.offline_s[key] = time.perf_counter() - t0
            self.references[key] = ref
        return ref


def snapshot_matrix(cfg: SimConfig, cache: RunCache | None = None) -> SnapshotMatrix:
    if cfg.snapshots:
        return read_snapshots(cfg.snapshots)
    cache = cache or RunCache()
    ref = cache.reference(cfg, "deform", cfg.window[1])
    return deform_snapshots(cfg, cfg.window, ref)[0]


def basis_for(cfg: SimConfig, cache: RunCache | None = None) -> ReducedBasis:
    return compute_basis(snapshot_matrix(cfg, cache), eps=cfg.eps, rank=cfg.rank)


def execute(cfg: SimConfig, cache: RunCache | None = None) -> Trajectory:
    """Run one configuration according to its mode."""
    cache = cache or RunCache()
    if cfg.mode == "full":
        return run_full(cfg)
    if cfg.mode == "rom-deform":
        return run_rom_deform(cfg, basis_for(cfg, cache))
    if cfg.mode == "rom-remesh":
        if cfg.snapshots:
            raise ValidationError("rom.snapshots",
                                  "rom-remesh needs per-mesh solutions and rebuilds them itself")
        ref = cache.reference(cfg, "remesh", cfg.window[1])
        store, _ = remesh_snapshot_store(cfg, cfg.window, ref)
        return run_rom_remesh(cfg, store, eps=cfg.eps, rank=cfg.rank)
    raise ValidationError("mode", f"unknown mode {cfg.mode!r}")


def _label(cfg: SimConfig) -> str:
    if cfg.mode == "full":
        return f"full/{cfg.movement}"
    tol = f"eps={cfg.eps:g}" if cfg.eps is not None else f"rank={cfg.rank}"
    return f"{cfg.mode}/{cfg.box.x_extent * 1e3:g}mm/{tol}"


def compare_runs(*configs: SimConfig, cache: RunCache | None = None,
                 trajectories: dict | None = None) -> ErrorReport:
    """Error table of every config against the first full-order config.

    ``trajectories`` may map config index to an already computed trajectory.
    """
    if not configs:
        raise ValidationError("mode", "compare needs at least one config")
    fulls = [i for i, c in enumerate(configs) if c.mode == "full"]
    if not fulls:
        raise ValidationError("mode", "compare needs one config with mode = full as reference")
    cache = cache or RunCache()
    trajectories = dict(trajectories or {})
    for i, cfg in enumerate(configs):
        if i not in trajectories:
            trajectories[i] = execute(cfg, cache)
    ref = trajectories[fulls[0]]
    rows = []
    for i, cfg in enumerate(configs):
        traj = trajectories[i]
        rows.append(ReportRow(
            label=_label(cfg), mode=cfg.mode, movement=cfg.movement,
            box_width=cfg.box.x_extent, eps=cfg.eps, r=int(traj.r.max()) if len(traj) else 0,
            error=l2_relative_error(traj, ref), wall_s=traj.wall_time,
            speedup=speedup(ref, traj), peak_errors=peak_errors(traj, ref)))
    return ErrorReport(rows)


def with_overrides(cfg: SimConfig, **changes) -> SimConfig:
    """``cfg`` with the non-None entries of ``changes`` applied and re-validated."""
    changes = {k: v for k, v in changes.items() if v is not None}
    return cfg.replace(**changes) if changes else cfg
