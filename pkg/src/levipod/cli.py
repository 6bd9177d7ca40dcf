"""``levipod`` command line.

Subcommands::

    levipod mesh      --config c.cfg --out dir        -> dir/mesh.txt
    levipod run       --config c.cfg --out dir        -> dir/trajectory.csv (+ dir/fields.snap)
    levipod snapshots --config c.cfg --window 0:800   -> dir/snapshots.snap
    levipod basis     --snapshots s.snap --eps 1e-5   -> dir/basis.snap, dir/singular_values.csv
    levipod compare   --config full.cfg --config rom.cfg ... -> dir/error_report.csv

Exit codes: 0 success, 1 usage, 2 configuration, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .config import SimConfig, parse_config, parse_window
from .errors import LevipodError, ParseError, ValidationError
from .mesh import generate_mesh, remesh, write_mesh
from .mor import SnapshotMatrix, build_snapshots, compute_basis, read_snapshots, write_snapshots
from .runner import RunCache, compare_runs, execute, with_overrides
from .sim import run_full

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage, which is our config code
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _window(text):
    try:
        return parse_window(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="levipod", description="Electrodynamic levitation with POD reduced models.")
    sub = parser.add_subparsers(dest="command", metavar="{mesh,run,snapshots,basis,compare}",
                                parser_class=_Parser)
    sub.required = True

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="key = value configuration file")
        p.add_argument("--out", help="output directory (default: output.dir of the config)")

    def rom(p):
        p.add_argument("--eps", type=float, help="singular value tolerance")
        p.add_argument("--rank", type=int, help="fixed basis size")
        p.add_argument("--window", type=_window, help="snapshot window start:end[:stride]")

    p = sub.add_parser("mesh", help="write the initial mesh")
    common(p)

    p = sub.add_parser("run", help="run a configuration and write its trajectory")
    common(p)
    rom(p)
    p.add_argument("--mode", choices=("full", "rom-deform", "rom-remesh"))
    p.add_argument("--snapshots", help="snapshot file for the reduced basis")

    p = sub.add_parser("snapshots", help="extract a snapshot matrix from a run")
    common(p)
    p.add_argument("--window", type=_window, help="snapshot window start:end[:stride]")
    p.add_argument("--fields", help="stored run fields (fields.snap) to extract from")

    p = sub.add_parser("basis", help="compute a POD basis from a snapshot file")
    common(p, config_required=False)
    rom(p)
    p.add_argument("--snapshots", help="snapshot file (default: rom.snapshots of the config)")

    p = sub.add_parser("compare", help="error report of reduced runs against a full run")
    p.add_argument("--config", action="append", required=True,
                   help="configuration file; repeat, one must have mode = full")
    p.add_argument("--out", help="output directory")
    return parser


def _load(args) -> SimConfig:
    cfg = parse_config(args.config) if getattr(args, "config", None) else SimConfig()
    return with_overrides(cfg, mode=getattr(args, "mode", None), eps=getattr(args, "eps", None),
                          rank=getattr(args, "rank", None), window=getattr(args, "window", None),
                          snapshots=getattr(args, "snapshots", None))


def _outdir(args, cfg: SimConfig) -> Path:
    out = Path(args.out or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_mesh(args) -> int:
    cfg = _load(args)
    if cfg.movement == "deform":
        mesh = generate_mesh(cfg.geometry, cfg.box, cfg.density)
    else:
        mesh = remesh(cfg.geometry, cfg.geometry.plate_initial_clearance, cfg.density)
    path = _outdir(args, cfg) / "mesh.txt"
    write_mesh(mesh, path)
    print(f"{path}: {mesh.n_nodes} nodes, {len(mesh.triangles)} triangles, {mesh.n_dofs} dofs")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _load(args)
    out = _outdir(args, cfg)
    store = cfg.mode == "full" and cfg.movement == "deform"
    traj = run_full(cfg, store_fields=True) if store else execute(cfg)
    traj.to_csv(out / "trajectory.csv")
    if store:
        # constant dof layout, so every step fits one snapshot matrix
        write_snapshots(out / "fields.snap", build_snapshots(traj.fields))
    print(f"{out / 'trajectory.csv'}: {len(traj)} steps, wall {traj.wall_time:.2f} s")
    return EXIT_OK


def cmd_snapshots(args) -> int:
    cfg = _load(args)
    out = _outdir(args, cfg)
    start, stop, stride = cfg.window
    if args.fields:
        full = read_snapshots(args.fields)
        if stop > full.S.shape[1]:
            raise ValidationError("rom.window", f"stored run has only {full.S.shape[1]} steps")
        cols = slice(start, stop, stride)
        snaps = SnapshotMatrix(full.S[:, cols], full.times[cols], (start, stop, stride))
    else:
        ref = RunCache().reference(cfg, "deform", stop)
        snaps = build_snapshots(ref.fields, (start, stop, stride))
    path = out / "snapshots.snap"
    write_snapshots(path, snaps)
    print(f"{path}: {snaps.S.shape[0]} x {snaps.S.shape[1]}")
    return EXIT_OK


def cmd_basis(args) -> int:
    cfg = _load(args)
    if not cfg.snapshots:
        raise ValidationError("rom.snapshots", "basis needs --snapshots or rom.snapshots")
    if cfg.eps is None and cfg.rank is None:
        raise ValidationError("rom.eps", "basis needs --eps or --rank")
    out = _outdir(args, cfg)
    basis = compute_basis(read_snapshots(cfg.snapshots), eps=cfg.eps, rank=cfg.rank)
    s = basis.singular_values
    with open(out / "singular_values.csv", "w") as fh:
        fh.write("i,sigma,ratio\n")
        for i, v in enumerate(s, start=1):
            fh.write(f"{i},{v:.17g},{v / s[0]:.17g}\n")
    write_snapshots(out / "basis.snap", SnapshotMatrix(basis.psi, np.arange(basis.r, dtype=float)))
    print(f"r = {basis.r}")
    return EXIT_OK


def cmd_compare(args) -> int:
    configs = [parse_config(p) for p in args.config]
    out = Path(args.out or configs[0].out)
    out.mkdir(parents=True, exist_ok=True)
    report = compare_runs(*configs, cache=RunCache())
    report.to_csv(out / "error_report.csv")
    summary = report.summary()
    (out / "summary.txt").write_text(summary + "\n")
    print(summary)
    return EXIT_OK


COMMANDS = {"mesh": cmd_mesh, "run": cmd_run, "snapshots": cmd_snapshots, "basis": cmd_basis,
            "compare": cmd_compare}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    threads = os.environ.get("LEVIPOD_THREADS")
    try:
        limit = int(threads) if threads else None
    except ValueError:
        print(f"levipod: LEVIPOD_THREADS must be an integer, got {threads!r}", file=sys.stderr)
        return EXIT_USAGE
    try:
        with threadpool_limits(limits=limit):
            return COMMANDS[args.command](args)
    except (ParseError, ValidationError, OSError) as exc:
        print(f"levipod: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (LevipodError, np.linalg.LinAlgError, ValueError) as exc:
        print(f"levipod: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
