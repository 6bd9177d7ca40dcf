"""Trajectory comparison: relative displacement errors, peaks and speedups."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import find_peaks

from .errors import GridMismatch
from .sim import Trajectory


def _check_grid(a: Trajectory, b: Trajectory, window=None):
    if len(a) != len(b) or not np.allclose(a.t, b.t, rtol=0, atol=1e-12):
        raise GridMismatch(f"time grids differ ({len(a)} vs {len(b)} steps)")
    if window is None:
        return slice(None)
    start, stop = window[0], window[1]
    if not 0 <= start < stop <= len(a):
        raise GridMismatch(f"window {start}:{stop} outside the {len(a)}-step grid")
    return slice(start, stop)


def l2_relative_error(traj_a: Trajectory, traj_b: Trajectory, window=None) -> float:
    """``||y_a - y_b|| / ||y_b||`` with ``traj_b`` the reference."""
    sel = _check_grid(traj_a, traj_b, window)
    ya, yb = np.asarray(traj_a.y)[sel], np.asarray(traj_b.y)[sel]
    return float(np.linalg.norm(ya - yb) / np.linalg.norm(yb))


def peak_errors(traj_a: Trajectory, traj_b: Trajectory) -> np.ndarray:
    """Relative height error at each local maximum of the reference."""
    _check_grid(traj_a, traj_b)
    peaks, _ = find_peaks(traj_b.y)
    return np.abs(traj_a.y[peaks] - traj_b.y[peaks]) / np.abs(traj_b.y[peaks])


def speedup(reference: Trajectory, other: Trajectory) -> float:
    return reference.wall_time / other.wall_time


@dataclass
class ReportRow:
    label: str
    mode: str
    movement: str
    box_width: float
    eps: float | None
    r: int
    error: float
    wall_s: float
    speedup: float
    peak_errors: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0))


@dataclass
class ErrorReport:
    rows: list[ReportRow]

    FIELDS = ("label", "mode", "movement", "box_width", "eps", "r", "error", "wall_s", "speedup",
              "max_peak_error")

    def row(self, label: str) -> ReportRow:
        return next(r for r in self.rows if r.label == label)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.FIELDS)
        for r in self.rows:
            peak = float(r.peak_errors.max()) if len(r.peak_errors) else 0.0
            w.writerow([r.label, r.mode, r.movement, repr(r.box_width),
                        "" if r.eps is None else repr(r.eps), r.r, repr(r.error),
                        repr(r.wall_s), repr(r.speedup), repr(peak)])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    def summary(self) -> str:
        lines = [f"{'label':<28} {'mode':<11} {'r':>4} {'L2 error':>11} {'wall [s]':>9} {'speedup':>8}"]
        for r in self.rows:
            lines.append(f"{r.label:<28} {r.mode:<11} {r.r:>4} {r.error:>11.3e} "
                         f"{r.wall_s:>9.2f} {r.speedup:>8.2f}")
        deform = [r for r in self.rows if r.mode == "rom-deform"]
        remesh = [r for r in self.rows if r.mode == "rom-remesh"]
        if deform and remesh:
            ratio = min(r.wall_s for r in remesh) / max(r.wall_s for r in deform)
            lines.append(f"deformation ROM is at least {ratio:.1f}x faster than remeshing ROM")
        return "\n".join(lines)
