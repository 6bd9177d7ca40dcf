"""Proper orthogonal decomposition of field snapshots and Galerkin reduction.

The POD basis is exposed as a scikit-learn transformer (:class:`PODBasis`)
so it composes with pipelines and ``get_params``/``set_params``; the
functional helpers below wrap it with the column-snapshot convention used by
the simulator (``S`` is ``N x M``, one solution per column).
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .errors import (DimensionMismatch, EmptyWindow, InconsistentLength, InvalidTolerance,
                     PointNotLocated, SingularReducedSystem, ZeroSnapshot)
from .fem import FieldSolution
from .mesh import PLATE, Mesh, TriangleLocator

SNAPSHOT_MAGIC = b"PODSNAP1"


@dataclass(frozen=True)
class SnapshotMatrix:
    S: np.ndarray
    times: np.ndarray
    window: tuple[int, int, int] = (0, 0, 1)

    def __post_init__(self):
        if self.S.ndim != 2 or self.S.shape[1] < 1:
            raise EmptyWindow("snapshot matrix needs at least one column")
        if len(self.times) != self.S.shape[1]:
            raise InconsistentLength("one time stamp per column required")

    @property
    def shape(self):
        return self.S.shape


def build_snapshots(solutions: Sequence, window: tuple | slice | None = None) -> SnapshotMatrix:
    """Stack solutions (in time order) selected by ``window = (start, stop[, stride])``."""
    if window is None:
        window = (0, len(solutions), 1)
    if isinstance(window, slice):
        window = (window.start or 0, window.stop if window.stop is not None else len(solutions),
                  window.step or 1)
    start, stop, stride = (tuple(window) + (1,))[:3]
    picked = list(solutions)[start:stop:stride]
    if not picked:
        raise EmptyWindow(f"window {start}:{stop}:{stride} selects no solution")
    cols, times = [], []
    for i, s in enumerate(picked):
        if isinstance(s, FieldSolution):
            cols.append(np.asarray(s.x, dtype=float))
            times.append(s.t)
        else:
            cols.append(np.asarray(s, dtype=float))
            times.append(float(start + i * stride))
    n = len(cols[0])
    if any(len(c) != n for c in cols):
        raise InconsistentLength("snapshots have different lengths")
    return SnapshotMatrix(np.column_stack(cols), np.asarray(times, dtype=float), (start, stop, stride))


def truncation_rank(singular_values: np.ndarray, eps: float) -> int:
    """Number of leading modes with ``s[i] / s[0] > eps`` (strict)."""
    s = np.asarray(singular_values)
    if not 0 < eps < 1:
        raise InvalidTolerance(f"tolerance must lie in (0, 1), got {eps}")
    ok = s / s[0] > eps
    return int(np.argmin(ok)) if not ok.all() else len(s)


def _fix_signs(U: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[idx, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    return U * signs


class PODBasis(TransformerMixin, BaseEstimator):
    """Orthonormal POD basis from the left singular vectors of the snapshots.

    Parameters
    ----------
    eps : float, optional
        Keep modes with ``sigma_i / sigma_1 > eps``.
    n_components : int, optional
        Fixed basis size; overrides ``eps``.  Values above ``min(N, M)``
        complete the basis with the remaining left singular vectors of a
        full SVD (up to ``N``, a square orthogonal basis).

    Notes
    -----
    Following the scikit-learn convention ``fit`` takes samples as rows,
    i.e. ``X = S.T``.  ``components_`` has shape ``(r, N)`` and
    ``basis_ = components_.T`` is the ``N x r`` projection matrix.
    """

    def __init__(self, eps=None, n_components=None):
        self.eps = eps
        self.n_components = n_components

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        if not np.any(X):
            raise ZeroSnapshot("snapshot matrix is identically zero")
        S = X.T
        n, m = S.shape
        if self.n_components is None and self.eps is None:
            raise InvalidTolerance("either eps or n_components is required")
        if self.n_components is not None and self.n_components > min(n, m):
            if self.n_components > n:
                raise DimensionMismatch(f"cannot build {self.n_components} modes in R^{n}")
            U, s, _ = la.svd(S, full_matrices=True, lapack_driver="gesdd")
        else:
            U, s, _ = la.svd(S, full_matrices=False, lapack_driver="gesdd")
        if self.n_components is not None:
            r = int(self.n_components)
            if r < 1:
                raise DimensionMismatch("n_components must be >= 1")
        else:
            r = truncation_rank(s, self.eps)
        self.singular_values_ = s
        self.n_components_ = r
        self.components_ = _fix_signs(U[:, :r]).T
        self.n_features_in_ = n
        return self

    @property
    def basis_(self) -> np.ndarray:
        check_is_fitted(self, "components_")
        return self.components_.T

    def transform(self, X):
        check_is_fitted(self, "components_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise DimensionMismatch(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return X @ self.components_.T

    def inverse_transform(self, X):
        check_is_fitted(self, "components_")
        X = check_array(X, dtype=np.float64)
        return X @ self.components_

    def reconstruction_error(self, X) -> float:
        """Frobenius norm of ``X - X P P^T`` over the training-style rows."""
        return float(np.linalg.norm(X - self.inverse_transform(self.transform(X))))


@dataclass(frozen=True)
class ReducedBasis:
    psi: np.ndarray
    singular_values: np.ndarray
    eps: float | None
    r: int

    def __post_init__(self):
        if self.psi.shape[1] != self.r:
            raise DimensionMismatch("basis width does not match r")

    @property
    def n(self) -> int:
        return self.psi.shape[0]

    def truncate(self, r: int) -> "ReducedBasis":
        """Nested prefix of this basis."""
        return ReducedBasis(self.psi[:, :r], self.singular_values, None, r)


def compute_basis(S, eps: float | None = None, rank: int | None = None) -> ReducedBasis:
    if isinstance(S, SnapshotMatrix):
        S = S.S
    S = np.asarray(S, dtype=float)
    if eps is not None and not 0 < eps < 1:
        raise InvalidTolerance(f"tolerance must lie in (0, 1), got {eps}")
    if not np.any(S):
        raise ZeroSnapshot("snapshot matrix is identically zero")
    pod = PODBasis(eps=eps, n_components=rank).fit(S.T)
    return ReducedBasis(pod.basis_, pod.singular_values_, eps, pod.n_components_)


@dataclass
class ReducedOperators:
    A_r: np.ndarray
    B_r: np.ndarray
    C_r: Callable[[float], np.ndarray]
    psi: np.ndarray


def _congruence(M, psi):
    out = psi.T @ (M @ psi)
    return np.asarray(0.5 * (out + out.T))


def reduce_operators(A, B, C, psi) -> ReducedOperators:
    """``A_r = psi^T A psi``, ``B_r = psi^T B psi``, ``C_r(t) = psi^T C(t)``.

    ``C`` may be a vector or a callable of time.  The congruences are
    symmetrized, which is exact for symmetric inputs up to rounding.
    """
    psi = np.asarray(psi, dtype=float)
    if psi.ndim != 2:
        raise DimensionMismatch("psi must be a matrix")
    n = psi.shape[0]
    for name, M in (("A", A), ("B", B)):
        if M.shape != (n, n):
            raise DimensionMismatch(f"{name} is {M.shape}, basis has {n} rows")
    if callable(C):
        def C_r(t, _C=C):
            return psi.T @ _C(t)
    else:
        C = np.asarray(C, dtype=float)
        if C.shape != (n,):
            raise DimensionMismatch(f"C has shape {C.shape}, expected ({n},)")
        c_r = psi.T @ C

        def C_r(t, _c=c_r):
            return _c
    return ReducedOperators(_congruence(A, psi), _congruence(B, psi), C_r, psi)


def step_reduced(ops: ReducedOperators, x_r_prev, dt: float, t_k: float) -> np.ndarray:
    """Backward-Euler step ``(A_r/dt + B_r) x_k = C_r(t_k) + (A_r/dt) x_{k-1}``."""
    x_r_prev = np.asarray(x_r_prev, dtype=float)
    K = ops.A_r / dt + ops.B_r
    rhs = ops.C_r(t_k) + ops.A_r @ x_r_prev / dt
    try:
        c = la.cho_factor(K, check_finite=True)
        x = la.cho_solve(c, rhs)
    except la.LinAlgError:
        try:
            with np.errstate(divide="ignore", invalid="ignore"):
                x = la.solve(K, rhs)
        except la.LinAlgError as exc:
            raise SingularReducedSystem(str(exc)) from exc
    if not np.all(np.isfinite(x)):
        raise SingularReducedSystem("reduced solve produced non-finite values")
    return x


def lift(x_r, psi) -> np.ndarray:
    psi = np.asarray(psi)
    x_r = np.asarray(x_r, dtype=float)
    if psi.shape[1] != x_r.shape[0]:
        raise DimensionMismatch(f"basis has {psi.shape[1]} columns, reduced vector {x_r.shape[0]}")
    return psi @ x_r


def project(x, psi) -> np.ndarray:
    psi = np.asarray(psi)
    if psi.shape[0] != len(x):
        raise DimensionMismatch("vector length does not match basis rows")
    return psi.T @ x


class MeshTransfer:
    """Interpolate FE fields living on ``source`` at the nodes of other meshes.

    Target nodes belonging to the plate are evaluated in the plate's own frame
    (shifted by the plate displacement between the meshes) inside the source
    plate; other nodes, when requested, by plain linear interpolation at the
    same ``(r, z)`` location.
    """

    def __init__(self, source: Mesh):
        self.source = source
        self._plate = TriangleLocator(source, np.flatnonzero(source.regions == PLATE))
        self._all = None

    def _locate(self, locator, pts, what, tol):
        elem, bary = locator.locate(pts, tol)
        if (elem < 0).any():
            i = int(np.flatnonzero(elem < 0)[0])
            raise PointNotLocated(f"{what} target point {tuple(pts[i])} not covered by the source mesh")
        return elem, bary

    def weights(self, target: Mesh, offset: float | None = None, region: str = "plate",
                tol: float = 1e-9):
        """Sparse nodal interpolation matrix ``(target nodes) x (source nodes)``."""
        src = self.source
        if offset is None:
            if src.plate_position is not None and target.plate_position is not None:
                offset = target.plate_position - src.plate_position
            else:
                offset = 0.0
        plate_nodes = target.region_nodes(PLATE)
        rows, elems, barys = [], [], []
        if len(plate_nodes):
            pts = target.nodes[plate_nodes] - np.array([0.0, offset])
            e, b = self._locate(self._plate, pts, "plate", tol)
            rows.append(plate_nodes), elems.append(e), barys.append(b)
        if region == "all":
            if self._all is None:
                self._all = TriangleLocator(src)
            others = np.setdiff1d(np.arange(target.n_nodes), plate_nodes)
            e, b = self._locate(self._all, target.nodes[others], "domain", tol)
            rows.append(others), elems.append(e), barys.append(b)
        elif region != "plate":
            raise ValueError(f"unknown region {region!r}")
        rows = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
        elems = np.concatenate(elems) if elems else np.zeros(0, dtype=np.int64)
        barys = np.concatenate(barys) if barys else np.zeros((0, 3))
        cols = src.triangles[elems]
        return sp.csr_matrix((barys.ravel(), (np.repeat(rows, 3), cols.ravel())),
                             shape=(target.n_nodes, src.n_nodes))

    def dof_matrix(self, target: Mesh, offset: float | None = None, region: str = "plate"):
        """Interpolation between free-dof vectors of the two meshes."""
        W = self.weights(target, offset, region)
        src_free = self.source.free_nodes
        tgt_free = target.free_nodes
        return W[tgt_free][:, src_free].tocsr()


def project_between_meshes(x_src, mesh_src: Mesh, mesh_tgt: Mesh, offset: float | None = None,
                           region: str = "plate", nodal: bool = False) -> np.ndarray:
    """Transfer a field from ``mesh_src`` to the nodes of ``mesh_tgt``.

    ``x_src`` is a free-dof vector (or nodal values with ``nodal=True``); the
    result uses the same convention on the target mesh.  With
    ``region="plate"`` only plate nodes receive values, the rest are zero.
    """
    W = MeshTransfer(mesh_src).weights(mesh_tgt, offset, region)
    values = np.asarray(x_src, dtype=float) if nodal else mesh_src.to_nodal(x_src)
    if len(values) != mesh_src.n_nodes:
        raise DimensionMismatch("nodal field length does not match the source mesh")
    out = W @ values
    return out if nodal else out[mesh_tgt.free_nodes]


def write_snapshots(path, snapshots: SnapshotMatrix) -> None:
    """Binary ``PODSNAP1`` file plus a ``<path>.times`` sidecar."""
    S = np.asarray(snapshots.S, dtype="<f8")
    n, m = S.shape
    with open(path, "wb") as fh:
        fh.write(SNAPSHOT_MAGIC)
        fh.write(struct.pack("<QQ", n, m))
        fh.write(np.asfortranarray(S).tobytes(order="F"))
    Path(str(path) + ".times").write_text("".join(f"{t!r}\n" for t in np.asarray(snapshots.times).tolist()))


def read_snapshots(path) -> SnapshotMatrix:
    raw = Path(path).read_bytes()
    if raw[:8] != SNAPSHOT_MAGIC:
        raise ValueError(f"{path} is not a snapshot file")
    n, m = struct.unpack("<QQ", raw[8:24])
    data = np.frombuffer(raw[24:], dtype="<f8")
    if data.size != n * m:
        raise InconsistentLength(f"expected {n * m} values, found {data.size}")
    S = data.reshape((n, m), order="F").astype(float)
    sidecar = Path(str(path) + ".times")
    times = np.array([float(v) for v in sidecar.read_text().split()]) if sidecar.exists() \
        else np.arange(m, dtype=float)
    return SnapshotMatrix(S, times, (0, m, 1))
