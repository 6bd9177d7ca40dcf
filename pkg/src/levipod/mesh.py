"""Axisymmetric triangular meshes of the levitation device.

Coordinates are ``(r, z)`` in meters with ``z = 0`` at the upper border of
the coils.  The plate position ``y`` is the clearance of the plate's lower
face above the coils, so the plate occupies ``[0, R_p] x [y, y + thickness]``.

Meshes are built on a graded tensor-product grid whose lines pass through
every material interface (coil edges, plate faces, deformation box edges).
Each cell is split into two counter-clockwise triangles.  The grid is fine
(spacing ``density``) around the device and coarsens linearly towards the
truncation boundary.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import DegenerateElement, InvalidGeometry, MeshGenFailure, OutOfBounds, PointNotLocated

REGIONS = ("air", "box_air", "plate", "coil_inner", "coil_outer")
AIR, BOX_AIR, PLATE, COIL_INNER, COIL_OUTER = range(5)

BOUNDARY_TAGS = ("free", "box_boundary", "axis", "outer_dirichlet")
FREE, BOX_BOUNDARY, AXIS, OUTER_DIRICHLET = range(4)

AREA_FLOOR = 1e-12

_TOL = 1e-12


@dataclass(frozen=True)
class Coil:
    """Rectangular coil cross-section in the (r, z) half-plane."""

    r_inner: float
    r_outer: float
    z_bottom: float
    z_top: float
    turns: int

    @property
    def area(self) -> float:
        return (self.r_outer - self.r_inner) * (self.z_top - self.z_bottom)

    def contains(self, r, z):
        return (r > self.r_inner) & (r < self.r_outer) & (z > self.z_bottom) & (z < self.z_top)


# Approximate TEAM-28 layout: equal current density in both coils at equal
# current (cross-section areas in the 960:576 turns ratio).
DEFAULT_COIL_INNER = Coil(0.0125, 0.0375, -0.025, 0.0, 960)
DEFAULT_COIL_OUTER = Coil(0.0425, 0.0575, -0.025, 0.0, 576)


@dataclass(frozen=True)
class Geometry:
    plate_radius: float = 0.065
    plate_thickness: float = 0.0028
    plate_initial_clearance: float = 3.8e-3
    mesh_reference_clearance: float = 12.8e-3
    coil_inner: Coil = DEFAULT_COIL_INNER
    coil_outer: Coil = DEFAULT_COIL_OUTER
    domain_truncation_radius: float = 0.4
    # top of the finely meshed zone above the coils
    core_top: float = 0.0293
    plate_layers: int = 2
    growth: float = 0.3

    def __post_init__(self):
        for name in ("plate_radius", "plate_thickness", "plate_initial_clearance",
                     "mesh_reference_clearance", "domain_truncation_radius", "core_top",
                     "growth"):
            if not getattr(self, name) > 0:
                raise InvalidGeometry(f"{name} must be strictly positive")
        if self.plate_layers < 1:
            raise InvalidGeometry("plate_layers must be >= 1")
        for coil in self.coils:
            if not (0 <= coil.r_inner < coil.r_outer and coil.z_bottom < coil.z_top):
                raise InvalidGeometry(f"degenerate coil {coil}")
            if coil.turns <= 0:
                raise InvalidGeometry("coil turns must be positive")
        a, b = self.coils
        if a.r_outer > b.r_inner and b.r_outer > a.r_inner and \
                a.z_top > b.z_bottom and b.z_top > a.z_bottom:
            raise InvalidGeometry("coils overlap")
        extent = max(self.plate_radius, a.r_outer, b.r_outer)
        if self.domain_truncation_radius < 2 * extent:
            raise InvalidGeometry("truncation boundary too close to the device")
        if self.plate_initial_clearance <= self.coil_top:
            raise InvalidGeometry("plate overlaps the coils")

    @property
    def coils(self) -> tuple[Coil, Coil]:
        return (self.coil_inner, self.coil_outer)

    @property
    def coil_top(self) -> float:
        return max(c.z_top for c in self.coils)

    @property
    def core_radius(self) -> float:
        return max(self.plate_radius, *(c.r_outer for c in self.coils))


@dataclass(frozen=True)
class DeformBox:
    """Sub-domain ``[0, x_extent] x [y_min, y_max]`` where elements may deform."""

    y_min: float = 1.3e-3
    y_max: float = 29.3e-3
    x_extent: float = 0.195
    reference_position: float = 12.8e-3
    # minimal air gap kept between the plate faces and the box edges
    margin: float = 0.25e-3

    def __post_init__(self):
        if not self.y_min < self.reference_position < self.y_max:
            raise InvalidGeometry("box requires y_min < reference_position < y_max")
        if self.x_extent <= 0 or self.margin < 0:
            raise InvalidGeometry("box extent must be positive")

    def admissible(self, y: float, thickness: float) -> bool:
        return self.y_min + self.margin <= y and y + thickness <= self.y_max - self.margin

    def check(self, y: float, thickness: float) -> None:
        if not self.admissible(y, thickness):
            raise OutOfBounds(
                f"plate position {y:.6g} m outside deformation box "
                f"[{self.y_min + self.margin:.6g}, {self.y_max - self.margin - thickness:.6g}]")


@dataclass(frozen=True)
class MeshQualityReport:
    min_area: float
    min_angle: float
    worst_aspect_ratio: float


@dataclass(eq=False)
class Mesh:
    """Triangulation with region and boundary tags.

    ``dof_map[i]`` is the unknown index of node ``i`` or ``-1`` for nodes
    carrying a homogeneous Dirichlet condition (axis and outer boundary).
    """

    nodes: np.ndarray
    triangles: np.ndarray
    regions: np.ndarray
    boundary: np.ndarray
    plate_position: float | None = None
    geometry: Geometry | None = None
    box: DeformBox | None = None
    reference_nodes: np.ndarray | None = None
    reference_position: float | None = None
    dof_map: np.ndarray = field(init=False)

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=float)
        self.triangles = np.asarray(self.triangles, dtype=np.int64)
        self.regions = np.asarray(self.regions, dtype=np.int64)
        self.boundary = np.asarray(self.boundary, dtype=np.int64)
        fixed = (self.boundary == AXIS) | (self.boundary == OUTER_DIRICHLET)
        dof_map = np.full(len(self.nodes), -1, dtype=np.int64)
        dof_map[~fixed] = np.arange(int((~fixed).sum()))
        self.dof_map = dof_map
        for arr in (self.nodes, self.triangles, self.regions, self.boundary, self.dof_map):
            arr.flags.writeable = False

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_dofs(self) -> int:
        return int((self.dof_map >= 0).sum())

    @property
    def free_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.dof_map >= 0)

    def signed_areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def centroids(self) -> np.ndarray:
        return self.nodes[self.triangles].mean(axis=1)

    def region_nodes(self, region: int) -> np.ndarray:
        """Sorted indices of nodes touching at least one triangle of ``region``."""
        return np.unique(self.triangles[self.regions == region])

    def to_nodal(self, x: np.ndarray) -> np.ndarray:
        """Expand a dof vector to nodal values (zero on Dirichlet nodes)."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n_dofs,):
            raise ValueError(f"expected {self.n_dofs} dofs, got {x.shape}")
        out = np.zeros(self.n_nodes)
        free = self.dof_map >= 0
        out[free] = x[self.dof_map[free]]
        return out

    def same_layout(self, other: "Mesh") -> bool:
        return (self.n_nodes == other.n_nodes
                and np.array_equal(self.triangles, other.triangles)
                and np.array_equal(self.dof_map, other.dof_map))

    def __eq__(self, other):
        if not isinstance(other, Mesh):
            return NotImplemented
        return (np.array_equal(self.nodes, other.nodes)
                and np.array_equal(self.triangles, other.triangles)
                and np.array_equal(self.regions, other.regions)
                and np.array_equal(self.boundary, other.boundary))

    __hash__ = None


def _graded_points(a, b, h0, growth, core_lo, core_hi, min_div=1):
    """Points on ``[a, b]`` following the spacing ``h0 + growth * dist(s, core)``."""
    s = np.linspace(a, b, 4001)
    dist = np.maximum(core_lo - s, 0.0) + np.maximum(s - core_hi, 0.0)
    inv_h = 1.0 / (h0 + growth * dist)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (inv_h[1:] + inv_h[:-1]) * np.diff(s))])
    n = max(min_div, math.ceil(cum[-1] - 1e-9))
    pts = np.interp(np.linspace(0.0, cum[-1], n + 1), cum, s)
    pts[0], pts[-1] = a, b
    return pts


def _lines(breaks, h0, growth, core_lo, core_hi, min_div=None):
    breaks = sorted(set(float(b) for b in breaks))
    merged = [breaks[0]]
    for b in breaks[1:]:
        if b - merged[-1] > 1e-9:
            merged.append(b)
    min_div = min_div or {}
    out = [np.array([merged[0]])]
    for a, b in zip(merged[:-1], merged[1:]):
        nmin = min_div.get((a, b), 1)
        out.append(_graded_points(a, b, h0, growth, core_lo, core_hi, nmin)[1:])
    return np.concatenate(out)


def _grid(r_lines, z_lines):
    """Nodes and counter-clockwise triangles of a tensor grid, two per cell."""
    nr, nz = len(r_lines), len(z_lines)
    rr, zz = np.meshgrid(r_lines, z_lines)
    nodes = np.column_stack([rr.ravel(), zz.ravel()])
    idx = np.arange(nr * nz).reshape(nz, nr)
    n00 = idx[:-1, :-1].ravel()
    n10 = idx[:-1, 1:].ravel()
    n01 = idx[1:, :-1].ravel()
    n11 = idx[1:, 1:].ravel()
    tris = np.empty((2 * len(n00), 3), dtype=np.int64)
    tris[0::2] = np.column_stack([n00, n10, n11])
    tris[1::2] = np.column_stack([n00, n11, n01])
    return nodes, tris


def structured_mesh(r_lines, z_lines, region: int = AIR) -> Mesh:
    """Single-region mesh of a rectangle; no Dirichlet nodes, nothing tagged."""
    r_lines = np.asarray(r_lines, dtype=float)
    z_lines = np.asarray(z_lines, dtype=float)
    if len(r_lines) < 2 or len(z_lines) < 2 or (np.diff(r_lines) <= 0).any() \
            or (np.diff(z_lines) <= 0).any() or r_lines[0] < 0:
        raise MeshGenFailure("grid lines must be increasing, with r >= 0")
    nodes, tris = _grid(r_lines, z_lines)
    return Mesh(nodes, tris, np.full(len(tris), region), np.full(len(nodes), FREE))


def _tensor_mesh(geometry: Geometry, y: float, density: float, box: DeformBox | None) -> Mesh:
    if not density > 0:
        raise MeshGenFailure("density must be positive")
    g = geometry
    R = g.domain_truncation_radius
    t = g.plate_thickness
    if y <= g.coil_top + _TOL:
        raise InvalidGeometry(f"plate at {y:.6g} m overlaps the coils")
    if y + t >= R:
        raise InvalidGeometry("plate outside the truncated domain")
    if box is not None:
        if box.x_extent < g.plate_radius:
            raise InvalidGeometry("deformation box narrower than the plate")
        if box.y_min <= g.coil_top:
            raise InvalidGeometry("deformation box overlaps the coils")
        box.check(y, t)

    r_breaks = [0.0, R, g.plate_radius]
    for c in g.coils:
        r_breaks += [c.r_inner, c.r_outer]
    z_breaks = [-R, R, y, y + t]
    for c in g.coils:
        z_breaks += [c.z_bottom, c.z_top]
    if box is not None:
        r_breaks.append(box.x_extent)
        z_breaks += [box.y_min, box.y_max]
    z_core_lo = min(c.z_bottom for c in g.coils)
    z_core_hi = max(g.core_top, y + t)
    r_lines = _lines(r_breaks, density, g.growth, 0.0, g.core_radius)
    z_lines = _lines(z_breaks, density, g.growth, z_core_lo, z_core_hi,
                     min_div={(y, y + t): g.plate_layers})
    # _lines keys are the merged breakpoints; recover plate layering if merged away
    nr, nz = len(r_lines), len(z_lines)
    if nr < 2 or nz < 2:
        raise MeshGenFailure("grid has fewer than two lines")

    nodes, tris = _grid(r_lines, z_lines)
    c = nodes[tris].mean(axis=1)
    cr, cz = c[:, 0], c[:, 1]
    regions = np.full(len(tris), AIR, dtype=np.int64)
    if box is not None:
        regions[(cr < box.x_extent) & (cz > box.y_min) & (cz < box.y_max)] = BOX_AIR
    regions[g.coil_inner.contains(cr, cz)] = COIL_INNER
    regions[g.coil_outer.contains(cr, cz)] = COIL_OUTER
    regions[(cr < g.plate_radius) & (cz > y) & (cz < y + t)] = PLATE

    r, z = nodes[:, 0], nodes[:, 1]
    boundary = np.full(len(nodes), FREE, dtype=np.int64)
    if box is not None:
        in_z = (z >= box.y_min - _TOL) & (z <= box.y_max + _TOL)
        on_side = np.isclose(r, box.x_extent, rtol=0, atol=_TOL) & in_z
        on_lid = (np.isclose(z, box.y_min, rtol=0, atol=_TOL)
                  | np.isclose(z, box.y_max, rtol=0, atol=_TOL)) & (r <= box.x_extent + _TOL)
        boundary[on_side | on_lid] = BOX_BOUNDARY
    boundary[r == 0.0] = AXIS
    boundary[(r == R) | (z == -R) | (z == R)] = OUTER_DIRICHLET

    mesh = Mesh(nodes, tris, regions, boundary, plate_position=float(y), geometry=g, box=box,
                reference_nodes=nodes, reference_position=float(y))
    if mesh.signed_areas().min() <= AREA_FLOOR:
        raise MeshGenFailure("triangulation produced a degenerate element")
    return mesh


def generate_mesh(geometry: Geometry, box: DeformBox, density: float) -> Mesh:
    """Build the undeformed mesh with the plate at ``box.reference_position``."""
    return _tensor_mesh(geometry, box.reference_position, density, box)


def remesh(geometry: Geometry, y: float, density: float, box: DeformBox | None = None) -> Mesh:
    """Fresh full-domain triangulation with the plate at clearance ``y``.

    Without ``box`` the grid has no deformation sub-domain lines, so the
    number of unknowns follows the plate position.
    """
    return _tensor_mesh(geometry, y, density, box)


def _deformed_z(r, z, box: DeformBox, geometry: Geometry, y_ref: float, y: float):
    t = geometry.plate_thickness
    inside = (r < box.x_extent - _TOL) & (z > box.y_min + _TOL) & (z < box.y_max - _TOL)
    # piecewise-linear in z: stretch below, translate the plate, shrink above
    target = np.interp(z, [box.y_min, y_ref, y_ref + t, box.y_max],
                       [box.y_min, y, y + t, box.y_max])
    return np.where(inside, target, z)


def deform_subdomain(mesh: Mesh, box: DeformBox, y: float, area_floor: float = AREA_FLOOR) -> Mesh:
    """Move the plate to ``y`` by deforming the box elements vertically.

    The map always starts from the mesh's reference coordinates, so deforming
    back to the reference position restores the original nodes exactly.
    """
    if mesh.reference_nodes is None or mesh.geometry is None:
        raise ValueError("mesh carries no reference configuration")
    g = mesh.geometry
    box.check(y, g.plate_thickness)
    y_ref = mesh.reference_position
    ref = mesh.reference_nodes
    if y == y_ref:
        nodes = ref
    else:
        z = _deformed_z(ref[:, 0], ref[:, 1], box, g, y_ref, y)
        nodes = np.column_stack([ref[:, 0], z])
    out = Mesh(nodes, mesh.triangles, mesh.regions, mesh.boundary, plate_position=float(y),
               geometry=g, box=box, reference_nodes=ref, reference_position=y_ref)
    areas = out.signed_areas()
    if areas.min() <= area_floor:
        bad = int(np.argmin(areas))
        raise DegenerateElement(f"triangle {bad} has area {areas[bad]:.3g} m^2 at y={y:.6g}")
    return out


def quality(mesh: Mesh) -> MeshQualityReport:
    p = mesh.nodes[mesh.triangles]
    area = mesh.signed_areas()
    e = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 1], p[:, 0] - p[:, 2]], axis=1)
    lens = np.linalg.norm(e, axis=2)
    angles = []
    for i in range(3):
        a, b = -e[:, i - 1], e[:, i]
        cosang = np.einsum("ij,ij->i", a, b) / (lens[:, i - 1] * lens[:, i])
        angles.append(np.degrees(np.arccos(np.clip(cosang, -1.0, 1.0))))
    min_angle = float(np.min(angles))
    # circumradius / (2 * inradius): 1 for an equilateral triangle
    abs_area = np.maximum(np.abs(area), np.finfo(float).tiny)
    s = lens.sum(axis=1) / 2
    inradius = abs_area / s
    circum = lens.prod(axis=1) / (4 * abs_area)
    return MeshQualityReport(float(area.min()), min_angle, float(np.max(circum / (2 * inradius))))


def write_mesh(mesh: Mesh, path) -> None:
    lines = [f"nodes {mesh.n_nodes}"]
    lines += [f"{r!r} {z!r} {BOUNDARY_TAGS[b]}" for (r, z), b in zip(mesh.nodes.tolist(), mesh.boundary)]
    lines.append(f"triangles {len(mesh.triangles)}")
    lines += [f"{i} {j} {k} {REGIONS[g]}" for (i, j, k), g in zip(mesh.triangles.tolist(), mesh.regions)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path) -> Mesh:
    rows = Path(path).read_text().split("\n")
    pos = 0

    def header(name):
        nonlocal pos
        key, count = rows[pos].split()
        if key != name:
            raise ValueError(f"expected '{name}' header at line {pos + 1}")
        pos += 1
        return int(count)

    n = header("nodes")
    nodes = np.empty((n, 2))
    boundary = np.empty(n, dtype=np.int64)
    for i in range(n):
        r, z, tag = rows[pos].split()
        nodes[i] = float(r), float(z)
        boundary[i] = BOUNDARY_TAGS.index(tag)
        pos += 1
    m = header("triangles")
    tris = np.empty((m, 3), dtype=np.int64)
    regions = np.empty(m, dtype=np.int64)
    for i in range(m):
        a, b, c, tag = rows[pos].split()
        tris[i] = int(a), int(b), int(c)
        regions[i] = REGIONS.index(tag)
        pos += 1
    return Mesh(nodes, tris, regions, boundary)


def _barycentric(p, pts):
    """Barycentric coordinates of ``pts`` (k, 2) in triangles ``p`` (k, 3, 2)."""
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    q = pts - p[:, 0]
    l1 = (q[:, 0] * d2[:, 1] - q[:, 1] * d2[:, 0]) / det
    l2 = (d1[:, 0] * q[:, 1] - d1[:, 1] * q[:, 0]) / det
    return np.column_stack([1.0 - l1 - l2, l1, l2])


class TriangleLocator:
    """Find the triangle containing each query point.

    Candidates come from the nearest element centroids; points not resolved
    that way fall back to an exhaustive barycentric scan.
    """

    def __init__(self, mesh: Mesh, elements: np.ndarray | None = None, k: int = 8):
        from scipy.spatial import cKDTree

        self.mesh = mesh
        self.elements = np.arange(len(mesh.triangles)) if elements is None else np.asarray(elements)
        self.points = mesh.nodes[mesh.triangles[self.elements]]
        self.k = min(k, len(self.elements))
        self.tree = cKDTree(self.points.mean(axis=1))

    def locate(self, pts: np.ndarray, tol: float = 1e-9):
        """Return ``(element, bary)``; element is -1 where no triangle contains the point."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        n = len(pts)
        elem = np.full(n, -1, dtype=np.int64)
        bary = np.zeros((n, 3))
        best = np.full(n, -np.inf)
        _, cand = self.tree.query(pts, k=self.k)
        cand = cand.reshape(n, -1)
        for col in range(cand.shape[1]):
            c = cand[:, col]
            lam = _barycentric(self.points[c], pts)
            score = lam.min(axis=1)
            better = score > best
            best[better] = score[better]
            elem[better] = c[better]
            bary[better] = lam[better]
        todo = np.flatnonzero(best < -tol)
        for i in todo:
            lam = _barycentric(self.points, np.broadcast_to(pts[i], (len(self.points), 2)))
            score = lam.min(axis=1)
            j = int(np.argmax(score))
            best[i], elem[i], bary[i] = score[j], j, lam[j]
        found = best >= -tol
        out = np.where(found, self.elements[elem], -1)
        return out, bary


def locate_points(mesh: Mesh, pts: np.ndarray, tol: float = 1e-9):
    """Containing element and barycentric coordinates of each point.

    Raises ``PointNotLocated`` if a point lies outside the mesh.
    """
    elem, bary = TriangleLocator(mesh).locate(pts, tol)
    if (elem < 0).any():
        i = int(np.flatnonzero(elem < 0)[0])
        raise PointNotLocated(f"point {tuple(np.atleast_2d(pts)[i])} is outside the mesh")
    return elem, bary


def with_nodes(mesh: Mesh, nodes: np.ndarray) -> Mesh:
    """Copy of ``mesh`` with replaced coordinates (used by synthetic tests)."""
    return replace(mesh, nodes=np.array(nodes, dtype=float))
