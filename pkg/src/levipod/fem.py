"""First-order axisymmetric eddy-current finite elements.

The unknown is the modified potential ``u = r * A_theta`` at the mesh nodes,
so that

    b_r = -(1/r) du/dz,    b_z = (1/r) du/dr,    flux through a disk = 2*pi*u.

With the volume element ``2*pi*r dr dz`` the bilinear forms become

    stiffness  B_ij = 2*pi * int nu/r    grad(phi_i) . grad(phi_j)
    mass       A_ij = 2*pi * int sigma/r phi_i phi_j
    source     C_i  = 2*pi * int j_s     phi_i

All element integrals use the symmetric 3-point rule whose points are strictly
inside the triangle, which keeps ``1/r`` finite on elements touching the axis.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import DegenerateElement, MeshMismatch
from .mesh import COIL_INNER, COIL_OUTER, PLATE, REGIONS, Mesh, locate_points

MU0 = 4e-7 * np.pi
TWO_PI = 2.0 * np.pi

# barycentric coordinates of the quadrature points, equal weights 1/3
QUAD = np.array([[2 / 3, 1 / 6, 1 / 6],
                 [1 / 6, 2 / 3, 1 / 6],
                 [1 / 6, 1 / 6, 2 / 3]])


@dataclass(frozen=True)
class MaterialMap:
    """Conductivity and reluctivity per region name."""

    sigma_plate: float = 3.47e7
    nu: float = 1.0 / MU0

    def __post_init__(self):
        if self.sigma_plate < 0:
            raise ValueError("conductivity must be non-negative")
        if not self.nu > 0:
            raise ValueError("reluctivity must be positive")

    def sigma(self, regions: np.ndarray) -> np.ndarray:
        return np.where(regions == PLATE, self.sigma_plate, 0.0)

    def reluctivity(self, regions: np.ndarray) -> np.ndarray:
        return np.full(len(regions), self.nu)


@dataclass(frozen=True)
class SourceSpec:
    """Sinusoidal coil currents ``i(t) = amplitude * sin(2 pi f t)``.

    Turns and cross-section areas default to the coil geometry of the mesh.
    """

    amplitude: float = 20.0
    frequency: float = 50.0
    sign_inner: int = 1
    sign_outer: int = -1
    turns_inner: int | None = None
    turns_outer: int | None = None
    area_inner: float | None = None
    area_outer: float | None = None

    def __post_init__(self):
        if abs(self.sign_inner) != 1 or abs(self.sign_outer) != 1:
            raise ValueError("coil signs must be +1 or -1")
        for turns in (self.turns_inner, self.turns_outer):
            if turns is not None and turns <= 0:
                raise ValueError("turns must be positive")
        if self.frequency <= 0:
            raise ValueError("frequency must be positive")

    def current(self, t):
        return self.amplitude * np.sin(TWO_PI * self.frequency * t)

    def coil_data(self, region: int, geometry) -> tuple[float, float]:
        """Signed turns and cross-section area of a coil region."""
        if region == COIL_INNER:
            coil, sign, turns, area = geometry.coil_inner, self.sign_inner, self.turns_inner, self.area_inner
        elif region == COIL_OUTER:
            coil, sign, turns, area = geometry.coil_outer, self.sign_outer, self.turns_outer, self.area_outer
        else:
            return 0.0, 1.0
        return sign * (turns or coil.turns), area or coil.area


@dataclass(frozen=True)
class FieldSolution:
    x: np.ndarray
    mesh: Mesh
    t: float = 0.0

    def __post_init__(self):
        if len(self.x) != self.mesh.n_dofs:
            raise MeshMismatch(f"solution has {len(self.x)} entries, mesh has {self.mesh.n_dofs} dofs")


@dataclass
class AssembledSystem:
    """``A dx/dt + B x = C(t)`` on the free dofs of one mesh."""

    A: sp.csr_matrix
    B: sp.csr_matrix
    load: np.ndarray  # source vector per ampere of coil current
    source: SourceSpec
    dof_count: int = field(init=False)

    def __post_init__(self):
        self.dof_count = self.B.shape[0]

    def C(self, t: float) -> np.ndarray:
        return self.load * self.source.current(t)


@dataclass(frozen=True)
class ElementGeometry:
    area: np.ndarray  # (m,)
    grad: np.ndarray  # (m, 3, 2): d(phi_i)/d(r, z)
    inv_r: np.ndarray  # (m, 3): 1/r at the quadrature points


def element_geometry(mesh: Mesh, elements: np.ndarray | None = None) -> ElementGeometry:
    tris = mesh.triangles if elements is None else mesh.triangles[elements]
    p = mesh.nodes[tris]
    r, z = p[..., 0], p[..., 1]
    b = np.roll(z, -1, axis=1) - np.roll(z, -2, axis=1)
    c = np.roll(r, -2, axis=1) - np.roll(r, -1, axis=1)
    area = 0.5 * (b[:, 0] * c[:, 1] - b[:, 1] * c[:, 0])
    if len(area) and area.min() <= 0:
        bad = int(np.argmin(area))
        raise DegenerateElement(f"element {bad} has non-positive area {area[bad]:.3g}")
    grad = np.stack([b, c], axis=-1) / (2 * area[:, None, None])
    rq = r @ QUAD.T
    return ElementGeometry(area, grad, 1.0 / rq)


def _scatter(mesh: Mesh, tris: np.ndarray, ke: np.ndarray, constrained: bool):
    if constrained:
        idx = mesh.dof_map[tris]
        n = mesh.n_dofs
    else:
        idx = tris
        n = mesh.n_nodes
    rows = np.repeat(idx, 3, axis=1).ravel()
    cols = np.tile(idx, (1, 3)).ravel()
    data = ke.ravel()
    keep = (rows >= 0) & (cols >= 0)
    return sp.coo_matrix((data[keep], (rows[keep], cols[keep])), shape=(n, n)).tocsr()


def assemble_stiffness(mesh: Mesh, materials: MaterialMap, constrained: bool = True) -> sp.csr_matrix:
    geo = element_geometry(mesh)
    nu = materials.reluctivity(mesh.regions)
    weight = TWO_PI * nu * geo.area * geo.inv_r.mean(axis=1)
    ke = np.einsum("eid,ejd->eij", geo.grad, geo.grad) * weight[:, None, None]
    return _scatter(mesh, mesh.triangles, ke, constrained)


def element_mass(area, inv_r, sigma):
    """Elemental ``2*pi*sigma * int phi_i phi_j / r`` with the 3-point rule."""
    w = inv_r / 3.0
    ke = np.einsum("eq,qi,qj->eij", w, QUAD, QUAD)
    return ke * (TWO_PI * sigma * area)[:, None, None]


def assemble_mass(mesh: Mesh, materials: MaterialMap, constrained: bool = True) -> sp.csr_matrix:
    sigma = materials.sigma(mesh.regions)
    cond = np.flatnonzero(sigma > 0)
    geo = element_geometry(mesh, cond)
    ke = element_mass(geo.area, geo.inv_r, sigma[cond])
    return _scatter(mesh, mesh.triangles[cond], ke, constrained)


def source_density(mesh: Mesh, source: SourceSpec, geometry=None) -> np.ndarray:
    """Per-element current density (A/m^2) per ampere of coil current."""
    geometry = geometry or mesh.geometry
    out = np.zeros(len(mesh.triangles))
    for region in (COIL_INNER, COIL_OUTER):
        sel = mesh.regions == region
        if sel.any():
            turns, area = source.coil_data(region, geometry)
            out[sel] = turns / area
    return out


def assemble_load(mesh: Mesh, source: SourceSpec, constrained: bool = True) -> np.ndarray:
    """Source vector for a unit coil current."""
    js = source_density(mesh, source)
    coil = np.flatnonzero(js != 0)
    geo = element_geometry(mesh, coil)
    fe = np.repeat((TWO_PI * js[coil] * geo.area / 3.0)[:, None], 3, axis=1)
    out = np.zeros(mesh.n_nodes)
    np.add.at(out, mesh.triangles[coil], fe)
    if constrained:
        free = mesh.dof_map >= 0
        vec = np.zeros(mesh.n_dofs)
        vec[mesh.dof_map[free]] = out[free]
        return vec
    return out


def assemble_source(mesh: Mesh, source: SourceSpec, t: float, constrained: bool = True) -> np.ndarray:
    return assemble_load(mesh, source, constrained) * source.current(t)


def assemble_system(mesh: Mesh, materials: MaterialMap, source: SourceSpec) -> AssembledSystem:
    return AssembledSystem(assemble_mass(mesh, materials), assemble_stiffness(mesh, materials),
                           assemble_load(mesh, source), source)


def compute_lorentz_force(mesh: Mesh, x_k, x_km1, dt: float, materials: MaterialMap) -> float:
    """Vertical Lorentz force on the plate from two consecutive solutions.

    ``j_theta = -sigma * du/dt / r`` and ``b_r = -(1/r) du/dz`` give
    ``F_z = -int j_theta b_r dV = -2*pi * int sigma * (du/dt) * (du/dz) / r``,
    with ``du/dt`` the same backward difference as the time stepping.
    """
    for x in (x_k, x_km1):
        if isinstance(x, FieldSolution) and not x.mesh.same_layout(mesh):
            raise MeshMismatch("solutions live on a different dof layout")
    xk = x_k.x if isinstance(x_k, FieldSolution) else np.asarray(x_k, dtype=float)
    xp = x_km1.x if isinstance(x_km1, FieldSolution) else np.asarray(x_km1, dtype=float)
    if xk.shape != xp.shape or len(xk) != mesh.n_dofs:
        raise MeshMismatch("solution vectors do not match the mesh dofs")
    sigma = materials.sigma(mesh.regions)
    cond = np.flatnonzero(sigma > 0)
    if not len(cond):
        return 0.0
    geo = element_geometry(mesh, cond)
    tris = mesh.triangles[cond]
    u = mesh.to_nodal(xk)[tris]
    du = (u - mesh.to_nodal(xp)[tris]) / dt
    dudz = np.einsum("ei,ei->e", geo.grad[..., 1], u)
    dudt_over_r = np.einsum("qi,ei,eq->e", QUAD, du, geo.inv_r) / 3.0
    return float(-TWO_PI * np.sum(sigma[cond] * geo.area * dudz * dudt_over_r))


@dataclass(frozen=True)
class ElementFields:
    b_r: np.ndarray
    b_z: np.ndarray
    j: np.ndarray


def post_fields(solution: FieldSolution, previous: FieldSolution | None = None,
                dt: float | None = None, materials: MaterialMap | None = None) -> ElementFields:
    """Piecewise-constant flux density (at element centroids) and eddy-current density."""
    mesh = solution.mesh
    geo = element_geometry(mesh)
    u = mesh.to_nodal(solution.x)[mesh.triangles]
    rc = mesh.centroids()[:, 0]
    du_dr = np.einsum("ei,ei->e", geo.grad[..., 0], u)
    du_dz = np.einsum("ei,ei->e", geo.grad[..., 1], u)
    b_r = -du_dz / rc
    b_z = du_dr / rc
    j = np.zeros(len(rc))
    if previous is not None:
        if dt is None:
            raise ValueError("dt is required with a previous solution")
        materials = materials or MaterialMap()
        sigma = materials.sigma(mesh.regions)
        du = (u - mesh.to_nodal(previous.x)[mesh.triangles]).mean(axis=1) / dt
        j = np.abs(sigma * du / rc)
    return ElementFields(b_r, b_z, j)


def flux_density_at(mesh: Mesh, nodal: np.ndarray, points: np.ndarray, elements: np.ndarray) -> np.ndarray:
    """Pointwise ``(b_r, b_z)`` of the FE field inside the given elements."""
    geo = element_geometry(mesh, elements)
    u = nodal[mesh.triangles[elements]]
    du_dr = np.einsum("ei,ei->e", geo.grad[..., 0], u)
    du_dz = np.einsum("ei,ei->e", geo.grad[..., 1], u)
    r = points[:, 0]
    return np.column_stack([-du_dz / r, du_dr / r])


def axial_flux_density(mesh: Mesh, x, z: float, radius: float) -> float:
    """Mean axial flux density ``2 u(radius) / radius^2`` over a disk at height ``z``.

    This approximates the on-axis ``b_z`` up to ``O(radius^2)``.  The radius
    should span several element rings: next to the axis the linear elements
    cannot follow ``u ~ r^2`` and the first ring is off by tens of percent at
    any mesh size.
    """
    if not radius > 0:
        raise ValueError("radius must be positive")
    nodal = mesh.to_nodal(x.x if isinstance(x, FieldSolution) else x)
    elem, bary = locate_points(mesh, np.array([[radius, z]]))
    u = float(bary[0] @ nodal[mesh.triangles[elem[0]]])
    return 2.0 * u / radius**2


def export_triplets(matrix, path) -> None:
    """Write ``row col value`` lines (0-based)."""
    coo = sp.coo_matrix(matrix)
    with open(path, "w") as fh:
        for i, j, v in zip(coo.row.tolist(), coo.col.tolist(), coo.data.tolist()):
            fh.write(f"{i} {j} {v!r}\n")


__all__ = [
    "MU0", "REGIONS", "MaterialMap", "SourceSpec", "FieldSolution", "AssembledSystem",
    "assemble_stiffness", "assemble_mass", "assemble_source", "assemble_load", "assemble_system",
    "compute_lorentz_force", "post_fields", "flux_density_at", "axial_flux_density",
    "element_geometry", "export_triplets",
]
