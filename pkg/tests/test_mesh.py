import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from levipod.errors import DegenerateElement, InvalidGeometry, OutOfBounds, PointNotLocated
from levipod.mesh import (AXIS, BOX_AIR, BOX_BOUNDARY, COIL_INNER, COIL_OUTER, OUTER_DIRICHLET, PLATE,
                          DeformBox, Geometry, Mesh, deform_subdomain, generate_mesh, locate_points,
                          quality, read_mesh, remesh, structured_mesh, with_nodes, write_mesh)

BOX = DeformBox()
T = Geometry().plate_thickness
Y_LO = BOX.y_min + BOX.margin
Y_HI = BOX.y_max - BOX.margin - T
admissible_y = st.floats(min_value=Y_LO, max_value=Y_HI, allow_nan=False)


@pytest.fixture(scope="module")
def mesh():
    return generate_mesh(Geometry(), BOX, 0.006)


def test_unit_square_one_division():
    m = structured_mesh([0.0, 1.0], [0.0, 1.0])
    assert m.n_nodes == 4
    assert len(m.triangles) == 2
    np.testing.assert_allclose(m.signed_areas(), [0.5, 0.5])


def test_generation_is_deterministic(geometry):
    a = generate_mesh(geometry, BOX, 0.006)
    b = generate_mesh(geometry, BOX, 0.006)
    assert a == b
    assert np.array_equal(a.nodes, b.nodes) and np.array_equal(a.dof_map, b.dof_map)


def test_mesh_invariants(mesh):
    assert mesh.signed_areas().min() > 0
    assert mesh.nodes[:, 0].min() >= 0
    assert np.all(mesh.nodes[mesh.boundary == AXIS, 0] == 0)
    for region in (PLATE, COIL_INNER, COIL_OUTER, BOX_AIR):
        assert (mesh.regions == region).any()
    R = mesh.geometry.domain_truncation_radius
    outer = (mesh.nodes[:, 0] == R) | (np.abs(mesh.nodes[:, 1]) == R)
    assert np.all(mesh.boundary[outer] == OUTER_DIRICHLET)
    assert np.all(mesh.dof_map[outer] == -1)
    assert mesh.n_dofs == (mesh.dof_map >= 0).sum()


def test_region_areas_match_geometry(mesh):
    g = mesh.geometry
    area = mesh.signed_areas()
    assert area[mesh.regions == PLATE].sum() == pytest.approx(g.plate_radius * g.plate_thickness, rel=1e-12)
    assert area[mesh.regions == COIL_INNER].sum() == pytest.approx(g.coil_inner.area, rel=1e-12)
    assert area[mesh.regions == COIL_OUTER].sum() == pytest.approx(g.coil_outer.area, rel=1e-12)


def test_plate_region_is_connected(mesh):
    import scipy.sparse as sp
    from scipy.sparse.csgraph import connected_components

    tris = mesh.triangles[mesh.regions == PLATE]
    edges = np.vstack([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
    g = sp.coo_matrix((np.ones(len(edges)), (edges[:, 0], edges[:, 1])), shape=(mesh.n_nodes,) * 2)
    n, labels = connected_components(g, directed=False)
    assert len(np.unique(labels[np.unique(tris)])) == 1


@pytest.mark.parametrize("width,target", [(0.0975, 1921), (0.130, 1836), (0.195, 1780)])
def test_unknown_counts_reachable_by_density(geometry, width, target):
    # the same density serves all three boxes
    n = generate_mesh(geometry, DeformBox(x_extent=width), 0.00275).n_dofs
    assert abs(n - target) <= 0.15 * target


def test_deform_identity(mesh):
    out = deform_subdomain(mesh, BOX, BOX.reference_position)
    assert out == mesh


def test_deform_out_of_bounds(mesh):
    with pytest.raises(OutOfBounds):
        deform_subdomain(mesh, BOX, BOX.y_max + 1e-3)


def test_fig3_areas_below_expand_above_shrink(mesh):
    out = deform_subdomain(mesh, BOX, 20e-3)
    a0, a1 = mesh.signed_areas(), out.signed_areas()
    c = mesh.centroids()
    in_box = mesh.regions == BOX_AIR
    under = mesh.nodes[mesh.triangles, 0].max(axis=1) < BOX.x_extent
    below = in_box & under & (c[:, 1] < BOX.reference_position)
    above = in_box & under & (c[:, 1] > BOX.reference_position + T)
    assert below.any() and above.any()
    assert np.all(a1[below] > a0[below])
    assert np.all(a1[above] < a0[above])


@settings(max_examples=30, deadline=None)
@given(y=admissible_y)
def test_deform_properties(mesh, y):
    out = deform_subdomain(mesh, BOX, y)
    assert out.n_nodes == mesh.n_nodes and out.same_layout(mesh)
    assert quality(out).min_area > 0
    moved = out.nodes != mesh.nodes
    assert not moved[:, 0].any()  # vertical only
    outside = (mesh.nodes[:, 0] >= BOX.x_extent) | (mesh.nodes[:, 1] <= BOX.y_min) | \
              (mesh.nodes[:, 1] >= BOX.y_max)
    assert not moved[outside].any()
    fixed = (mesh.boundary == BOX_BOUNDARY) & (mesh.nodes[:, 0] > 0)
    assert not moved[fixed].any()
    plate = mesh.region_nodes(PLATE)
    np.testing.assert_allclose(out.nodes[plate, 1] - mesh.nodes[plate, 1],
                               y - BOX.reference_position, atol=1e-15)
    back = deform_subdomain(out, BOX, BOX.reference_position)
    assert np.array_equal(back.nodes, mesh.nodes)


def test_deform_to_extremes_keeps_positive_area(mesh):
    for y in (Y_LO, Y_HI):
        assert quality(deform_subdomain(mesh, BOX, y)).min_area > 0


def test_deform_rejects_degenerate_elements(mesh):
    with pytest.raises(DegenerateElement):
        deform_subdomain(mesh, BOX, 20e-3, area_floor=1.0)


def test_remesh_at_reference_matches_generate(geometry):
    a = generate_mesh(geometry, BOX, 0.006)
    b = remesh(geometry, BOX.reference_position, 0.006, box=BOX)
    assert a == b


def test_remesh_sweep_valid_with_varying_dofs(geometry):
    counts = set()
    for y in np.linspace(3.8e-3, 22.3e-3, 12):
        m = remesh(geometry, y, 0.006)
        assert m.signed_areas().min() > 0
        assert m.plate_position == y
        counts.add(m.n_dofs)
    assert len(counts) > 1


def test_remesh_below_coil_top(geometry):
    with pytest.raises(InvalidGeometry):
        remesh(geometry, -1e-3, 0.006)


def test_geometry_validation():
    with pytest.raises(InvalidGeometry):
        Geometry(plate_radius=-1.0)
    with pytest.raises(InvalidGeometry):
        DeformBox(y_min=0.02, reference_position=0.01)


def test_quality_equilateral():
    nodes = np.array([[1.0, 0.0], [2.0, 0.0], [1.5, np.sqrt(3) / 2]])
    m = Mesh(nodes, [[0, 1, 2]], [0], [0, 0, 0])
    q = quality(m)
    assert q.min_angle == pytest.approx(60.0)
    assert q.worst_aspect_ratio == pytest.approx(1.0)


def test_quality_flags_inverted_triangle():
    m = structured_mesh([0.0, 1.0, 2.0], [0.0, 1.0])
    nodes = m.nodes.copy()
    nodes[1] = [2.5, 0.5]  # pushes a node across its neighbours
    assert quality(with_nodes(m, nodes)).min_area < 0


def test_mesh_file_round_trip(tmp_path, mesh):
    path = tmp_path / "m.txt"
    write_mesh(mesh, path)
    head = path.read_text().splitlines()[0]
    assert head == f"nodes {mesh.n_nodes}"
    back = read_mesh(path)
    assert back == mesh
    assert np.array_equal(back.dof_map, mesh.dof_map)


def test_locate_points(mesh):
    c = mesh.centroids()[::37]
    elem, bary = locate_points(mesh, c)
    np.testing.assert_array_equal(elem, np.arange(len(mesh.triangles))[::37])
    np.testing.assert_allclose(bary, 1 / 3, atol=1e-9)
    with pytest.raises(PointNotLocated):
        locate_points(mesh, np.array([[1.0, 0.0]]))


def test_meshes_are_immutable(mesh):
    with pytest.raises(ValueError):
        mesh.nodes[0, 0] = 1.0
    with pytest.raises(dataclasses.FrozenInstanceError):
        BOX.y_min = 0.0
