import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pnp_twogrid.mesh import build_unit_cube_mesh, locate_point, prolongate, write_mesh


@pytest.mark.parametrize(
    "n, nodes, tets, boundary, interior",
    [(1, 8, 6, 8, 0), (2, 27, 48, 26, 1), (3, 64, 162, 56, 8), (4, 125, 384, 98, 27)],
)
def test_counts(n, nodes, tets, boundary, interior):
    m = build_unit_cube_mesh(n)
    assert m.num_nodes == nodes == (n + 1) ** 3
    assert m.num_tets == tets == 6 * n**3
    assert m.boundary_mask.sum() == boundary
    assert m.num_interior == interior == (n - 1) ** 3


def test_center_node_is_only_interior_node_at_n2():
    m = build_unit_cube_mesh(2)
    (idx,) = m.interior_nodes
    np.testing.assert_array_equal(m.nodes[idx], [0.5, 0.5, 0.5])
    assert m.interior_index[idx] == 0


@pytest.mark.parametrize("n", [1, 2, 3, 4, 7])
def test_volumes_positive_and_partition_cube(n):
    m = build_unit_cube_mesh(n)
    assert m.volumes.min() > 0
    assert abs(m.volumes.sum() - 1.0) < 1e-12
    np.testing.assert_allclose(m.volumes, 1.0 / (6 * n**3), rtol=1e-12)


@pytest.mark.parametrize("n", [1, 3, 5])
def test_boundary_mask_matches_coordinates(n):
    m = build_unit_cube_mesh(n)
    expected = np.any((m.nodes == 0.0) | (m.nodes == 1.0), axis=1)
    np.testing.assert_array_equal(m.boundary_mask, expected)
    assert np.all(m.interior_index[m.boundary_mask] == -1)


@pytest.mark.parametrize("bad", [0, -1, 2.5])
def test_rejects_bad_resolution(bad):
    with pytest.raises(ValueError):
        build_unit_cube_mesh(bad)


def test_locate_vertex_query():
    m = build_unit_cube_mesh(1)
    tet, lam = locate_point(m, (0.0, 0.0, 0.0))
    assert np.isclose(lam.max(), 1.0, atol=1e-15)
    assert m.tets[tet][np.argmax(lam)] == 0


def test_locate_center_of_n2():
    m = build_unit_cube_mesh(2)
    tet, lam = locate_point(m, (0.5, 0.5, 0.5))
    center = m.interior_nodes[0]
    k = list(m.tets[tet]).index(center)
    assert lam[k] == pytest.approx(1.0, abs=1e-12)


def test_locate_reproduces_linear_function():
    m = build_unit_cube_mesh(2)
    rng = np.random.default_rng(1)
    pts = rng.random((1000, 3))
    f = m.interpolate(lambda x, y, z: x + 2 * y + 3 * z)
    np.testing.assert_allclose(f.evaluate(pts), pts @ [1.0, 2.0, 3.0], atol=1e-12)


def test_locate_rejects_outside():
    m = build_unit_cube_mesh(2)
    with pytest.raises(ValueError):
        locate_point(m, (1.0 + 1e-9, 0.5, 0.5))
    with pytest.raises(ValueError):
        locate_point(m, (-0.1, 0.5, 0.5))


def test_locate_accepts_faces_and_corners():
    m = build_unit_cube_mesh(3)
    pts = np.array([[1.0, 1.0, 1.0], [1.0, 0.0, 0.5], [1 / 3, 2 / 3, 0.0], [0.5, 0.5, 1.0]])
    tet, lam = locate_point(m, pts)
    assert np.all(lam >= -1e-12)
    np.testing.assert_allclose(lam.sum(axis=1), 1.0, atol=1e-12)
    recon = np.einsum("mk,mkd->md", lam, m.nodes[m.tets[tet]])
    np.testing.assert_allclose(recon, pts, atol=1e-12)


@settings(max_examples=200, deadline=None)
@given(
    n=st.integers(1, 6),
    p=st.tuples(*(st.floats(0.0, 1.0) for _ in range(3))),
)
def test_barycentric_partition_of_unity(n, p):
    m = build_unit_cube_mesh(n)
    tet, lam = locate_point(m, p)
    assert lam.min() >= -1e-12
    assert abs(lam.sum() - 1.0) <= 1e-12
    np.testing.assert_allclose(lam @ m.nodes[m.tets[tet]], p, atol=1e-12)


def test_nested_fine_tets_inside_coarse_tets():
    coarse, fine = build_unit_cube_mesh(2), build_unit_cube_mesh(4)
    centroids = fine.nodes[fine.tets].mean(axis=1)
    owner, _ = locate_point(coarse, centroids)
    # every vertex of the fine tet has nonnegative barycentrics in the owner
    verts = coarse.nodes[coarse.tets[owner]]  # (T, 4, 3)
    mats = np.concatenate([np.ones((fine.num_tets, 1, 4)), np.transpose(verts, (0, 2, 1))], axis=1)
    for k in range(4):
        rhs = np.concatenate([np.ones((fine.num_tets, 1)), fine.nodes[fine.tets[:, k]]], axis=1)
        lam = np.linalg.solve(mats, rhs[..., None])[..., 0]
        assert lam.min() >= -1e-12
    assert fine.num_tets == 6 * 4**3


def test_prolongate_zero_and_linear():
    coarse, fine = build_unit_cube_mesh(2), build_unit_cube_mesh(4)
    assert np.all(prolongate(coarse.zeros(), fine).values == 0.0)
    g = coarse.interpolate(lambda x, y, z: x)
    np.testing.assert_array_equal(prolongate(g, fine).values, fine.nodes[:, 0])


def test_prolongate_pointwise_identity():
    rng = np.random.default_rng(7)
    coarse, fine = build_unit_cube_mesh(2), build_unit_cube_mesh(8)
    u = coarse.field(rng.standard_normal(coarse.num_nodes))
    pts = rng.uniform(0.01, 0.99, size=(500, 3))
    np.testing.assert_allclose(prolongate(u, fine).evaluate(pts), u.evaluate(pts), atol=1e-12)


def test_prolongate_rejects_non_nested():
    with pytest.raises(ValueError):
        prolongate(build_unit_cube_mesh(3).zeros(), build_unit_cube_mesh(4))


@settings(max_examples=25, deadline=None)
@given(
    a=st.floats(-10, 10),
    b=st.floats(-10, 10),
    seed=st.integers(0, 2**32 - 1),
)
def test_prolongate_is_linear(a, b, seed):
    rng = np.random.default_rng(seed)
    coarse, fine = build_unit_cube_mesh(2), build_unit_cube_mesh(4)
    u = coarse.field(rng.standard_normal(coarse.num_nodes))
    v = coarse.field(rng.standard_normal(coarse.num_nodes))
    lhs = prolongate(a * u + b * v, fine).values
    rhs = a * prolongate(u, fine).values + b * prolongate(v, fine).values
    np.testing.assert_allclose(lhs, rhs, atol=1e-12 * (1 + abs(a) + abs(b)) * 10)


def test_prolongate_composes_across_levels():
    rng = np.random.default_rng(3)
    m1, m2, m4 = (build_unit_cube_mesh(n) for n in (2, 4, 8))
    u = m1.field(rng.standard_normal(m1.num_nodes))
    two_step = prolongate(prolongate(u, m2), m4)
    np.testing.assert_allclose(two_step.values, prolongate(u, m4).values, atol=1e-12)


def test_field_mesh_mismatch():
    a, b = build_unit_cube_mesh(2), build_unit_cube_mesh(2)
    with pytest.raises(ValueError):
        a.zeros() + b.zeros()
    with pytest.raises(ValueError):
        a.field(np.zeros(5))


def test_write_mesh(tmp_path):
    m = build_unit_cube_mesh(1)
    path = tmp_path / "mesh.txt"
    write_mesh(m, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "8 6"
    assert len(lines) == 1 + 8 + 6
