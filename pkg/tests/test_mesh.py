import numpy as np
import pytest

from hencky.mesh import Mesh, MeshError, build_cover, gen_lshape, gen_rectangle, read_mesh, write_mesh


def u_shape(m=6):
    full = gen_rectangle([1.0, 1.0], m)
    c = full.centroids
    keep = ~((c[:, 0] > 1 / 3) & (c[:, 0] < 2 / 3) & (c[:, 1] > 1 / 3))
    cells = full.cells[keep]
    used = np.unique(cells)
    remap = -np.ones(full.nv, dtype=np.int64)
    remap[used] = np.arange(len(used))
    return Mesh.from_arrays(full.vertices[used], remap[cells])


@pytest.mark.parametrize("m", [1, 3, 8])
def test_rectangle_counts_and_volume(m):
    mesh = gen_rectangle([2.0, 1.0], m)
    assert mesh.nv == (m + 1) ** 2
    assert mesh.nc == 2 * m * m
    assert mesh.nf == 4 * m
    assert mesh.volumes.sum() == pytest.approx(2.0, rel=1e-14)
    assert np.all(mesh.volumes > 0)
    assert mesh.facet_measures.sum() == pytest.approx(6.0, rel=1e-14)


def test_cube_counts():
    mesh = gen_rectangle([1, 1, 1], 2)
    assert mesh.dim == 3
    assert mesh.nc == 6 * 8
    assert mesh.volumes.sum() == pytest.approx(1.0, rel=1e-14)
    assert mesh.facet_measures.sum() == pytest.approx(6.0, rel=1e-14)


def test_outward_normals():
    mesh = gen_rectangle([1.0, 1.0], 4)
    inward = mesh.facet_centroids - 1e-3 * mesh.normals
    outward = mesh.facet_centroids + 1e-3 * mesh.normals
    assert np.all(mesh.contains(inward))
    assert not np.any(mesh.contains(outward))
    np.testing.assert_allclose(np.linalg.norm(mesh.normals, axis=1), 1.0)


def test_gamma0_selection():
    mesh = gen_rectangle([1.0, 1.0], 4, gamma0="bottom")
    assert mesh.gamma0.sum() == 4
    np.testing.assert_allclose(mesh.facet_centroids[mesh.gamma0, 1], 0.0)
    assert gen_rectangle([1.0, 1.0], 4).gamma0.all()
    with pytest.raises(MeshError):
        gen_rectangle([1.0, 1.0], 4, gamma0="diagonal")


@pytest.mark.parametrize("args", [([0.0, 1.0], 4), ([1.0, 1.0], 0), ([1.0], 2)])
def test_rectangle_errors(args):
    with pytest.raises(MeshError):
        gen_rectangle(*args)


def test_lshape():
    mesh = gen_lshape(8)
    assert mesh.volumes.sum() == pytest.approx(0.75, rel=1e-14)
    assert mesh.facet_measures.sum() == pytest.approx(4.0, rel=1e-14)
    with pytest.raises(MeshError):
        gen_lshape(3)


def test_locate_and_distance():
    mesh = gen_rectangle([1.0, 1.0], 4)
    pts = np.array([[0.3, 0.2], [0.5, 0.5], [1.5, 0.5]])
    cell, bary = mesh.locate(pts)
    assert cell[0] >= 0 and cell[1] >= 0 and cell[2] == -1
    np.testing.assert_allclose(bary[:2].sum(axis=1), 1.0)
    np.testing.assert_allclose(np.einsum("pk,pki->pi", bary[:2], mesh.vertices[mesh.cells[cell[:2]]]), pts[:2])
    np.testing.assert_allclose(mesh.boundary_distance(pts[:2]), [0.2, 0.5])
    with pytest.raises(MeshError):
        mesh.boundary_distance(pts)


def test_refine_is_nested():
    mesh = gen_rectangle([1.0, 1.0], 3)
    fine = mesh.refine()
    assert fine.nc == 4 * mesh.nc
    assert fine.volumes.sum() == pytest.approx(1.0, rel=1e-14)
    assert fine.gamma0.sum() == 2 * mesh.gamma0.sum()
    np.testing.assert_allclose(fine.h.max(), mesh.h.max() / 2)


def test_write_read_round_trip(tmp_path):
    mesh = gen_rectangle([1.0, 2.0], 3, gamma0="left,top")
    path = tmp_path / "mesh.txt"
    write_mesh(mesh, path)
    back = read_mesh(path)
    assert back.checksum() == mesh.checksum()
    np.testing.assert_array_equal(back.gamma0, mesh.gamma0)


@pytest.mark.parametrize("maker,center,k0", [
    (lambda: gen_rectangle([1.0, 1.0], 8), (0.5, 0.5), 3),
    (lambda: gen_lshape(8), (0.375, 0.375), 5),
    (lambda: gen_rectangle([2.0, 1.0], 8), (1.0, 0.5), 2),
])
def test_star_cover(maker, center, k0):
    mesh = maker()
    cover = build_cover(mesh)
    assert cover.style == "star"
    np.testing.assert_allclose(cover.star.center, center, atol=1e-9)
    assert cover.k0 == k0
    pts = mesh.centroids
    w = cover.weights(pts)
    np.testing.assert_allclose(w.sum(axis=1), 1.0, atol=1e-13)
    assert np.all(w >= 0)
    for k in (k0, 4 * k0, 64):
        assert cover.translation_depth(k) > 0


def test_cover_directions_point_inward():
    mesh = gen_rectangle([1.0, 1.0], 4)
    cover = build_cover(mesh)
    for p in cover.patches[1:]:
        assert mesh.contains(p.vertex + 1e-3 * p.direction)[0]


def test_non_star_domain():
    mesh = u_shape()
    with pytest.raises(MeshError):
        build_cover(mesh, style="star")
