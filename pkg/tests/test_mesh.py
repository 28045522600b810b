import numpy as np
import pytest

from dtnlab.mesh import Region, TriangleMesh, boundary_distance, generate, refine


def test_square_counts():
    mesh = generate(Region.UNIT_SQUARE, 2)
    assert mesh.n_vertices == 9
    assert mesh.n_triangles == 8
    for n in (3, 5, 8):
        m = generate("UnitSquare", n)
        assert m.n_vertices == (n + 1) ** 2
        assert m.n_triangles == 2 * n * n


def test_disk_boundary_on_circle():
    mesh = generate(Region.UNIT_DISK, 16)
    r = np.linalg.norm(mesh.vertices[mesh.boundary_nodes], axis=1)
    assert np.max(np.abs(r - 1.0)) <= 1e-12


@pytest.mark.parametrize("region", [Region.UNIT_SQUARE, Region.UNIT_DISK])
def test_positive_areas_and_euler(region):
    mesh = generate(region, 6)
    assert np.all(mesh.signed_areas > 0)
    V, E, F = mesh.n_vertices, len(mesh.edges), mesh.n_triangles
    assert V - E + F == 1


def test_area_sums():
    assert np.sum(generate(Region.UNIT_SQUARE, 7).areas) == pytest.approx(1.0, abs=1e-14)
    assert abs(np.sum(generate(Region.UNIT_DISK, 32).areas) - np.pi) <= 1e-3


@pytest.mark.parametrize("region", [Region.UNIT_SQUARE, Region.UNIT_DISK])
def test_normals_unit_and_outward(region):
    mesh = generate(region, 8)
    n = mesh.boundary_normals
    assert np.allclose(np.linalg.norm(n, axis=1), 1.0, atol=1e-12)
    be = mesh.boundary_edges
    mid = 0.5 * (mesh.vertices[be[:, 0]] + mesh.vertices[be[:, 1]])
    assert np.all(np.sum(n * (mid - mesh.centroid), axis=1) > 0)


def test_boundary_loop_closed():
    mesh = generate(Region.UNIT_DISK, 5)
    be = mesh.boundary_edges
    assert np.array_equal(be[:, 1], np.roll(be[:, 0], -1))


def test_refine_counts_and_nesting():
    mesh = generate(Region.UNIT_SQUARE, 2)
    fine = refine(mesh)
    assert fine.n_triangles == 32
    assert np.array_equal(fine.vertices[: mesh.n_vertices], mesh.vertices)


def test_refine_disk_projection_and_diameter():
    mesh = generate(Region.UNIT_DISK, 4)
    h = [mesh.max_diameter]
    fine = mesh
    for _ in range(3):
        fine = refine(fine)
        h.append(fine.max_diameter)
    r = np.linalg.norm(fine.vertices[fine.boundary_nodes], axis=1)
    assert np.max(np.abs(r - 1.0)) <= 1e-12
    # boundary midpoints move outward onto the circle, so each step shrinks
    # the diameter by slightly less than one half; the excess decays with h
    ratios = np.diff(np.log(h))
    assert np.all(np.exp(ratios) < 0.52)
    assert np.all(np.diff(ratios) < 0)
    assert h[-1] * 2 ** 3 <= 1.07 * h[0]


def test_refine_square_halves_diameter():
    mesh = generate(Region.UNIT_SQUARE, 3)
    assert refine(refine(mesh)).max_diameter <= mesh.max_diameter / 4 + 1e-14


def test_rejects_small_resolution():
    with pytest.raises(ValueError):
        generate(Region.UNIT_SQUARE, 1)
    with pytest.raises(ValueError):
        generate(Region.UNIT_DISK, 2.5)


def test_boundary_distance_examples():
    assert boundary_distance(Region.UNIT_DISK, (2.0, 0.0)) == pytest.approx(1.0)
    assert boundary_distance(Region.UNIT_DISK, (0.0, 0.0)) == pytest.approx(-1.0)
    assert boundary_distance(Region.UNIT_SQUARE, (0.5, 1.25)) == pytest.approx(0.25)
    assert boundary_distance(generate("UnitSquare", 2), (0.5, 0.0)) == 0.0


def test_json_roundtrip(tmp_path):
    mesh = generate(Region.UNIT_DISK, 3)
    path = tmp_path / "mesh.json"
    mesh.save(path)
    back = TriangleMesh.load(path)
    assert back.region is Region.UNIT_DISK
    assert np.array_equal(back.vertices, mesh.vertices)
    assert np.array_equal(back.triangles, mesh.triangles)
    assert np.array_equal(back.boundary_edges, mesh.boundary_edges)


def test_rejects_clockwise_triangle():
    mesh = generate(Region.UNIT_SQUARE, 2)
    tris = mesh.triangles.copy()
    tris[0] = tris[0, ::-1]
    with pytest.raises(ValueError):
        TriangleMesh(mesh.vertices, tris, mesh.boundary_edges, mesh.region)
