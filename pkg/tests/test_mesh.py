import numpy as np
import pytest

from momtop.mesh import (
    Mesh,
    PlateSpec,
    build_mesh,
    central_gap_dof,
    load_mesh,
    save_mesh,
)


def test_minimal_grid_counts():
    m = build_mesh(PlateSpec(1, 1, 1, 1, 0.5))
    assert m.n_triangles == 2
    assert m.n_dof == 1


def test_paper_grid_dof_count():
    m = build_mesh(PlateSpec(1, 2, 5, 25, 0.5))
    assert m.n_dof == 345


def brute_force_interior_edges(triangles) -> int:
    seen = {}
    for tri in triangles:
        for a, b in ((0, 1), (1, 2), (2, 0)):
            key = tuple(sorted((tri[a], tri[b])))
            seen[key] = seen.get(key, 0) + 1
    return sum(1 for v in seen.values() if v == 2)


def test_2x1_grid_against_edge_adjacency_oracle():
    m = build_mesh(PlateSpec(1, 1, 2, 1, 0.5))
    assert m.n_triangles == 4
    assert m.n_dof == brute_force_interior_edges(m.triangles)


def test_every_interior_edge_shared_by_two_triangles():
    m = build_mesh(PlateSpec(1, 2, 3, 4, 0.5))
    for n in range(m.n_dof):
        tp, tm = m.edge_tris[n]
        assert tp != tm
        e = set(m.edges[n])
        assert e < set(m.triangles[tp])
        assert e < set(m.triangles[tm])


def test_dof_ordering_deterministic_and_sorted():
    m1 = build_mesh(PlateSpec(1, 2, 4, 5, 0.5))
    m2 = build_mesh(PlateSpec(1, 2, 4, 5, 0.5))
    assert np.array_equal(m1.edges, m2.edges)
    keys = [tuple(e) for e in m1.edges]
    assert keys == sorted(keys)


def test_triangle_areas_positive():
    m = build_mesh(PlateSpec(0.3, 2.7, 2, 9, 0.4))
    assert np.all(m.triangle_areas() > 0)


def test_degenerate_plate_rejected():
    with pytest.raises(ValueError):
        PlateSpec(0.0, 1.0, 1, 1, 0.5)
    with pytest.raises(ValueError):
        PlateSpec(1.0, 1.0, 0, 1, 0.5)
    with pytest.raises(ValueError):
        PlateSpec(1.0, 1.0, 1, 1, -0.5)


def test_wavenumber_from_electrical_size():
    spec = PlateSpec(1, 2, 5, 25, 0.5)
    assert spec.radius == pytest.approx(np.sqrt(5) / 2)
    assert spec.wavenumber * spec.radius == pytest.approx(0.5)


def test_mesh_file_roundtrip(tmp_path):
    m = build_mesh(PlateSpec(1, 2, 2, 3, 0.5))
    gap = central_gap_dof(m)
    path = tmp_path / "plate.mesh"
    save_mesh(m, path, fixed=[gap], gap=gap)
    m2, fixed, gap2 = load_mesh(path)
    assert np.allclose(m2.vertices, m.vertices)
    assert np.array_equal(m2.triangles, m.triangles)
    assert np.array_equal(m2.edges, m.edges)
    assert fixed == [gap] and gap2 == gap


def test_central_gap_is_horizontal_and_central():
    m = build_mesh(PlateSpec(1, 2, 5, 25, 0.5))
    gap = central_gap_dof(m)
    v0, v1 = m.vertices[m.edges[gap]]
    assert v0[1] == pytest.approx(v1[1])  # constant y: current crosses along y
    mid = 0.5 * (v0 + v1)
    assert abs(mid[0]) < 0.2 and abs(mid[1]) < 0.2
