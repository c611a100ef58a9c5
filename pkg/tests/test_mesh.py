import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from superfem.diagnostics import classify
from superfem.mesh import (
    PARALLELOGRAM,
    BudgetExceeded,
    Mesh,
    MeshError,
    generate_piecewise_uniform,
    generate_structured,
    load_mesh,
    refine_levels,
    save_mesh,
    uniform_refine,
)

from .conftest import SQ3, UNIT_SQUARE


def test_two_triangle_square(square2):
    m = square2
    assert m.n_edges == 5
    assert len(m.interior_edges) == 1
    e = int(m.interior_edges[0])
    assert tuple(m.edges[e]) == (0, 2)
    # K1 is the larger triangle index, normal points out of K1
    assert tuple(m.edge_triangles[e]) == (1, 0)
    np.testing.assert_allclose(m.edge_normals[e], [1 / math.sqrt(2), -1 / math.sqrt(2)])
    assert m.h_max == pytest.approx(math.sqrt(2))


def test_boundary_normals_point_outward(para4):
    m = para4
    c = m.vertices.mean(axis=0)
    be = m.boundary_edges
    out = np.einsum("ed,ed->e", m.edge_normals[be], m.edge_midpoints[be] - c)
    assert np.all(out > 0)


def test_edge_signs_consistent(para4):
    m = para4
    for k in range(m.n_triangles):
        for i in range(3):
            e = m.tri_edges[k, i]
            expected = 1 if m.edge_triangles[e, 0] == k else -1
            assert m.tri_edge_sign[k, i] == expected


def test_load_mesh_text(tmp_path):
    p = tmp_path / "sq.mesh"
    p.write_text("# unit square\nvertices 4\n0 0\n1 0\n1 1\n0 1\n"
                 "triangles 2\n0 1 2\n0 2 3\n")
    m = load_mesh(p)
    assert (m.n_vertices, m.n_triangles, m.n_edges) == (4, 2, 5)


def test_clockwise_triangle_rejected_or_fixed(tmp_path):
    p = tmp_path / "cw.mesh"
    p.write_text("vertices 4\n0 0\n1 0\n1 1\n0 1\ntriangles 2\n0 2 1\n0 2 3\n")
    with pytest.raises(MeshError, match="inverted triangle"):
        load_mesh(p)
    m = load_mesh(p, fix_orientation=True)
    assert np.all(m.areas > 0)


@pytest.mark.parametrize("text, msg", [
    ("vertices 2\n0 0\n", "parse error"),
    ("vertices 3\n0 0\n1 0\nx y\ntriangles 1\n0 1 2\n", "parse error"),
    ("vertices 4\n0 0\n1 0\n0 1\n0 0\ntriangles 2\n0 1 2\n3 1 2\n", "duplicate vertex"),
])
def test_load_mesh_errors(tmp_path, text, msg):
    p = tmp_path / "bad.mesh"
    p.write_text(text)
    with pytest.raises(MeshError, match=msg):
        load_mesh(p)


def test_hanging_node_rejected():
    # vertex 4 sits on the diagonal of the lower triangle only
    p = np.array([[0, 0], [1, 0], [1, 1], [0, 1], [0.5, 0.5]], float)
    t = np.array([[0, 1, 2], [0, 4, 3], [4, 2, 3]])
    with pytest.raises(MeshError, match="hanging"):
        Mesh(p, t)


def test_degenerate_triangle_rejected():
    p = np.array([[0, 0], [1, 0], [2, 0], [0, 1]], float)
    with pytest.raises(MeshError):
        Mesh(p, np.array([[0, 1, 2], [0, 2, 3]]))


def test_structured_counts():
    m = generate_structured(*UNIT_SQUARE, 1)
    assert (m.n_triangles, m.n_edges) == (2, 5)
    m = generate_structured(*PARALLELOGRAM, 4)
    assert m.n_triangles == 32
    assert m.areas.sum() == pytest.approx(2 * SQ3, rel=1e-14)


def test_structured_degenerate_spans():
    with pytest.raises(MeshError):
        generate_structured((0, 0), (1, 0), (2, 0), 3)


def test_structured_all_exact_parallelograms(para4):
    d = classify(para4)
    assert np.all(d.delta == 0.0)
    assert math.isinf(d.alpha_estimate) and math.isinf(d.sigma_estimate)
    assert d.kappa == 4


def test_refine_counts(square2):
    r = uniform_refine(square2)
    assert (r.n_triangles, r.n_edges) == (8, 16)
    np.testing.assert_array_equal(r.vertices[:4], square2.vertices)
    assert r.h_max == square2.h_max / 2
    assert r.parent is square2 and r.level == square2.level + 1


def test_refine_levels_and_budget(para4):
    ms = refine_levels(para4, 4)
    assert [m.n_triangles for m in ms] == [32 * 4**k for k in range(4)]
    with pytest.raises(BudgetExceeded):
        refine_levels(para4, 8, max_elements=32 * 4**6)


def test_refine_preserves_exact_parallelograms(para4):
    d = classify(uniform_refine(para4))
    assert np.all(d.delta == 0.0)


@settings(max_examples=15, deadline=None)
@given(n=st.integers(1, 6), refine=st.integers(0, 2), piecewise=st.booleans())
def test_euler_and_area(n, refine, piecewise):
    gen = generate_piecewise_uniform if piecewise and n > 1 else generate_structured
    m = gen(*PARALLELOGRAM, n)
    for _ in range(refine):
        m = uniform_refine(m)
    assert m.n_vertices - m.n_edges + m.n_triangles == 1
    assert m.areas.sum() == pytest.approx(m.boundary_loop_area(), rel=1e-12)
    # every side appears once in the edge table
    assert np.unique(m.tri_edges).size == m.n_edges


def test_normals_deterministic():
    a = generate_structured(*PARALLELOGRAM, 3)
    b = generate_structured(*PARALLELOGRAM, 3)
    np.testing.assert_array_equal(a.edge_normals, b.edge_normals)
    np.testing.assert_array_equal(a.edge_triangles, b.edge_triangles)


def test_save_load_roundtrip(tmp_path, piecewise4):
    p = tmp_path / "m.mesh"
    save_mesh(piecewise4, p)
    m = load_mesh(p)
    np.testing.assert_array_equal(m.vertices, piecewise4.vertices)
    np.testing.assert_array_equal(m.triangles, piecewise4.triangles)


@pytest.mark.parametrize("name", ["unit_square", "parallelogram_uniform",
                                  "parallelogram_piecewise", "delaunay_parallelogram",
                                  "delaunay_square"])
def test_shipped_meshes_load(name):
    from importlib import resources

    with resources.as_file(resources.files("superfem") / "data" / f"{name}.mesh") as p:
        m = load_mesh(p)
    assert m.areas.sum() == pytest.approx(m.boundary_loop_area(), rel=1e-12)
