import numpy as np
import pytest

from superfem.dofs import ElementKind
from superfem.elements import PiecewiseField
from superfem.interpolation import interp_cr, interp_morley, interp_rt
from superfem.mesh import PARALLELOGRAM, Mesh, generate_structured
from superfem.postprocess import (
    HypothesisError,
    boundary_stencil,
    divdiv_residual,
    gradient_field,
    helmholtz_recover_hhj,
    helmholtz_recover_rt,
    hessian_field,
    kh_recover,
    rotated_strain,
)

from .conftest import UNIT_SQUARE, random_mesh

CENTROID = np.full((1, 3), 1 / 3)


def p0(mesh, values):
    return PiecewiseField(mesh, ElementKind.P0, np.asarray(values, float))


def test_interior_average(square2):
    q = p0(square2, [[1.0, 0.0], [3.0, 0.0]])
    r = kh_recover(square2, q)
    e = int(square2.interior_edges[0])
    np.testing.assert_array_equal(r.coeffs[e], [2.0, 0.0])


def test_boundary_extrapolation_rule():
    m = generate_structured(*PARALLELOGRAM, 3)
    rng = np.random.default_rng(0)
    q = p0(m, rng.normal(size=(m.n_triangles, 2)))
    r = kh_recover(m, q).coeffs
    be, ep, Kp, epp = boundary_stencil(m)
    for e, e1, k1, e2 in zip(be, ep, Kp, epp):
        assert not m.boundary_edges[e1]
        assert k1 in m.edge_triangles[e1]
        assert not set(m.edges[e2]) & set(m.edges[e])
        # e'' interior: recovered value; on the boundary: one-sided value from K'
        v2 = r[e2] if not m.boundary_edges[e2] else q.coeffs[k1]
        np.testing.assert_allclose(r[e], 2 * r[e1] - v2, atol=1e-14)


def test_boundary_rule_numbers():
    """K_h q(m') = 2 and K_h q(m'') = 1 give K_h q(m) = 3."""
    m = generate_structured(*UNIT_SQUARE, 3)
    be, ep, Kp, epp = boundary_stencil(m)
    i = int(np.flatnonzero(~m.boundary_edges[epp])[0])
    # q = 2 on K and K', 0 across e'' so that K_h q(m') = 2 and K_h q(m'') = 1
    vals = np.zeros((m.n_triangles, 1))
    k_e = m.edge_triangles[be[i], 0]
    k_p = Kp[i]
    others = [k for k in m.edge_triangles[epp[i]] if k != k_p]
    vals[[k_e, k_p]] = 2.0
    vals[others] = 0.0
    r = kh_recover(m, p0(m, vals)).coeffs
    assert r[ep[i], 0] == 2.0 and r[epp[i], 0] == 1.0
    assert r[be[i], 0] == 3.0


def test_constants_reproduced():
    m = random_mesh(2, 4)
    c = np.array([[1.5, -0.5], [-0.5, 2.0]])
    r = kh_recover(m, p0(m, np.broadcast_to(c, (m.n_triangles, 2, 2))))
    np.testing.assert_allclose(r.coeffs, np.broadcast_to(c, (m.n_edges, 2, 2)), atol=1e-14)


def test_rt_interpolant_of_affine_gradient():
    m = generate_structured(*UNIT_SQUARE, 4)
    g = np.array([0.3, -1.2])
    q = interp_rt(m, lambda x, y: np.broadcast_to(g, np.shape(x) + (2,)))
    r = kh_recover(m, q)
    np.testing.assert_allclose(r.coeffs, np.broadcast_to(g, (m.n_edges, 2)), atol=1e-13)


def test_hessian_recovery_symmetric():
    m = random_mesh(3, 4)
    rng = np.random.default_rng(1)
    u = PiecewiseField(m, ElementKind.MORLEY, rng.normal(size=m.n_vertices + m.n_edges))
    H = hessian_field(u)
    r = kh_recover(m, H)
    np.testing.assert_allclose(r.coeffs, np.swapaxes(r.coeffs, 1, 2), atol=1e-13)
    vals = r.values(np.array([[0.2, 0.3, 0.5]]))
    np.testing.assert_allclose(vals, np.swapaxes(vals, -1, -2), atol=1e-13)


def test_gradient_field_kinds():
    m = random_mesh(4, 3)
    u = interp_cr(m, lambda x, y: 2 * x - y)
    np.testing.assert_allclose(gradient_field(u).coeffs, np.broadcast_to([2, -1], (m.n_triangles, 2)),
                               atol=1e-12)
    with pytest.raises(ValueError):
        gradient_field(interp_morley(m, lambda x, y: x, lambda x, y: np.stack(
            [np.ones_like(x), 0 * y], -1)))


def test_single_element_refused():
    m = Mesh(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), np.array([[0, 1, 2]]))
    with pytest.raises(ValueError):
        kh_recover(m, p0(m, [[1.0, 0.0]]))


# Helmholtz recoveries -----------------------------------------------------

def _curl_of_p1(mesh, w):
    g = PiecewiseField(mesh, ElementKind.P1C, w).gradients(CENTROID)[:, 0]
    curl = np.stack([g[:, 1], -g[:, 0]], axis=1)
    k1 = mesh.edge_triangles[:, 0]
    return PiecewiseField(mesh, ElementKind.RT0,
                          np.einsum("ed,ed->e", curl[k1], mesh.edge_normals))


def test_helmholtz_rt_hat():
    m = random_mesh(5, 5)
    z = int(np.flatnonzero(~m.boundary_vertices)[3])
    hat = np.zeros(m.n_vertices)
    hat[z] = 1.0
    w, res = helmholtz_recover_rt(m, _curl_of_p1(m, hat))
    assert res <= 1e-12
    np.testing.assert_allclose(w.coeffs - w.coeffs[0], hat - hat[0], atol=1e-12)


def test_helmholtz_rt_detects_divergence():
    m = random_mesh(5, 5)
    tau = _curl_of_p1(m, np.random.default_rng(0).normal(size=m.n_vertices))
    _, res = helmholtz_recover_rt(m, tau)
    assert res <= 1e-12
    c = tau.coeffs.copy()
    c[int(m.interior_edges[4])] += 1e-3
    _, res = helmholtz_recover_rt(m, PiecewiseField(m, ElementKind.RT0, c))
    assert res > 1e-6


def _hhj_from_mats(mesh, mats):
    n = mesh.edge_normals
    k1 = mesh.edge_triangles[:, 0]
    return PiecewiseField(mesh, ElementKind.HHJ0, np.einsum("ea,eab,eb->e", n, mats[k1], n))


def test_helmholtz_hhj_exact_preimage():
    m = random_mesh(6, 5)
    phi = np.random.default_rng(2).normal(size=(m.n_vertices, 2))
    mats = rotated_strain(m, phi)
    rec, res = helmholtz_recover_hhj(m, p0(m, mats))
    assert res <= 1e-11
    np.testing.assert_allclose(rotated_strain(m, rec), mats, atol=1e-10)
    tau = _hhj_from_mats(m, mats)
    np.testing.assert_allclose(tau.values(CENTROID)[:, 0], mats, atol=1e-12)
    assert divdiv_residual(m, tau)[0] <= 1e-12
    _, res = helmholtz_recover_hhj(m, tau)
    assert res <= 1e-11


def test_helmholtz_hhj_gauge_deterministic():
    m = random_mesh(6, 4)
    phi = np.random.default_rng(3).normal(size=(m.n_vertices, 2))
    tau = p0(m, rotated_strain(m, phi))
    a, _ = helmholtz_recover_hhj(m, tau)
    b, _ = helmholtz_recover_hhj(m, tau)
    np.testing.assert_array_equal(a, b)


def test_helmholtz_hhj_refuses_single_basis_function():
    m = random_mesh(7, 4)
    c = np.zeros(m.n_edges)
    c[int(m.interior_edges[0])] = 1.0
    tau = PiecewiseField(m, ElementKind.HHJ0, c)
    assert divdiv_residual(m, tau)[0] > 1e-3
    with pytest.raises(HypothesisError):
        helmholtz_recover_hhj(m, tau)
