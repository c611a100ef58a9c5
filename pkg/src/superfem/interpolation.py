"""Canonical interpolation operators onto the discrete spaces."""

from __future__ import annotations

import numpy as np

from .dofs import ElementKind
from .elements import PiecewiseField, mesh_geometry
from .quadrature import DEFAULT_EDGE_DEGREE, edge_rule

__all__ = ["edge_points", "interp_rt", "interp_hhj", "interp_pd", "interp_cr",
           "interp_morley", "interp_p1", "rt_local_interpolant", "hhj_local_interpolant"]


def edge_points(mesh, degree=DEFAULT_EDGE_DEGREE):
    """Quadrature points on every edge (E, nq, 2) and weights (nq,)."""
    rule = edge_rule(degree)
    a = mesh.vertices[mesh.edges[:, 0]]
    b = mesh.vertices[mesh.edges[:, 1]]
    pts = a[:, None] + rule.points[None, :, None] * (b - a)[:, None]
    return pts, rule.weights


def interp_rt(mesh, sigma, degree=DEFAULT_EDGE_DEGREE):
    """Fortin interpolant: preserves the mean normal flux on every edge."""
    pts, w = edge_points(mesh, degree)
    s = np.asarray(sigma(pts[..., 0], pts[..., 1]), dtype=float)
    dofs = np.einsum("q,eqd,ed->e", w, s, mesh.edge_normals)
    return PiecewiseField(mesh, ElementKind.RT0, dofs)


def interp_hhj(mesh, tau, degree=DEFAULT_EDGE_DEGREE):
    """Preserves the mean of ``n_e^T tau n_e`` on every edge."""
    pts, w = edge_points(mesh, degree)
    t = np.asarray(tau(pts[..., 0], pts[..., 1]), dtype=float)
    n = mesh.edge_normals
    dofs = np.einsum("q,ea,eqab,eb->e", w, n, t, n)
    return PiecewiseField(mesh, ElementKind.HHJ0, dofs)


def interp_pd(mesh, v):
    """Vertex interpolation into continuous P1 vanishing on the boundary.

    ``v`` is a Morley :class:`PiecewiseField` (its vertex dofs are used
    directly) or a callable ``v(x, y)``.
    """
    if isinstance(v, PiecewiseField):
        if v.kind is not ElementKind.MORLEY:
            raise ValueError("interp_pd expects a Morley field or a callable")
        vals = np.array(v.coeffs[:mesh.n_vertices], dtype=float)
    else:
        vals = np.asarray(v(mesh.vertices[:, 0], mesh.vertices[:, 1]), dtype=float).copy()
    vals[mesh.boundary_vertices] = 0.0
    return PiecewiseField(mesh, ElementKind.P1C0, vals)


def interp_p1(mesh, v):
    vals = np.asarray(v(mesh.vertices[:, 0], mesh.vertices[:, 1]), dtype=float)
    return PiecewiseField(mesh, ElementKind.P1C, vals)


def interp_cr(mesh, v, degree=DEFAULT_EDGE_DEGREE):
    """Edge-mean interpolation into CR (trailing value axes allowed)."""
    pts, w = edge_points(mesh, degree)
    vals = np.asarray(v(pts[..., 0], pts[..., 1]), dtype=float)
    return PiecewiseField(mesh, ElementKind.CR, np.einsum("q,eq...->e...", w, vals))


def interp_morley(mesh, u, grad, degree=DEFAULT_EDGE_DEGREE):
    """Morley interpolant from vertex values and edge-mean normal derivatives."""
    pts, w = edge_points(mesh, degree)
    g = np.asarray(grad(pts[..., 0], pts[..., 1]), dtype=float)
    dn = np.einsum("q,eqd,ed->e", w, g, mesh.edge_normals)
    vals = np.asarray(u(mesh.vertices[:, 0], mesh.vertices[:, 1]), dtype=float)
    return PiecewiseField(mesh, ElementKind.MORLEY, np.concatenate([vals, dn]))


# ----------------------------------------------------------------------
# Single-triangle interpolants (used for patch identities on isolated pairs)

def _local_edges(X, degree):
    from .elements import TriangleGeometry

    geom = TriangleGeometry(np.asarray(X, float)[None])
    rule = edge_rule(degree)
    a = X[[1, 2, 0]]
    b = X[[2, 0, 1]]
    pts = a[:, None] + rule.points[None, :, None] * (b - a)[:, None]
    return geom, pts, rule.weights


def rt_local_interpolant(X, sigma, degree=DEFAULT_EDGE_DEGREE):
    """Fortin interpolant on one triangle with outward normals.

    Returns ``(coeffs, geom)``; the interpolant is
    ``sum_i coeffs[i] (x - p_i) / d_i``.
    """
    X = np.asarray(X, float)
    geom, pts, w = _local_edges(X, degree)
    s = np.asarray(sigma(pts[..., 0], pts[..., 1]), float)
    c = np.einsum("q,iqd,id->i", w, s, geom.normals[0])
    return c, geom


def hhj_local_interpolant(X, tau, degree=DEFAULT_EDGE_DEGREE):
    """HHJ interpolant on one triangle as a constant 2x2 matrix."""
    from .elements import hhj_basis

    X = np.asarray(X, float)
    geom, pts, w = _local_edges(X, degree)
    t = np.asarray(tau(pts[..., 0], pts[..., 1]), float)
    n = geom.normals[0]
    c = np.einsum("q,ia,iqab,ib->i", w, n, t, n)
    return np.einsum("i,iab->ab", c, hhj_basis(geom)[0])


def rt_local_mean(X, coeffs):
    """``int_K`` of the local RT0 function with outward-normal coefficients."""
    from .elements import TriangleGeometry

    geom = TriangleGeometry(np.asarray(X, float)[None])
    # int_K (x - p_i) dx = |K| (centroid - p_i)
    diff = geom.centroids[0][None] - geom.X[0]
    return geom.areas[0] * np.einsum("i,id->d", coeffs / geom.heights[0], diff)


def element_means(field, degree=2):
    """Element integrals of a field's values, shape (M, *value_shape)."""
    from .quadrature import triangle_rule

    rule = triangle_rule(degree)
    vals = field.values(rule.points)
    w = 2.0 * mesh_geometry(field.mesh).areas[:, None] * rule.weights[None]
    return np.einsum("mq,mq...->m...", w, vals)
