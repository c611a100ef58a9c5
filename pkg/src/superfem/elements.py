"""Shape functions and piecewise fields for CR, Morley, RT0, HHJ0, P1 and P0.

All bases are evaluated for many triangles at once: geometry arrays have a
leading element axis ``M`` and evaluation points are barycentric coordinates
shared by every element.

Edge-type degrees of freedom are normalised edge means taken with the global
edge normal ``n_e`` of :class:`~superfem.mesh.Mesh`:

* CR: mean value on the edge (equals the midpoint value),
* Morley: vertex values and mean of the normal derivative along ``n_e``,
* RT0: mean normal component ``sigma . n_e``,
* HHJ0: mean of ``n_e^T tau n_e`` (independent of the sign of ``n_e``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dofs import ElementKind, build_dofmap

__all__ = [
    "ElementKind",
    "TriangleGeometry",
    "LocalBasis",
    "local_basis",
    "PiecewiseField",
    "eval_field",
    "morley_coefficients",
    "hhj_basis",
]

MORLEY_COND_LIMIT = 1e10


class TriangleGeometry:
    """Per-element geometric quantities for triangles ``X`` of shape (M, 3, 2)."""

    def __init__(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 2:
            X = X[None]
        self.X = X
        d = X[:, [2, 0, 1]] - X[:, [1, 2, 0]]  # local edge i: v[i+1] -> v[i+2]
        self.edge_vectors = d
        self.lengths = np.sqrt((d**2).sum(axis=2))
        self.tangents = d / self.lengths[..., None]
        self.normals = np.stack([self.tangents[..., 1], -self.tangents[..., 0]], axis=2)
        area2 = (X[:, 1, 0] - X[:, 0, 0]) * (X[:, 2, 1] - X[:, 0, 1]) - \
            (X[:, 1, 1] - X[:, 0, 1]) * (X[:, 2, 0] - X[:, 0, 0])
        if np.any(area2 <= 0):
            raise ValueError("degenerate or clockwise triangle")
        self.areas = 0.5 * area2
        self.grad_lambda = -self.normals * (self.lengths / area2[:, None])[..., None]
        self.heights = area2[:, None] / self.lengths
        self.centroids = X.mean(axis=1)
        self.diameters = self.lengths.max(axis=1)
        self.midpoints = 0.5 * (X[:, [1, 2, 0]] + X[:, [2, 0, 1]])

    def __len__(self):
        return len(self.X)

    def to_physical(self, bary):
        """Barycentric points (nq, 3) -> physical points (M, nq, 2)."""
        return np.einsum("qi,mid->mqd", np.asarray(bary, float), self.X)


def mesh_geometry(mesh):
    g = mesh.__dict__.get("_geometry")
    if g is None:
        g = TriangleGeometry(mesh.element_vertices())
        mesh.__dict__["_geometry"] = g
    return g


def _signs(mesh_or_none, M):
    if mesh_or_none is None:
        return np.ones((M, 3))
    return np.asarray(mesh_or_none.tri_edge_sign, dtype=float)


# ----------------------------------------------------------------------
# Morley

def _monomials(xi):
    x, y = xi[..., 0], xi[..., 1]
    one = np.ones_like(x)
    return np.stack([one, x, y, x * x, x * y, y * y], axis=-1)


def _monomial_grads(xi):
    x, y = xi[..., 0], xi[..., 1]
    z, one = np.zeros_like(x), np.ones_like(x)
    gx = np.stack([z, one, z, 2 * x, y, z], axis=-1)
    gy = np.stack([z, z, one, z, x, 2 * y], axis=-1)
    return np.stack([gx, gy], axis=-1)


def morley_coefficients(geom, signs):
    """Monomial coefficients of the Morley basis, shape (M, 6, 6).

    Column ``j`` holds basis function ``j`` in the scaled monomials
    ``1, xi, eta, xi^2, xi*eta, eta^2`` with ``xi = (x - centroid)/h_K``.
    Obtained by inverting the dof-functional matrix element by element.
    """
    c, h = geom.centroids, geom.diameters
    xi_v = (geom.X - c[:, None]) / h[:, None, None]
    xi_m = (geom.midpoints - c[:, None]) / h[:, None, None]
    n = geom.normals * np.asarray(signs, float)[..., None]
    D = np.empty((len(geom), 6, 6))
    D[:, :3] = _monomials(xi_v)
    # the normal derivative of a quadratic is affine: its edge mean is the
    # midpoint value
    D[:, 3:] = np.einsum("mjkd,mjd->mjk", _monomial_grads(xi_m), n) / h[:, None, None]
    cond = np.linalg.cond(D)
    if np.any(~np.isfinite(cond)) or np.any(cond > MORLEY_COND_LIMIT):
        raise ValueError("ill-conditioned Morley dof matrix (degenerate triangle?)")
    return np.linalg.inv(D)


def _morley_cached(mesh):
    C = mesh.__dict__.get("_morley_coeffs")
    if C is None:
        C = morley_coefficients(mesh_geometry(mesh), mesh.tri_edge_sign)
        mesh.__dict__["_morley_coeffs"] = C
    return C


def _morley_eval(geom, C, bary, what):
    pts = geom.to_physical(bary)
    h = geom.diameters
    xi = (pts - geom.centroids[:, None]) / h[:, None, None]
    if what == "value":
        return np.einsum("mqk,mkj->mqj", _monomials(xi), C)
    if what == "grad":
        g = _monomial_grads(xi) / h[:, None, None, None]
        return np.einsum("mqkd,mkj->mqjd", g, C)
    Hm = np.zeros((6, 2, 2))
    Hm[3, 0, 0] = 2.0
    Hm[4, 0, 1] = Hm[4, 1, 0] = 1.0
    Hm[5, 1, 1] = 2.0
    H = np.einsum("kab,mkj->mjab", Hm, C) / (h**2)[:, None, None, None]
    return np.broadcast_to(H[:, None], (len(geom), len(bary), 6, 2, 2))


# ----------------------------------------------------------------------
# HHJ

def hhj_basis(geom):
    """Constant symmetric basis matrices ``Psi_i`` with ``n_j^T Psi_i n_j = delta_ij``.

    ``Psi_i = (t_{i+1} t_{i-1}^T + t_{i-1} t_{i+1}^T) / (2 (n_i.t_{i-1})(n_i.t_{i+1}))``.
    Shape (M, 3, 2, 2).
    """
    t, n = geom.tangents, geom.normals
    out = np.empty((len(geom), 3, 2, 2))
    for i in range(3):
        tp, tm = t[:, (i + 1) % 3], t[:, (i - 1) % 3]
        denom = 2.0 * np.einsum("md,md->m", n[:, i], tm) * np.einsum("md,md->m", n[:, i], tp)
        out[:, i] = (np.einsum("ma,mb->mab", tp, tm) + np.einsum("ma,mb->mab", tm, tp)) \
            / denom[:, None, None]
    return out


# ----------------------------------------------------------------------
# Generic evaluation

def basis_values(kind, geom, bary, signs=None, morley=None):
    """Basis function values at barycentric points.

    Returns (M|1, nq, n) for scalar kinds, (M, nq, 3, 2) for RT0 and
    (M, nq, 3, 2, 2) for HHJ0.
    """
    kind = ElementKind(kind).base
    bary = np.atleast_2d(np.asarray(bary, float))
    M = len(geom)
    if signs is None:
        signs = np.ones((M, 3))
    if kind is ElementKind.CR:
        return (1.0 - 2.0 * bary)[None]
    if kind is ElementKind.P1C:
        return bary[None]
    if kind is ElementKind.P0:
        return np.ones((1, len(bary), 1))
    if kind is ElementKind.MORLEY:
        C = morley if morley is not None else morley_coefficients(geom, signs)
        return _morley_eval(geom, C, bary, "value")
    if kind is ElementKind.RT0:
        pts = geom.to_physical(bary)
        diff = pts[:, :, None, :] - geom.X[:, None, :, :]
        scale = np.asarray(signs, float) / geom.heights
        return diff * scale[:, None, :, None]
    if kind is ElementKind.HHJ0:
        return np.broadcast_to(hhj_basis(geom)[:, None], (M, len(bary), 3, 2, 2))
    raise ValueError(f"no basis values for {kind}")


def basis_gradients(kind, geom, bary, signs=None, morley=None):
    """Gradients of scalar bases: (M, nq, n, 2)."""
    kind = ElementKind(kind).base
    bary = np.atleast_2d(np.asarray(bary, float))
    M, nq = len(geom), len(bary)
    if kind is ElementKind.CR:
        return np.broadcast_to(-2.0 * geom.grad_lambda[:, None], (M, nq, 3, 2))
    if kind is ElementKind.P1C:
        return np.broadcast_to(geom.grad_lambda[:, None], (M, nq, 3, 2))
    if kind is ElementKind.P0:
        return np.zeros((M, nq, 1, 2))
    if kind is ElementKind.MORLEY:
        if signs is None:
            signs = np.ones((M, 3))
        C = morley if morley is not None else morley_coefficients(geom, signs)
        return _morley_eval(geom, C, bary, "grad")
    raise ValueError(f"gradient not defined for {kind}")


def basis_hessians(kind, geom, bary, signs=None, morley=None):
    """Hessians of scalar bases: (M, nq, n, 2, 2); exact zeros below degree 2."""
    kind = ElementKind(kind).base
    bary = np.atleast_2d(np.asarray(bary, float))
    M, nq = len(geom), len(bary)
    if kind is ElementKind.MORLEY:
        if signs is None:
            signs = np.ones((M, 3))
        C = morley if morley is not None else morley_coefficients(geom, signs)
        return _morley_eval(geom, C, bary, "hess")
    if kind in (ElementKind.CR, ElementKind.P1C, ElementKind.P0):
        n = 1 if kind is ElementKind.P0 else 3
        return np.zeros((M, nq, n, 2, 2))
    raise ValueError(f"hessian not defined for {kind}")


def rt_divergence(geom, signs=None):
    """Divergence of the RT0 basis (constant), shape (M, 3): ``2 s_i / d_i``."""
    if signs is None:
        signs = np.ones((len(geom), 3))
    return 2.0 * np.asarray(signs, float) / geom.heights


# ----------------------------------------------------------------------

@dataclass
class LocalBasis:
    """Basis of one element kind on a single physical triangle.

    Edge normals default to the outward normals of the triangle; pass
    ``signs`` (+1/-1 per local edge) to orient them otherwise.  Points are
    physical coordinates of shape (..., 2).
    """

    kind: ElementKind
    triangle: np.ndarray
    signs: np.ndarray

    def __post_init__(self):
        self.kind = ElementKind(self.kind)
        self.triangle = np.asarray(self.triangle, dtype=float).reshape(3, 2)
        self.geom = TriangleGeometry(self.triangle[None])
        self.signs = np.asarray(self.signs, dtype=float).reshape(1, 3)
        self._morley = None
        if self.kind.base is ElementKind.MORLEY:
            self._morley = morley_coefficients(self.geom, self.signs)

    @property
    def size(self):
        return self.kind.local_dofs

    def barycentric(self, points):
        pts = np.atleast_2d(np.asarray(points, float))
        X = self.triangle
        T = np.column_stack([X[1] - X[0], X[2] - X[0]])
        lam12 = np.linalg.solve(T, (pts - X[0]).T).T
        return np.column_stack([1.0 - lam12.sum(axis=1), lam12])

    def _args(self, points):
        return self.geom, self.barycentric(points), self.signs, self._morley

    def values(self, points):
        return basis_values(self.kind, *self._args(points))[0]

    def gradients(self, points):
        return basis_gradients(self.kind, *self._args(points))[0]

    def hessians(self, points):
        return basis_hessians(self.kind, *self._args(points))[0]

    def divergence(self):
        if self.kind is not ElementKind.RT0:
            raise ValueError("divergence is defined for RT0 only")
        return rt_divergence(self.geom, self.signs)[0]

    def dof_matrix(self, funcs):
        """Apply the local dof functionals to callables (value, grad) pairs.

        ``funcs`` is a list of ``(f, grad_f)`` for scalar kinds, of vector
        callables for RT0 and of matrix callables for HHJ0.  Edge means are
        computed with a 5-point Gauss rule.  Returns (ndof, len(funcs)).
        """
        from .quadrature import edge_rule

        rule = edge_rule(9)
        g = self.geom
        X = self.triangle
        out = np.zeros((self.size, len(funcs)))
        for j, fn in enumerate(funcs):
            for i in range(3):
                a, b = X[(i + 1) % 3], X[(i + 2) % 3]
                pts = a + rule.points[:, None] * (b - a)
                n = g.normals[0, i] * self.signs[0, i]
                k = self.kind.base
                if k is ElementKind.CR:
                    out[i, j] = rule.weights @ fn[0](pts)
                elif k is ElementKind.P1C:
                    out[i, j] = fn[0](X[i][None])[0]
                elif k is ElementKind.MORLEY:
                    out[i, j] = fn[0](X[i][None])[0]
                    out[3 + i, j] = rule.weights @ (fn[1](pts) @ n)
                elif k is ElementKind.RT0:
                    out[i, j] = rule.weights @ (fn(pts) @ n)
                elif k is ElementKind.HHJ0:
                    out[i, j] = rule.weights @ np.einsum("a,qab,b->q", n, fn(pts), n)
            if self.kind.base is ElementKind.P0:
                out[0, j] = fn[0](g.centroids)[0]
        return out


def local_basis(kind, triangle, signs=(1, 1, 1)):
    """Construct the :class:`LocalBasis` of ``kind`` on ``triangle``."""
    return LocalBasis(ElementKind(kind), np.asarray(triangle, float), np.asarray(signs))


# ----------------------------------------------------------------------

@dataclass
class PiecewiseField:
    """Coefficient vector of one element kind on a mesh.

    For the scalar kinds (CR, Morley, P1C, P0) ``coeffs`` may carry trailing
    value axes, e.g. shape ``(n_edges, 2, 2)`` for a matrix-valued CR field.
    RT0 fields are vector valued and HHJ0 fields matrix valued intrinsically.
    """

    mesh: object
    kind: ElementKind
    coeffs: np.ndarray

    def __post_init__(self):
        self.kind = ElementKind(self.kind)
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        dm = build_dofmap(self.mesh, self.kind)
        if self.coeffs.shape[0] != dm.n_dofs:
            raise ValueError(f"{self.kind.value} field needs {dm.n_dofs} coefficients, "
                             f"got {self.coeffs.shape[0]}")
        self.dofmap = dm

    @property
    def value_shape(self):
        if self.kind is ElementKind.RT0:
            return (2,)
        if self.kind is ElementKind.HHJ0:
            return (2, 2)
        return self.coeffs.shape[1:]

    def local_coeffs(self):
        return self.coeffs[self.dofmap.element_dofs]

    def _basis_args(self):
        m = self.mesh
        morley = _morley_cached(m) if self.kind is ElementKind.MORLEY else None
        return mesh_geometry(m), m.tri_edge_sign, morley

    def values(self, bary):
        """Field values at barycentric points on every element: (M, nq, *shape)."""
        geom, signs, morley = self._basis_args()
        B = basis_values(self.kind, geom, bary, signs, morley)
        c = self.local_coeffs()
        if self.kind in (ElementKind.RT0, ElementKind.HHJ0):
            return np.einsum("mqj...,mj->mq...", B, c)
        return np.einsum("mqj,mj...->mq...", np.broadcast_to(
            B, (len(geom),) + B.shape[1:]), c)

    def gradients(self, bary):
        geom, signs, morley = self._basis_args()
        if self.kind in (ElementKind.RT0, ElementKind.HHJ0):
            raise ValueError(f"gradient not provided for {self.kind.value}")
        G = basis_gradients(self.kind, geom, bary, signs, morley)
        return np.einsum("mqjd,mj...->mq...d", G, self.local_coeffs())

    def hessians(self, bary):
        geom, signs, morley = self._basis_args()
        if self.kind in (ElementKind.RT0, ElementKind.HHJ0):
            raise ValueError(f"hessian not provided for {self.kind.value}")
        H = basis_hessians(self.kind, geom, bary, signs, morley)
        return np.einsum("mqjab,mj...->mq...ab", H, self.local_coeffs())

    def divergence(self):
        """Element-wise (constant) divergence of an RT0 field, shape (M,)."""
        if self.kind is not ElementKind.RT0:
            raise ValueError("divergence is defined for RT0 fields")
        geom = mesh_geometry(self.mesh)
        return np.einsum("mj,mj->m", rt_divergence(geom, self.mesh.tri_edge_sign),
                         self.local_coeffs())

    def edge_midpoint_values(self):
        """Values at the three local edge midpoints of every element: (M, 3, *shape)."""
        bary = np.array([[0.0, 0.5, 0.5], [0.5, 0.0, 0.5], [0.5, 0.5, 0.0]])
        return self.values(bary)


def eval_field(field, triangle_index, point, tol=1e-10):
    """Value, gradient and hessian of ``field`` at ``point`` in one triangle.

    Returns a dict with keys ``value``, ``gradient``, ``hessian`` (and
    ``divergence`` for RT0).  Derivatives the element does not possess are
    returned as exact zeros.
    """
    m = field.mesh
    k = int(triangle_index)
    X = m.vertices[m.triangles[k]]
    p = np.asarray(point, float)
    T = np.column_stack([X[1] - X[0], X[2] - X[0]])
    l12 = np.linalg.solve(T, p - X[0])
    bary = np.array([1.0 - l12.sum(), l12[0], l12[1]])
    if np.any(bary < -tol):
        raise ValueError(f"point {tuple(p)} lies outside triangle {k}")

    sub = _SingleElement(m, k)
    f = PiecewiseField.__new__(PiecewiseField)
    f.mesh, f.kind, f.coeffs = sub, field.kind, field.coeffs
    f.dofmap = _SingleDofMap(field.dofmap.element_dofs[k:k + 1])
    out = {"value": f.values(bary[None])[0, 0]}
    if field.kind in (ElementKind.RT0, ElementKind.HHJ0):
        shape = field.value_shape
        out["gradient"] = np.zeros(shape + (2,))
        out["hessian"] = np.zeros(shape + (2, 2))
        if field.kind is ElementKind.RT0:
            out["divergence"] = f.divergence()[0]
    else:
        out["gradient"] = f.gradients(bary[None])[0, 0]
        out["hessian"] = f.hessians(bary[None])[0, 0]
    return out


class _SingleDofMap:
    def __init__(self, element_dofs):
        self.element_dofs = element_dofs


class _SingleElement:
    """Mesh-like view of one triangle (geometry and edge signs only)."""

    def __init__(self, mesh, k):
        self.triangles = mesh.triangles[k:k + 1]
        self.tri_edge_sign = mesh.tri_edge_sign[k:k + 1]
        self._geometry = TriangleGeometry(mesh.vertices[mesh.triangles[k]][None])
        self.__dict__["_geometry"] = self._geometry
        if "_morley_coeffs" in mesh.__dict__:
            self.__dict__["_morley_coeffs"] = mesh.__dict__["_morley_coeffs"][k:k + 1]
