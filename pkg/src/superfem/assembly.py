"""Sparse assembly of the CR, Morley, RT and HHJ discrete problems and solves.

Essential conditions are imposed by eliminating the masked dofs.  Element
contributions are accumulated in element order through a COO -> CSR
conversion, so repeated assemblies are bit-identical.

Sign conventions
----------------
RT:  ``(sigma, tau) - (u, div tau) = 0`` and ``(v, div sigma) = (g, v)``,
     taken literally.  With ``g = -f`` for ``-Laplace(u) = f`` the flux
     approximates ``grad u`` and the P0 unknown approximates ``-u``.
HHJ: ``(sigma, tau) + <divDiv_h tau, u> = 0`` and
     ``<divDiv_h sigma, v> = (-f, v)`` with ``v`` continuous P1 vanishing on
     the boundary; ``sigma`` approximates the hessian and ``u`` the deflection.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .dofs import ElementKind, build_dofmap
from .elements import (
    _morley_cached,
    basis_hessians,
    basis_values,
    hhj_basis,
    mesh_geometry,
    rt_divergence,
)
from .quadrature import DEFAULT_TRIANGLE_DEGREE, physical_points, physical_weights, triangle_rule

logger = logging.getLogger(__name__)

SPD_TOL = 1e-12
SADDLE_TOL = 1e-10


class SolverError(RuntimeError):
    """Linear solve failed to reach the requested residual."""

    def __init__(self, message, residual):
        super().__init__(f"{message} (relative residual {residual:.3e})")
        self.residual = residual


@dataclass
class SparseSystem:
    """Reduced linear system together with what is needed to lift it back.

    ``blocks`` lists ``(name, n_full, free_indices)`` in unknown order; the
    reduced unknown vector is the concatenation of the free entries of each
    block.  ``symmetric_definite`` selects the solver family.
    """

    matrix: sp.csr_matrix
    rhs: np.ndarray
    blocks: list = field(default_factory=list)
    symmetric_definite: bool = True
    solution: np.ndarray | None = None
    residual: float | None = None

    @property
    def block_sizes(self):
        return [len(free) for _, _, free in self.blocks]

    def unpack(self, x):
        """Full coefficient vectors per block (eliminated dofs set to zero)."""
        out, pos = {}, 0
        for name, n_full, free in self.blocks:
            v = np.zeros(n_full)
            v[free] = x[pos:pos + len(free)]
            out[name] = v
            pos += len(free)
        return out

    def dump(self, path):
        """Write the matrix in coordinate text format (``i j value``)."""
        coo = self.matrix.tocoo()
        with open(path, "w", encoding="utf-8") as fh:
            for i, j, v in zip(coo.row, coo.col, coo.data):
                fh.write(f"{i} {j} {float(v)!r}\n")


def _scatter(local, dofs, nrows, ncols=None, col_dofs=None):
    """Sum element matrices (M, a, b) into a CSR matrix."""
    col_dofs = dofs if col_dofs is None else col_dofs
    ncols = nrows if ncols is None else ncols
    a, b = dofs.shape[1], col_dofs.shape[1]
    rows = np.repeat(dofs, b, axis=1).ravel()
    cols = np.tile(col_dofs, (1, a)).ravel()
    A = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(nrows, ncols))
    return A.tocsr()


def _scatter_vec(local, dofs, n):
    return np.bincount(dofs.ravel(), weights=local.ravel(), minlength=n)


def _load(mesh, f, kind, degree, values=None):
    """Element load vectors ``int_K f phi_i`` (M, nloc)."""
    rule = triangle_rule(degree)
    pts = physical_points(mesh, rule)
    fq = np.asarray(f(pts[..., 0], pts[..., 1]), dtype=float)
    fq = np.broadcast_to(fq, pts.shape[:2])
    w = physical_weights(mesh, rule)
    if values is None:
        geom = mesh_geometry(mesh)
        values = basis_values(kind, geom, rule.points, mesh.tri_edge_sign,
                              _morley_cached(mesh) if kind is ElementKind.MORLEY else None)
    values = np.broadcast_to(values, (mesh.n_triangles,) + values.shape[1:])
    return np.einsum("mq,mq,mqj->mj", w, fq, values)


def _restrict(A, b, free):
    return A[free][:, free].tocsr(), b[free]


# ----------------------------------------------------------------------

def cr_stiffness(mesh):
    """Full CR stiffness matrix (all edges), CSR."""
    geom = mesh_geometry(mesh)
    G = -2.0 * geom.grad_lambda
    local = np.einsum("mid,mjd->mij", G, G) * geom.areas[:, None, None]
    return _scatter(local, mesh.tri_edges, mesh.n_edges)


def assemble_cr_poisson(mesh, f, degree=DEFAULT_TRIANGLE_DEGREE):
    """CR discretisation of ``(grad_h u, grad_h v) = (f, v)`` on CR0."""
    dm = build_dofmap(mesh, ElementKind.CR0)
    A = cr_stiffness(mesh)
    b = _scatter_vec(_load(mesh, f, ElementKind.CR, degree), dm.element_dofs, dm.n_dofs)
    free = dm.free
    Ar, br = _restrict(A, b, free)
    return SparseSystem(Ar, br, [("u", dm.n_dofs, free)], True)


def morley_stiffness(mesh):
    """Full Morley stiffness ``int_K hess(phi_i) : hess(phi_j)``, CSR."""
    geom = mesh_geometry(mesh)
    dm = build_dofmap(mesh, ElementKind.MORLEY)
    H = basis_hessians(ElementKind.MORLEY, geom, np.full((1, 3), 1 / 3),
                       mesh.tri_edge_sign, _morley_cached(mesh))[:, 0]
    local = np.einsum("miab,mjab->mij", H, H) * geom.areas[:, None, None]
    return _scatter(local, dm.element_dofs, dm.n_dofs)


def p1_load(mesh, f, degree=DEFAULT_TRIANGLE_DEGREE):
    """Vector ``(f, lambda_z)`` over all vertices."""
    return _scatter_vec(_load(mesh, f, ElementKind.P1C, degree), mesh.triangles,
                        mesh.n_vertices)


def assemble_morley(mesh, f, rhs_mode="standard", degree=DEFAULT_TRIANGLE_DEGREE):
    """Morley plate system; ``rhs_mode`` is ``"standard"`` (f, v) or
    ``"modified"`` (f, Pi_D v).

    In modified mode only vertex dofs receive load: the vertex interpolant of
    a Morley basis function is the hat function of its vertex for vertex dofs
    and zero for normal-derivative dofs.
    """
    dm = build_dofmap(mesh, ElementKind.MORLEY)
    A = morley_stiffness(mesh)
    if rhs_mode == "standard":
        b = _scatter_vec(_load(mesh, f, ElementKind.MORLEY, degree), dm.element_dofs,
                         dm.n_dofs)
    elif rhs_mode == "modified":
        b = np.zeros(dm.n_dofs)
        b[:mesh.n_vertices] = p1_load(mesh, f, degree)
    else:
        raise ValueError(f"unknown rhs_mode {rhs_mode!r}")
    free = dm.free
    Ar, br = _restrict(A, b, free)
    return SparseSystem(Ar, br, [("u", dm.n_dofs, free)], True)


def rt_mass(mesh):
    geom = mesh_geometry(mesh)
    rule = triangle_rule(2)
    V = basis_values(ElementKind.RT0, geom, rule.points, mesh.tri_edge_sign)
    w = physical_weights(mesh, rule)
    local = np.einsum("mq,mqid,mqjd->mij", w, V, V)
    return _scatter(local, mesh.tri_edges, mesh.n_edges)


def rt_divergence_matrix(mesh):
    """``B[K, e] = int_K div phi_e``, shape (M, E)."""
    geom = mesh_geometry(mesh)
    local = (rt_divergence(geom, mesh.tri_edge_sign) * geom.areas[:, None])[:, None, :]
    rows = np.arange(mesh.n_triangles)[:, None]
    return _scatter(local, rows, mesh.n_triangles, mesh.n_edges, mesh.tri_edges)


def assemble_rt_mixed(mesh, f, degree=DEFAULT_TRIANGLE_DEGREE):
    """RT0 x P0 saddle system ``[[M, -B^T], [-B, 0]] [s; u] = [0; -F]``.

    ``F_K = int_K f``; the second block row is ``(v, div s) = (f, v)``
    multiplied by -1 to keep the matrix symmetric.
    """
    A = rt_mass(mesh)
    B = rt_divergence_matrix(mesh)
    F = _load(mesh, f, ElementKind.P0, degree)[:, 0]
    K = sp.bmat([[A, -B.T], [-B, None]], format="csr")
    rhs = np.concatenate([np.zeros(mesh.n_edges), -F])
    blocks = [("sigma", mesh.n_edges, np.arange(mesh.n_edges)),
              ("u", mesh.n_triangles, np.arange(mesh.n_triangles))]
    return SparseSystem(K, rhs, blocks, False)


def hhj_mass(mesh):
    geom = mesh_geometry(mesh)
    P = hhj_basis(geom)
    local = np.einsum("miab,mjab->mij", P, P) * geom.areas[:, None, None]
    return _scatter(local, mesh.tri_edges, mesh.n_edges)


def hhj_coupling(mesh):
    """``C[e, z] = <divDiv_h Psi_e, lambda_z>`` over all edges and vertices.

    For piecewise linear ``v`` the form reduces to
    ``sum_K sum_j |e_j| (tau)_{n_j n_j} dv/dn_j``; on one element this is
    ``C_K[i, z] = |e_i| grad(lambda_z) . n_i``.
    """
    geom = mesh_geometry(mesh)
    local = geom.lengths[:, :, None] * np.einsum("mid,mzd->miz", geom.normals,
                                                   geom.grad_lambda)
    return _scatter(local, mesh.tri_edges, mesh.n_edges, mesh.n_vertices, mesh.triangles)


def assemble_hhj_mixed(mesh, f, degree=DEFAULT_TRIANGLE_DEGREE):
    """HHJ0 x P1C0 saddle system ``[[A, C], [C^T, 0]] [s; u] = [0; -F]``."""
    A = hhj_mass(mesh)
    C = hhj_coupling(mesh)
    free_v = np.flatnonzero(~mesh.boundary_vertices)
    Cr = C[:, free_v]
    F = p1_load(mesh, f, degree)[free_v]
    K = sp.bmat([[A, Cr], [Cr.T, None]], format="csr")
    rhs = np.concatenate([np.zeros(mesh.n_edges), -F])
    blocks = [("sigma", mesh.n_edges, np.arange(mesh.n_edges)),
              ("u", mesh.n_vertices, free_v)]
    return SparseSystem(K, rhs, blocks, False)


# ----------------------------------------------------------------------

def relative_residual(A, x, b):
    if x.dtype == np.longdouble:
        A = A.astype(np.longdouble)
    r = (A @ x - b).astype(float)
    nb = np.linalg.norm(b)
    scale = nb if nb > 0 else 1.0
    return float(np.linalg.norm(r) / scale)


def _direct(A, b, limit, steps=3):
    """Sparse LU solve with iterative refinement in extended precision.

    Ill-conditioned systems (the Morley stiffness grows like ``h^-4``) leave a
    float64 residual floor of roughly ``eps * cond``.  When the first solve
    misses ``limit``, the iterate is kept in ``np.longdouble`` and corrected
    with residuals evaluated in that precision, reusing the factorisation.
    """
    try:
        lu = spla.splu(A.tocsc())
    except RuntimeError as exc:
        raise SolverError(f"factorisation failed: {exc}", float("inf")) from None
    x = lu.solve(b)
    if relative_residual(A, x, b) <= limit:
        return x
    AL = A.astype(np.longdouble)
    bL = b.astype(np.longdouble)
    x = x.astype(np.longdouble)
    for _ in range(steps):
        r = bL - AL @ x
        if np.linalg.norm(r.astype(float)) <= limit * 0.1 * np.linalg.norm(b):
            break
        x = x + lu.solve(r.astype(float))
    return x


def solve(system, iterative=False, tol=None, maxiter=None):
    """Solve ``system`` and return the reduced solution vector.

    Symmetric positive definite systems use a sparse direct factorisation
    (or CG when ``iterative``), saddle systems a sparse LU (or MINRES).  The
    relative residual is stored in ``system.residual``; a
    :class:`SolverError` is raised when it exceeds ``1e-12`` (SPD) or
    ``1e-10`` (saddle).  ``system.solution`` keeps the refined iterate
    (possibly ``np.longdouble``); the returned vector is float64.
    """
    A, b = system.matrix, np.asarray(system.rhs, dtype=float)
    limit = tol if tol is not None else (SPD_TOL if system.symmetric_definite else SADDLE_TOL)
    if A.shape[0] == 0:
        x = np.zeros(0)
    elif not np.any(b):
        x = np.zeros(A.shape[0])
    elif iterative:
        if system.symmetric_definite:
            x, info = spla.cg(A, b, rtol=limit * 0.1, atol=0.0, maxiter=maxiter)
        else:
            x, info = spla.minres(A, b, rtol=limit * 0.1, maxiter=maxiter)
        if info != 0:
            res = relative_residual(A, x, b)
            raise SolverError("iterative solver did not converge", res)
    else:
        x = _direct(A, b, limit)
    res = relative_residual(A, x, b) if A.shape[0] else 0.0
    system.solution, system.residual = x, res
    x = np.asarray(x, dtype=float)
    logger.debug("solve: n=%d residual=%.3e", A.shape[0], res)
    if not np.isfinite(res) or res > limit:
        raise SolverError("linear solve failed", res)
    return x
