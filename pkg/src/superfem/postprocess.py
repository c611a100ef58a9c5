"""Midpoint-averaging recovery ``K_h`` and discrete Helmholtz recoveries.

``kh_recover`` maps a piecewise field ``q`` to a CR field (one component per
value entry): at an interior edge midpoint it takes the mean of the two
one-sided values; at a boundary edge ``e`` of triangle ``K`` it extrapolates
linearly, ``2 K_h q(m') - K_h q(m'')``, through the interior edge ``e'`` of
``K`` with the smallest global index and the edge ``e''`` of the neighbour
``K'`` across ``e'`` that shares no vertex with ``e``.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import breadth_first_order

from .assembly import hhj_coupling
from .dofs import ElementKind
from .elements import PiecewiseField, mesh_geometry

__all__ = ["kh_recover", "gradient_field", "hessian_field", "hhj_matrix_field",
           "helmholtz_recover_rt", "helmholtz_recover_hhj", "divdiv_residual",
           "HypothesisError"]

_H = np.array([[0.0, -1.0], [1.0, 0.0]])


class HypothesisError(ValueError):
    """Input violates the hypothesis of a recovery (not div/divDiv free)."""


def edge_local_index(mesh):
    """Local index of every edge inside its adjacent triangles, shape (E, 2)."""
    idx = mesh.__dict__.get("_edge_local")
    if idx is None:
        E = mesh.n_edges
        idx = np.full((E, 2), -1, dtype=np.int64)
        et = mesh.edge_triangles
        for side in (0, 1):
            k = et[:, side]
            ok = k >= 0
            idx[ok, side] = (mesh.tri_edges[k[ok]] == np.flatnonzero(ok)[:, None]).argmax(axis=1)
        mesh.__dict__["_edge_local"] = idx
    return idx


def boundary_stencil(mesh):
    """For every boundary edge return ``(e, e', K', e'')`` index arrays.

    ``e''`` is ``-1`` only when no edge of ``K'`` avoids ``e``; the caller
    then falls back to the smallest-index edge of ``K'`` other than ``e'``.
    """
    cache = mesh.__dict__.get("_kh_stencil")
    if cache is not None:
        return cache
    be = np.flatnonzero(mesh.boundary_edges)
    K = mesh.edge_triangles[be, 0]
    te = mesh.tri_edges[K]
    interior = ~mesh.boundary_edges[te]
    if np.any(~interior.any(axis=1)):
        raise ValueError("K_h needs an interior edge in every boundary element "
                         "(single-element mesh?)")
    cand = np.where(interior, te, np.iinfo(np.int64).max)
    ep = cand.min(axis=1)
    et = mesh.edge_triangles[ep]
    Kp = np.where(et[:, 0] == K, et[:, 1], et[:, 0])
    tep = mesh.tri_edges[Kp]
    ev = mesh.edges[be]
    disjoint = np.ones(tep.shape, dtype=bool)
    for j in range(3):
        verts = mesh.edges[tep[:, j]]
        for a in range(2):
            for b in range(2):
                disjoint[:, j] &= verts[:, a] != ev[:, b]
    disjoint &= tep != ep[:, None]
    epp = np.where(disjoint.any(axis=1), tep[np.arange(len(be)), disjoint.argmax(axis=1)], -1)
    fallback = epp < 0
    if np.any(fallback):
        other = np.where(tep != ep[:, None], tep, np.iinfo(np.int64).max)
        epp[fallback] = other[fallback].min(axis=1)
    out = (be, ep, Kp, epp)
    mesh.__dict__["_kh_stencil"] = out
    return out


def kh_recover(mesh, q):
    """Recover ``q`` (RT0, HHJ0 or P0-valued field) into a CR field.

    Returns a :class:`PiecewiseField` of kind CR whose coefficients have the
    value shape of ``q``.
    """
    vals = q.edge_midpoint_values()
    loc = edge_local_index(mesh)
    et = mesh.edge_triangles
    E = mesh.n_edges
    shape = vals.shape[2:]
    out = np.zeros((E,) + shape)
    inner = np.flatnonzero(~mesh.boundary_edges)
    out[inner] = 0.5 * (vals[et[inner, 0], loc[inner, 0]] + vals[et[inner, 1], loc[inner, 1]])

    be, ep, Kp, epp = boundary_stencil(mesh)
    v2 = out[epp].copy()
    # e'' on the boundary: use the one-sided trace from K'
    onb = mesh.boundary_edges[epp]
    if np.any(onb):
        lk = (mesh.tri_edges[Kp[onb]] == epp[onb][:, None]).argmax(axis=1)
        v2[onb] = vals[Kp[onb], lk]
    out[be] = 2.0 * out[ep] - v2
    return PiecewiseField(mesh, ElementKind.CR, out)


# ----------------------------------------------------------------------

def gradient_field(field):
    """Piecewise-constant gradient of a CR or P1 field, as P0 (M, 2)."""
    if field.kind.base not in (ElementKind.CR, ElementKind.P1C):
        raise ValueError("gradient_field expects a CR or P1 field")
    g = field.gradients(np.full((1, 3), 1.0 / 3.0))[:, 0]
    return PiecewiseField(field.mesh, ElementKind.P0, g)


def hessian_field(field):
    """Piecewise-constant hessian of a Morley field, as P0 (M, 2, 2)."""
    if field.kind is not ElementKind.MORLEY:
        raise ValueError("hessian_field expects a Morley field")
    H = field.hessians(np.full((1, 3), 1.0 / 3.0))[:, 0]
    return PiecewiseField(field.mesh, ElementKind.P0, H)


def hhj_matrix_field(field):
    """HHJ0 field as its element-wise constant matrices, P0 (M, 2, 2)."""
    return PiecewiseField(field.mesh, ElementKind.P0,
                          field.values(np.full((1, 3), 1.0 / 3.0))[:, 0])


# ----------------------------------------------------------------------

def helmholtz_recover_rt(mesh, tau):
    """Continuous P1 ``w`` with ``curl w = (dw/dy, -dw/dx) = tau``.

    ``w`` is fixed to 0 at vertex 0 and integrated along a breadth-first
    spanning tree: along an edge from ``a`` to ``b`` the increment is the flux
    of ``tau`` through the edge with normal ``(d_y, -d_x)/|d|``, ``d = b - a``.
    The residual is the largest mismatch, in units of ``tau``, over all
    edges and elements; it vanishes iff ``tau`` is divergence free (on a
    simply connected mesh).

    Returns ``(w, residual)``.
    """
    if tau.kind is not ElementKind.RT0:
        raise ValueError("helmholtz_recover_rt expects an RT0 field")
    p, edges = mesh.vertices, mesh.edges
    d = p[edges[:, 1]] - p[edges[:, 0]]
    nprime = np.stack([d[:, 1], -d[:, 0]], axis=1) / mesh.edge_lengths[:, None]
    s = np.sign(np.einsum("ed,ed->e", nprime, mesh.edge_normals))
    inc = s * tau.coeffs * mesh.edge_lengths  # w(b) - w(a) per edge

    N = mesh.n_vertices
    adj = sp.coo_matrix((np.arange(1, len(edges) + 1, dtype=float),
                         (edges[:, 0], edges[:, 1])), shape=(N, N)).tocsr()
    adj = adj + adj.T
    order, pred = breadth_first_order(adj, 0, directed=False, return_predecessors=True)
    if len(order) != N:
        raise HypothesisError("mesh vertex graph is not connected")
    eid = {}
    for k, (a, b) in enumerate(edges):
        eid[(int(a), int(b))] = k
    w = np.zeros(N)
    for v in order[1:]:
        u = int(pred[v])
        v = int(v)
        if u < v:
            w[v] = w[u] + inc[eid[(u, v)]]
        else:
            w[v] = w[u] - inc[eid[(v, u)]]
    defect = np.abs(w[edges[:, 1]] - w[edges[:, 0]] - inc) / mesh.edge_lengths
    wf = PiecewiseField(mesh, ElementKind.P1C, w)
    g = wf.gradients(np.full((1, 3), 1.0 / 3.0))[:, 0]
    curl = np.stack([g[:, 1], -g[:, 0]], axis=1)
    tc = tau.values(np.full((1, 3), 1.0 / 3.0))[:, 0]
    residual = max(float(defect.max(initial=0.0)), float(np.abs(curl - tc).max(initial=0.0)))
    return wf, residual


def divdiv_residual(mesh, tau):
    """``max_z |<divDiv_h tau, lambda_z>|`` over interior hat functions.

    Returns ``(residual, per_vertex)``.  The value is absolute: the defect of
    a discrete difference such as ``sigma_HHJ - Pi_HHJ sigma`` is a roundoff
    floor of the full fields, so scaling by ``tau`` itself would amplify it.
    """
    C = hhj_coupling(mesh)
    free = np.flatnonzero(~mesh.boundary_vertices)
    r = C[:, free].T @ tau.coeffs
    return float(np.abs(r).max(initial=0.0)), r


def _strain_operator(mesh):
    """Rows map vertex values of ``phi`` to weighted entries of ``H^T eps(phi) H``."""
    geom = mesh_geometry(mesh)
    M, N = mesh.n_triangles, mesh.n_vertices
    G = geom.grad_lambda
    sq = np.sqrt(geom.areas)[:, None]
    t = mesh.triangles
    rows, cols, vals = [], [], []
    # (H^T eps H) = [[e22, -e12], [-e12, e11]]
    # row 0: e22 = d2 phi2; row 1: -e12 (weight sqrt 2); row 2: e11 = d1 phi1
    r0 = 3 * np.arange(M)
    for comp, (row_off, col_off, dcomp, factor) in enumerate([
            (0, N, 1, 1.0),
            (1, 0, 1, -0.5 * np.sqrt(2.0)), (1, N, 0, -0.5 * np.sqrt(2.0)),
            (2, 0, 0, 1.0)]):
        rows.append(np.repeat(r0 + row_off, 3))
        cols.append((t + col_off).ravel())
        vals.append((factor * sq * G[:, :, dcomp]).ravel())
    A = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(3 * M, 2 * N)).tocsr()
    return A


def _strain_target(mesh, tau_mats):
    sq = np.sqrt(mesh_geometry(mesh).areas)
    b = np.empty((mesh.n_triangles, 3))
    b[:, 0] = tau_mats[:, 0, 0]
    b[:, 1] = np.sqrt(2.0) * 0.5 * (tau_mats[:, 0, 1] + tau_mats[:, 1, 0])
    b[:, 2] = tau_mats[:, 1, 1]
    return (b * sq[:, None]).ravel()


def helmholtz_recover_hhj(mesh, tau, tol=1e-10):
    """Continuous P1 vector field ``phi`` (mod rigid motions) with
    ``H^T eps(phi) H = tau``, ``H = [[0, -1], [1, 0]]``.

    ``tau`` must satisfy ``<divDiv_h tau, v> = 0`` for all continuous P1
    ``v`` vanishing on the boundary: :func:`divdiv_residual` must not exceed
    ``tol * max(1, max|tau dofs|)``, else :class:`HypothesisError`.  The least-squares
    problem is solved through its augmented system with the gauge
    ``sum_z phi(z) . r(z) = 0`` for the three rigid motions ``r``.

    Returns ``(phi, residual)`` where ``phi`` has shape (N, 2) and
    ``residual = ||H^T eps(phi) H - tau|| / ||tau||`` in L2.
    """
    if tau.kind is ElementKind.HHJ0:
        ddr, _ = divdiv_residual(mesh, tau)
        if ddr > tol * max(1.0, float(np.abs(tau.coeffs).max(initial=0.0))):
            raise HypothesisError(f"divDiv_h tau != 0 (residual {ddr:.3e})")
        mats = tau.values(np.full((1, 3), 1.0 / 3.0))[:, 0]
    elif tau.kind is ElementKind.P0 and tau.value_shape == (2, 2):
        mats = tau.coeffs
    else:
        raise ValueError("helmholtz_recover_hhj expects an HHJ0 or P0 matrix field")
    N = mesh.n_vertices
    A = _strain_operator(mesh)
    b = _strain_target(mesh, mats)
    x, y = mesh.vertices[:, 0], mesh.vertices[:, 1]
    G = np.zeros((3, 2 * N))
    G[0, :N] = 1.0
    G[1, N:] = 1.0
    G[2, :N], G[2, N:] = -y, x
    G = sp.csr_matrix(G)
    R = A.shape[0]
    K = sp.bmat([[sp.identity(R), A, None],
                 [A.T, None, G.T],
                 [None, G, None]], format="csc")
    rhs = np.concatenate([b, np.zeros(2 * N + 3)])
    sol = spla.spsolve(K, rhs)
    phi = sol[R:R + 2 * N]
    nb = np.linalg.norm(b)
    residual = float(np.linalg.norm(A @ phi - b) / nb) if nb > 0 else float(np.linalg.norm(A @ phi))
    return np.column_stack([phi[:N], phi[N:]]), residual


def rotated_strain(mesh, phi):
    """``H^T eps(phi) H`` element-wise for vertex values ``phi`` (N, 2)."""
    G = mesh_geometry(mesh).grad_lambda
    grads = np.einsum("mzd,mzc->mcd", G, phi[mesh.triangles])  # d phi_c / d x_d
    eps = 0.5 * (grads + np.swapaxes(grads, 1, 2))
    return np.einsum("ba,mbc,cd->mad", _H, eps, _H)
