"""Mesh structure diagnostics: approximate parallelograms and (alpha, sigma) fits.

An interior edge ``e = ab`` with neighbours ``acb`` and ``bda`` spans the
quadrilateral ``a-c-b-d``; its deviation is

    delta_e = max(| |ac| - |bd| |, | |cb| - |da| |) / |e|

and ``e`` is in class E1 iff ``delta_e <= C * h_e**threshold_alpha`` with
``C = 1`` (``h_e = |e|``).  Deviations below ``EXACT_TOL`` count as zero.

A boundary vertex ``p`` has two boundary edges; the boundary triangle of the
edge arriving at ``p`` (counter-clockwise along the boundary) is ``K_l`` and
that of the edge leaving ``p`` is ``K_r``.  Walking both triangles
counter-clockwise from their boundary edge pairs up their sides; ``p`` is in
P_b^2 when all paired lengths agree to ``h_p**(1 + alpha)``, otherwise
(interface intersections) in P_b^1.  Boundaries are polygonal, so the
normal condition ``|n_l - n_r| = O(h_p**alpha)`` reduces to collinear
boundary edges: any kink at ``p`` (a domain corner) puts it in P_b^1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .elements import TriangleGeometry, mesh_geometry
from .interpolation import hhj_local_interpolant, rt_local_interpolant, rt_local_mean
from .mesh import MeshError

__all__ = ["MeshDiagnostics", "classify", "edge_deviation", "fit_alpha", "fit_sigma",
           "boundary_pairs", "patch_defect_rt", "patch_defect_hhj", "synthetic_pair",
           "jitter_mesh"]

EXACT_TOL = 1e-12
CORNER_TOL = 1e-9


@dataclass
class MeshDiagnostics:
    """Result of :func:`classify`.

    ``delta`` and ``edge_class`` are indexed like ``interior_edges``
    (class 1 or 2).  ``pairs`` maps each P_b^2 vertex to ``(K_l, K_r)`` and
    ``corner_triangles`` each P_b^1 vertex to its boundary triangle(s).
    Exponents are ``math.inf`` when the corresponding set is exact/empty and
    ``math.nan`` when a single mesh with ``h = 1`` leaves them undetermined.
    """

    threshold_alpha: float
    interior_edges: np.ndarray
    delta: np.ndarray
    edge_class: np.ndarray
    p_b1: list
    p_b2: list
    pairs: dict
    corner_triangles: dict
    kappa: int
    alpha_estimate: float
    sigma_estimate: float
    log_uniformity: float
    e2_area: float
    notes: list = field(default_factory=list)

    @property
    def e1(self):
        return self.interior_edges[self.edge_class == 1]

    @property
    def e2(self):
        return self.interior_edges[self.edge_class == 2]

    def summary(self):
        """Plain-text report lines."""
        def fmt(v):
            if math.isnan(v):
                return "undetermined"
            return "inf (exact)" if math.isinf(v) else f"{v:.4f}"

        dmax = float(self.delta.max(initial=0.0))
        lines = [
            f"interior edges      {len(self.interior_edges)}",
            f"E1 / E2             {len(self.e1)} / {len(self.e2)}",
            f"max delta_e         {dmax:.3e}",
            f"threshold alpha     {self.threshold_alpha:g}",
            f"P_b^1 / P_b^2       {len(self.p_b1)} / {len(self.p_b2)}",
            f"kappa               {self.kappa}",
            f"alpha estimate      {fmt(self.alpha_estimate)}",
            f"sigma estimate      {fmt(self.sigma_estimate)}",
            f"sum_E2 |K|          {self.e2_area:.6g}",
            "log uniformity      " + ("undefined (h = 1)" if math.isinf(self.log_uniformity)
                                     else f"{self.log_uniformity:.4f}"),
        ]
        return lines + [f"note: {n}" for n in self.notes]


# ----------------------------------------------------------------------

def _third_vertex(tri, a, b):
    """Vertex of each triangle row not in {a, b}."""
    mask = (tri != a[:, None]) & (tri != b[:, None])
    return tri[np.arange(len(tri)), mask.argmax(axis=1)]


def edge_deviation(mesh):
    """``(interior_edges, delta)`` for every interior edge."""
    ie = mesh.interior_edges
    a, b = mesh.edges[ie, 0], mesh.edges[ie, 1]
    et = mesh.edge_triangles[ie]
    c = _third_vertex(mesh.triangles[et[:, 0]], a, b)
    d = _third_vertex(mesh.triangles[et[:, 1]], a, b)
    p = mesh.vertices

    def dist(i, j):
        return np.linalg.norm(p[i] - p[j], axis=1)

    dev = np.maximum(np.abs(dist(a, c) - dist(b, d)), np.abs(dist(c, b) - dist(d, a)))
    delta = dev / mesh.edge_lengths[ie]
    delta[delta <= EXACT_TOL] = 0.0
    return ie, delta


def _fit_through_origin(logx, logy):
    den = float(np.dot(logx, logx))
    if den < 1e-24:
        return math.nan
    return float(np.dot(logx, logy) / den)


def _fit_slope(logx, logy):
    A = np.column_stack([logx, np.ones_like(logx)])
    return float(np.linalg.lstsq(A, logy, rcond=None)[0][0])


def fit_alpha(meshes, threshold_alpha=1.0):
    """Exponent ``alpha`` in ``delta_e ~ h^alpha`` over E1 edges.

    Each mesh contributes the median of its nonzero E1 deviations against
    its mesh size ``h``; per-edge lengths are not used because edges of
    different direction within one mesh would bias the slope.  With one mesh
    the fit is through the origin (unit constant); with several an intercept
    is fitted.  Meshes with ``h >= 1`` are skipped: there ``h^alpha`` does not
    decrease with ``alpha`` and the E1 test carries no information.  ``inf``
    if no E1 edge of a usable mesh deviates, ``nan`` if deviations exist but
    every mesh was skipped.
    """
    meshes = list(meshes)
    xs, ys = [], []
    deviates = False
    for m in meshes:
        ie, delta = edge_deviation(m)
        e1 = delta <= m.edge_lengths[ie] ** threshold_alpha
        d = delta[e1 & (delta > 0)]
        deviates |= bool(d.size)
        if d.size and m.h_max < 1.0:
            xs.append(math.log(m.h_max))
            ys.append(math.log(float(np.median(d))))
    if not xs:
        # nothing to fit: exact, unless the only deviations sit on h >= 1 meshes
        return math.nan if deviates and all(m.h_max >= 1.0 for m in meshes) else math.inf
    x, y = np.array(xs), np.array(ys)
    if len(x) == 1 or np.ptp(x) < 1e-12:
        return _fit_through_origin(x, y)
    return _fit_slope(x, y)


def _e2_area(mesh, threshold_alpha):
    ie, delta = edge_deviation(mesh)
    e2 = ie[delta > mesh.edge_lengths[ie] ** threshold_alpha]
    if len(e2) == 0:
        return 0.0
    areas = mesh_geometry(mesh).areas
    et = mesh.edge_triangles[e2]
    return float(areas[et[:, 0]].sum() + areas[et[:, 1]].sum())


def fit_sigma(meshes, threshold_alpha=1.0):
    """Slope of ``log(sum_{E2} |K_e^1| + |K_e^2|)`` against ``log h``.

    One mesh: fit through the origin; several: with intercept.  ``inf`` if E2
    is empty on every mesh.
    """
    meshes = list(meshes)
    hs, As = [], []
    for m in meshes:
        a = _e2_area(m, threshold_alpha)
        if a > 0:
            hs.append(math.log(m.h_max))
            As.append(math.log(a))
    if not hs:
        return math.inf
    x, y = np.array(hs), np.array(As)
    if len(x) == 1 or np.ptp(x) < 1e-12:
        return _fit_through_origin(x, y)
    return _fit_slope(x, y)


# ----------------------------------------------------------------------

def _boundary_cycle(mesh):
    """For each boundary vertex: (incoming edge, outgoing edge) going CCW."""
    be = np.flatnonzero(mesh.boundary_edges)
    incoming, outgoing = {}, {}
    for e in be:
        k = mesh.edge_triangles[e, 0]
        loc = int(np.flatnonzero(mesh.tri_edges[k] == e)[0])
        t = mesh.triangles[k]
        start, end = int(t[(loc + 1) % 3]), int(t[(loc + 2) % 3])
        outgoing[start] = (int(e), int(k), loc)
        incoming[end] = (int(e), int(k), loc)
    return incoming, outgoing


def _walk(mesh, k, loc):
    """Side lengths of triangle ``k`` starting at local edge ``loc``, CCW."""
    L = mesh_geometry(mesh).lengths[k]
    return np.array([L[(loc + i) % 3] for i in range(3)])


def boundary_pairs(mesh, alpha=1.0):
    """Split boundary vertices into P_b^1 / P_b^2.

    Returns ``(p_b1, p_b2, pairs, corner_triangles)``.
    """
    incoming, outgoing = _boundary_cycle(mesh)
    geom = mesh_geometry(mesh)
    vt = {}
    for k, tri in enumerate(mesh.triangles):
        for v in tri:
            vt.setdefault(int(v), []).append(k)
    p_b1, p_b2, pairs, corners = [], [], {}, {}
    for p in sorted(incoming):
        el, kl, ll = incoming[p]
        er, kr, lr = outgoing[p]
        hp = max(geom.diameters[k] for k in vt[p])
        nl, nr = mesh.edge_normals[el], mesh.edge_normals[er]
        # polygonal domains: a kink between the two boundary edges is a corner
        ok = kl != kr and float(np.linalg.norm(nl - nr)) <= CORNER_TOL
        if ok:
            diff = np.abs(_walk(mesh, kl, ll) - _walk(mesh, kr, lr))
            diff[diff <= EXACT_TOL * hp] = 0.0
            ok = bool(np.all(diff <= hp ** (1.0 + alpha)))
        if ok:
            p_b2.append(p)
            pairs[p] = (kl, kr)
        else:
            p_b1.append(p)
            corners[p] = (kl,) if kl == kr else (kl, kr)
    return p_b1, p_b2, pairs, corners


def log_uniformity(mesh):
    """``max_K |ln h_K| / |ln h|`` (``inf`` when ``h == 1``)."""
    lh = abs(math.log(mesh.h_max))
    if lh == 0.0:
        return math.inf
    return float(np.abs(np.log(mesh_geometry(mesh).diameters)).max() / lh)


def classify(mesh, threshold_alpha=1.0, lineage=None):
    """Compute :class:`MeshDiagnostics` for ``mesh``.

    ``lineage`` (list of meshes, coarse to fine, ending with ``mesh``)
    defaults to ``mesh.lineage()``; with more than one member the exponents
    are fitted across levels with an intercept.
    """
    if threshold_alpha <= 0:
        raise ValueError("threshold_alpha must be positive")
    if mesh.n_triangles == 0:
        raise MeshError("empty mesh")
    if lineage is None:
        lineage = mesh.lineage()
    lineage = list(lineage) or [mesh]
    ie, delta = edge_deviation(mesh)
    h = mesh.edge_lengths[ie]
    cls = np.where(delta <= h ** threshold_alpha, 1, 2)
    p_b1, p_b2, pairs, corners = boundary_pairs(mesh, threshold_alpha)
    notes = []
    alpha = fit_alpha(lineage, threshold_alpha)
    if not np.any(delta > 0):
        notes.append("all interior pairs are exact parallelograms")
    elif math.isinf(alpha):
        notes.append("E1 pairs are exact parallelograms")
    elif len(lineage) == 1:
        notes.append("alpha fitted on a single mesh (through the origin)")
    sigma = fit_sigma(lineage, threshold_alpha)
    if math.isinf(sigma):
        notes.append("E2 is empty")
    return MeshDiagnostics(
        threshold_alpha=threshold_alpha, interior_edges=ie, delta=delta, edge_class=cls,
        p_b1=p_b1, p_b2=p_b2, pairs=pairs, corner_triangles=corners, kappa=len(p_b1),
        alpha_estimate=alpha, sigma_estimate=sigma, log_uniformity=log_uniformity(mesh),
        e2_area=_e2_area(mesh, threshold_alpha), notes=notes)


# ----------------------------------------------------------------------
# Patch identities on isolated boundary pairs

def _tri_integral_linear(X, c0, G):
    """``int_K (c0 + G x)`` for a linear field (value axes lead ``G``'s last)."""
    geom = TriangleGeometry(X[None])
    cen = geom.centroids[0]
    return geom.areas[0] * (c0 + G @ cen)


def patch_defect_rt(Kl, Kr, c0, G):
    """``|int_Kl (tau - Pi_RT tau) - int_Kr (tau - Pi_RT tau)|`` for
    ``tau(x) = c0 + G x`` (``G`` 2x2)."""
    c0, G = np.asarray(c0, float), np.asarray(G, float)

    def tau(x, y):
        return c0 + np.einsum("ij,...j->...i", G, np.stack([x, y], -1))

    out = []
    for X in (np.asarray(Kl, float), np.asarray(Kr, float)):
        coeffs, _ = rt_local_interpolant(X, tau)
        out.append(_tri_integral_linear(X, c0, G) - rt_local_mean(X, coeffs))
    return float(np.linalg.norm(out[0] - out[1]))


def patch_defect_hhj(Kl, Kr, c0, G):
    """As :func:`patch_defect_rt` for a symmetric-matrix field
    ``tau(x) = c0 + G[..., 0] x + G[..., 1] y`` (``G`` shape (2, 2, 2))."""
    c0, G = np.asarray(c0, float), np.asarray(G, float)

    def tau(x, y):
        return c0 + np.einsum("abk,...k->...ab", G, np.stack([x, y], -1))

    out = []
    for X in (np.asarray(Kl, float), np.asarray(Kr, float)):
        geom = TriangleGeometry(X[None])
        exact = geom.areas[0] * tau(*geom.centroids[0])
        out.append(exact - geom.areas[0] * hhj_local_interpolant(X, tau))
    return float(np.linalg.norm(out[0] - out[1]))


def synthetic_pair(h, alpha=None, rng=None, apex=(0.3, 0.8), direction=None):
    """Boundary pair at ``p = (0, 0)`` on the x-axis with mesh size ``h``.

    ``K_l = (-h, 0), (0, 0), h*apex`` and ``K_r`` its translate by ``(h, 0)``.
    With ``alpha`` given, the two non-shared vertices of ``K_r`` are moved by
    ``h**(1 + alpha)`` along fixed unit directions (tangentially for the
    boundary vertex), turning the pair into an ``O(h^{1+alpha})``
    approximate parallelogram.  Returns ``(K_l, K_r, omega_area)``.
    """
    a = np.asarray(apex, float) * h
    Kl = np.array([[-h, 0.0], [0.0, 0.0], a])
    Kr = Kl + np.array([h, 0.0])
    if alpha is not None:
        if direction is None:
            rng = np.random.default_rng(0) if rng is None else rng
            ang = rng.uniform(0, 2 * np.pi)
            direction = np.array([math.cos(ang), math.sin(ang)])
        eps = h ** (1.0 + alpha)
        Kr[1] = Kr[1] + eps * np.array([1.0, 0.0])
        Kr[2] = Kr[2] + eps * np.asarray(direction, float)
    mid = np.array([Kl[1], Kr[2], Kl[2]])
    area = sum(TriangleGeometry(X[None]).areas[0] for X in (Kl, Kr, mid))
    return Kl, Kr, float(area)


def jitter_mesh(mesh, amplitude, rng):
    """Copy of ``mesh`` with interior vertices moved by up to ``amplitude``
    in each coordinate (uniformly at random)."""
    from .mesh import Mesh

    p = mesh.vertices.copy()
    inner = ~mesh.boundary_vertices
    p[inner] += rng.uniform(-amplitude, amplitude, size=(int(inner.sum()), 2))
    return Mesh(p, mesh.triangles.copy())
