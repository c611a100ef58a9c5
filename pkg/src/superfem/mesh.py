"""Conforming triangular meshes: construction, file I/O and red refinement.

Edge conventions
----------------
Every edge is stored once with its vertex pair sorted.  For an interior edge
the two adjacent triangles are kept as ``(K1, K2)`` with ``K1`` the triangle of
*larger* index, and the edge normal ``n_e`` points from ``K1`` to ``K2``
(i.e. it is the outward normal of ``K1``).  On a boundary edge ``n_e`` is the
outward normal of the domain.  All edge degrees of freedom in the package use
this single global normal.

Local edge ``i`` of a triangle is the side opposite its local vertex ``i``.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

__all__ = [
    "Mesh",
    "MeshError",
    "BudgetExceeded",
    "load_mesh",
    "save_mesh",
    "generate_structured",
    "generate_piecewise_uniform",
    "uniform_refine",
    "refine_levels",
    "PARALLELOGRAM",
    "DEFAULT_MAX_ELEMENTS",
]

DEFAULT_MAX_ELEMENTS = 1_000_000


class MeshError(ValueError):
    """Raised for malformed or non-conforming mesh input."""


class BudgetExceeded(RuntimeError):
    """Raised when a refinement would exceed the element budget."""


def _readonly(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


class Mesh:
    """Immutable conforming triangulation with full edge topology.

    Parameters
    ----------
    vertices : array_like, shape (N, 2)
    triangles : array_like, shape (M, 3)
        Vertex indices (0-based), counterclockwise.
    parent : Mesh, optional
        Mesh this one was refined from (refinement lineage).
    fix_orientation : bool
        Reorient clockwise triangles instead of rejecting them.
    """

    def __init__(self, vertices, triangles, parent=None, fix_orientation=False,
                 _validated=False):
        p = np.asarray(vertices, dtype=float)
        t = np.asarray(triangles, dtype=np.int64)
        if p.ndim != 2 or p.shape[1] != 2:
            raise MeshError("vertices must have shape (N, 2)")
        if t.ndim != 2 or t.shape[1] != 3:
            raise MeshError("triangles must have shape (M, 3)")
        if len(t) == 0:
            raise MeshError("empty mesh")
        if t.min() < 0 or t.max() >= len(p):
            raise MeshError("triangle references a nonexistent vertex")

        if not _validated:
            _, counts = np.unique(p, axis=0, return_counts=True)
            if np.any(counts > 1):
                raise MeshError("duplicate vertex")
            if np.any(np.bincount(t.ravel(), minlength=len(p)) == 0):
                raise MeshError("vertex not used by any triangle")

        area2 = _signed_area2(p, t)
        if np.any(area2 < 0):
            if not fix_orientation:
                k = int(np.flatnonzero(area2 < 0)[0])
                raise MeshError(f"inverted triangle {k} (clockwise orientation)")
            t = t.copy()
            flip = area2 < 0
            t[flip] = t[flip][:, [0, 2, 1]]
            area2 = np.abs(area2)
        diam = _diameters(p, t)
        if np.any(0.5 * area2 < 1e-14 * diam**2):
            k = int(np.flatnonzero(0.5 * area2 < 1e-14 * diam**2)[0])
            raise MeshError(f"degenerate triangle {k}")

        self.vertices = _readonly(p)
        self.triangles = _readonly(t)
        self.areas = _readonly(0.5 * area2)
        self.diameters = _readonly(diam)
        self.parent = parent
        self._build_edges()
        if not _validated:
            self._check_hanging_nodes()

    # ------------------------------------------------------------------
    def _build_edges(self):
        p, t = self.vertices, self.triangles
        M = len(t)
        # local edge i is opposite local vertex i
        a = t[:, [1, 2, 0]]
        b = t[:, [2, 0, 1]]
        pairs = np.sort(np.stack([a, b], axis=-1).reshape(-1, 2), axis=1)
        edges, inverse, counts = np.unique(pairs, axis=0, return_inverse=True,
                                           return_counts=True)
        inverse = inverse.reshape(-1)
        if np.any(counts > 2):
            raise MeshError("non-manifold edge shared by more than two triangles")
        tri_edges = inverse.reshape(M, 3)
        owner = np.repeat(np.arange(M), 3)

        E = len(edges)
        et = np.full((E, 2), -1, dtype=np.int64)
        # K1 = larger triangle index: a stable sort by descending owner keeps
        # the first occurrence per edge as the larger index
        order = np.lexsort((-owner, inverse))
        first = np.ones(len(order), dtype=bool)
        first[1:] = inverse[order][1:] != inverse[order][:-1]
        et[inverse[order][first], 0] = owner[order][first]
        second = ~first
        et[inverse[order][second], 1] = owner[order][second]

        k1 = et[:, 0]
        # locate the local index of each edge in K1
        loc = (tri_edges[k1] == np.arange(E)[:, None]).argmax(axis=1)
        va = p[t[k1, (loc + 1) % 3]]
        vb = p[t[k1, (loc + 2) % 3]]
        d = vb - va
        length = np.hypot(d[:, 0], d[:, 1])
        normals = np.stack([d[:, 1], -d[:, 0]], axis=1) / length[:, None]

        sign = np.where(owner.reshape(M, 3) == k1[tri_edges], 1, -1)
        boundary = et[:, 1] < 0
        bverts = np.zeros(len(p), dtype=bool)
        bverts[edges[boundary].ravel()] = True

        self.edges = _readonly(edges)
        self.edge_triangles = _readonly(et)
        self.tri_edges = _readonly(tri_edges)
        self.tri_edge_sign = _readonly(sign.astype(np.int64))
        self.edge_normals = _readonly(normals)
        self.edge_lengths = _readonly(length)
        self.edge_midpoints = _readonly(0.5 * (p[edges[:, 0]] + p[edges[:, 1]]))
        self.boundary_edges = _readonly(boundary)
        self.boundary_vertices = _readonly(bverts)

    def _check_hanging_nodes(self):
        be = self.edges[self.boundary_edges]
        bv = np.flatnonzero(self.boundary_vertices)
        if len(be) == 0:
            return
        tree = cKDTree(self.vertices[bv])
        mids = 0.5 * (self.vertices[be[:, 0]] + self.vertices[be[:, 1]])
        half = 0.5 * np.hypot(*(self.vertices[be[:, 1]] - self.vertices[be[:, 0]]).T)
        for k, cand in enumerate(tree.query_ball_point(mids, half * (1 - 1e-9))):
            for j in cand:
                v = bv[j]
                if v in be[k]:
                    continue
                a, b = self.vertices[be[k]]
                cross = (b[0] - a[0]) * (self.vertices[v, 1] - a[1]) - \
                    (b[1] - a[1]) * (self.vertices[v, 0] - a[0])
                if abs(cross) <= 1e-10 * half[k] ** 2:
                    raise MeshError(f"dangling edge: hanging node {v} on edge "
                                    f"{tuple(be[k])}")

    # ------------------------------------------------------------------
    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def h_max(self):
        """Maximum element diameter ``h``."""
        return float(self.diameters.max())

    @property
    def interior_edges(self):
        return np.flatnonzero(~self.boundary_edges)

    @property
    def level(self):
        return 0 if self.parent is None else self.parent.level + 1

    def lineage(self):
        """Meshes from the coarsest ancestor down to ``self``."""
        out, m = [], self
        while m is not None:
            out.append(m)
            m = m.parent
        return out[::-1]

    def element_vertices(self):
        """Vertex coordinates per triangle, shape (M, 3, 2)."""
        return self.vertices[self.triangles]

    def boundary_loop_area(self):
        """Area enclosed by the boundary edges (shoelace over oriented edges)."""
        k = self.edge_triangles[self.boundary_edges, 0]
        eidx = np.flatnonzero(self.boundary_edges)
        loc = (self.tri_edges[k] == eidx[:, None]).argmax(axis=1)
        a = self.vertices[self.triangles[k, (loc + 1) % 3]]
        b = self.vertices[self.triangles[k, (loc + 2) % 3]]
        return 0.5 * float(np.sum(a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]))

    def __repr__(self):
        return (f"Mesh(vertices={self.n_vertices}, triangles={self.n_triangles}, "
                f"edges={self.n_edges}, h={self.h_max:.4g})")


def _signed_area2(p, t):
    a, b, c = p[t[:, 0]], p[t[:, 1]], p[t[:, 2]]
    return (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - \
        (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])


def _diameters(p, t):
    x = p[t]
    d = np.stack([x[:, 1] - x[:, 2], x[:, 2] - x[:, 0], x[:, 0] - x[:, 1]], axis=1)
    return np.sqrt((d**2).sum(axis=2)).max(axis=1)


# ----------------------------------------------------------------------
# File I/O

def load_mesh(path, fix_orientation=False):
    """Read a mesh from the line-oriented text format.

    The file holds a ``vertices N`` header followed by ``N`` lines ``x y`` and
    a ``triangles M`` header followed by ``M`` lines ``i j k`` (0-based, CCW).
    Text after ``#`` is ignored.
    """
    lines = []
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        s = raw.split("#", 1)[0].strip()
        if s:
            lines.append(s)
    pos = 0

    def block(name, width, conv):
        nonlocal pos
        if pos >= len(lines):
            raise MeshError(f"parse error: missing '{name}' section")
        head = lines[pos].split()
        if len(head) != 2 or head[0] != name:
            raise MeshError(f"parse error: expected '{name} <count>', got {lines[pos]!r}")
        try:
            n = int(head[1])
        except ValueError:
            raise MeshError(f"parse error: bad count in {lines[pos]!r}") from None
        rows = lines[pos + 1:pos + 1 + n]
        if len(rows) != n:
            raise MeshError(f"parse error: expected {n} {name} lines, got {len(rows)}")
        out = []
        for r in rows:
            parts = r.split()
            if len(parts) != width:
                raise MeshError(f"parse error: bad {name} line {r!r}")
            try:
                out.append([conv(v) for v in parts])
            except ValueError:
                raise MeshError(f"parse error: bad {name} line {r!r}") from None
        pos += n + 1
        return out

    verts = block("vertices", 2, float)
    tris = block("triangles", 3, int)
    if pos != len(lines):
        raise MeshError(f"parse error: trailing content {lines[pos]!r}")
    return Mesh(np.array(verts, dtype=float).reshape(-1, 2),
                np.array(tris, dtype=np.int64).reshape(-1, 3),
                fix_orientation=fix_orientation)


def save_mesh(mesh, path):
    """Write ``mesh`` in the text format read by :func:`load_mesh`."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"vertices {mesh.n_vertices}\n")
        for x, y in mesh.vertices.tolist():
            fh.write(f"{x!r} {y!r}\n")
        fh.write(f"triangles {mesh.n_triangles}\n")
        for i, j, k in mesh.triangles.tolist():
            fh.write(f"{i} {j} {k}\n")


# ----------------------------------------------------------------------
# Generation and refinement

def _grid(corner, span1, span2, n):
    corner = np.asarray(corner, float)
    s1 = np.asarray(span1, float)
    s2 = np.asarray(span2, float)
    cross = s1[0] * s2[1] - s1[1] * s2[0]
    if abs(cross) <= 1e-14 * (np.dot(s1, s1) + np.dot(s2, s2)):
        raise MeshError("degenerate spans: span1 and span2 are parallel")
    if int(n) != n or n < 1:
        raise MeshError("n must be a positive integer")
    n = int(n)
    i, j = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="xy")
    pts = corner + (i.ravel()[:, None] / n) * s1 + (j.ravel()[:, None] / n) * s2
    return pts, n, cross


def _cell_triangles(n, cross, diagonal):
    """Triangles of an n-by-n cell grid; ``diagonal(ci, cj)`` picks the split."""
    tris = []
    for cj in range(n):
        for ci in range(n):
            p00 = cj * (n + 1) + ci
            p10, p01, p11 = p00 + 1, p00 + n + 1, p00 + n + 2
            if diagonal(ci, cj) == "anti":
                pair = [(p00, p10, p01), (p10, p11, p01)]
            else:
                pair = [(p00, p10, p11), (p00, p11, p01)]
            tris.extend(pair)
    t = np.array(tris, dtype=np.int64)
    if cross < 0:
        t = t[:, [0, 2, 1]]
    return t


def generate_structured(corner, span1, span2, n, diagonal="anti"):
    """Uniform triangulation of the parallelogram ``corner + s*span1 + t*span2``.

    The parallelogram is cut into ``n x n`` congruent cells, each split along
    the same diagonal (``"anti"``: from ``corner + span1/n`` to
    ``corner + span2/n``; ``"main"``: the other one), giving ``2 n**2``
    triangles that are translates of two shapes.
    """
    pts, n, cross = _grid(corner, span1, span2, n)
    if diagonal not in ("anti", "main"):
        raise MeshError("diagonal must be 'anti' or 'main'")
    t = _cell_triangles(n, cross, lambda ci, cj: diagonal)
    return Mesh(pts, t, _validated=True)


def generate_piecewise_uniform(corner, span1, span2, n, split=0.5):
    """Two uniform patches glued along a line parallel to ``span2``.

    Cells with ``ci < split * n`` use the anti-diagonal, the rest the main
    diagonal.  Each patch is uniform; across the interface and where it meets
    the boundary neighbouring triangles do not form parallelograms.
    """
    pts, n, cross = _grid(corner, span1, span2, n)
    cut = int(round(split * n))
    t = _cell_triangles(n, cross, lambda ci, cj: "anti" if ci < cut else "main")
    return Mesh(pts, t, _validated=True)


def uniform_refine(m, max_elements=DEFAULT_MAX_ELEMENTS):
    """Red refinement: split every triangle into four through edge midpoints.

    Parent vertex indices are kept; the midpoint of edge ``e`` becomes vertex
    ``N + e``.  Child ``4k + j`` of triangle ``k`` is the corner child at local
    vertex ``j`` for ``j < 3`` and the central child for ``j = 3``.
    """
    M = m.n_triangles
    if 4 * M > max_elements:
        raise BudgetExceeded(f"refinement to {4 * M} elements exceeds budget "
                             f"of {max_elements}")
    N = m.n_vertices
    pts = np.vstack([m.vertices, m.edge_midpoints])
    v = m.triangles
    me = N + m.tri_edges  # midpoint of local edge i (opposite vertex i)
    children = np.stack([
        np.stack([v[:, 0], me[:, 2], me[:, 1]], axis=1),
        np.stack([me[:, 2], v[:, 1], me[:, 0]], axis=1),
        np.stack([me[:, 1], me[:, 0], v[:, 2]], axis=1),
        np.stack([me[:, 0], me[:, 1], me[:, 2]], axis=1),
    ], axis=1).reshape(-1, 3)
    return Mesh(pts, children, parent=m, _validated=True)


def refine_levels(m, levels, max_elements=DEFAULT_MAX_ELEMENTS):
    """Return ``[m, refine(m), ...]`` with ``levels`` meshes in total."""
    if levels < 1:
        raise ValueError("levels must be >= 1")
    final = m.n_triangles * 4 ** (levels - 1)
    if final > max_elements:
        raise BudgetExceeded(f"{levels} levels need {final} elements, budget is "
                             f"{max_elements}")
    out = [m]
    for _ in range(levels - 1):
        out.append(uniform_refine(out[-1], max_elements))
    return out


# Paper test domain: parallelogram with corners (0,0), (2,0), (3,√3), (1,√3).
PARALLELOGRAM = ((0.0, 0.0), (2.0, 0.0), (1.0, math.sqrt(3.0)))
