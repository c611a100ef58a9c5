"""Quadrature on the reference triangle and on the unit interval.

Triangle rules live on the reference triangle ``(0,0), (1,0), (0,1)`` and are
given in barycentric coordinates ``(l0, l1, l2)`` with weights summing to its
area ``1/2``.  Edge rules live on ``[0, 1]`` with weights summing to ``1``.

Degrees 1 and 2 are the centroid and edge-midpoint rules.  Degrees 3 to 14 use
the fully symmetric Xiao-Gimbutas tables shipped with :mod:`modepy`
(positive weights, interior nodes, double precision).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

DEFAULT_TRIANGLE_DEGREE = 13
DEFAULT_EDGE_DEGREE = 9
MAX_TRIANGLE_DEGREE = 14


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray
    weights: np.ndarray
    exactness_degree: int

    def __len__(self):
        return len(self.weights)


def _freeze(*arrays):
    for a in arrays:
        a.setflags(write=False)


@lru_cache(maxsize=None)
def triangle_rule(degree=DEFAULT_TRIANGLE_DEGREE):
    """Symmetric rule on the reference triangle exact for degree ``degree``."""
    if int(degree) != degree or not 1 <= degree <= MAX_TRIANGLE_DEGREE:
        raise ValueError(f"unsupported triangle quadrature degree {degree!r}; "
                         f"expected 1..{MAX_TRIANGLE_DEGREE}")
    degree = int(degree)
    if degree == 1:
        bary = np.full((1, 3), 1.0 / 3.0)
        w = np.array([0.5])
    elif degree == 2:
        bary = np.array([[0.0, 0.5, 0.5], [0.5, 0.0, 0.5], [0.5, 0.5, 0.0]])
        w = np.full(3, 1.0 / 6.0)
    else:
        import modepy

        q = modepy.XiaoGimbutasSimplexQuadrature(degree, 2)
        # modepy uses the biunit triangle (-1,-1), (1,-1), (-1,1) of area 2
        xy = (np.asarray(q.nodes).T + 1.0) / 2.0
        bary = np.column_stack([1.0 - xy.sum(axis=1), xy])
        w = np.asarray(q.weights, dtype=float) / 4.0
    bary = np.ascontiguousarray(bary, dtype=float)
    w = np.ascontiguousarray(w, dtype=float)
    _freeze(bary, w)
    return QuadratureRule(bary, w, degree)


@lru_cache(maxsize=None)
def edge_rule(degree=DEFAULT_EDGE_DEGREE):
    """Gauss-Legendre rule on ``[0, 1]`` exact for degree ``degree``."""
    if int(degree) != degree or degree < 1:
        raise ValueError(f"unsupported edge quadrature degree {degree!r}")
    npts = (int(degree) + 2) // 2
    x, w = np.polynomial.legendre.leggauss(npts)
    t = np.ascontiguousarray((x + 1.0) / 2.0)
    w = np.ascontiguousarray(w / 2.0)
    _freeze(t, w)
    return QuadratureRule(t, w, 2 * npts - 1)


def physical_points(mesh, rule):
    """Map barycentric rule points onto every triangle: shape (M, nq, 2)."""
    X = mesh.element_vertices()
    return np.einsum("qi,mid->mqd", rule.points, X)


def physical_weights(mesh, rule):
    """Quadrature weights scaled by the affine Jacobian: shape (M, nq)."""
    return 2.0 * mesh.areas[:, None] * rule.weights[None, :]


def integrate(mesh, fn, degree=DEFAULT_TRIANGLE_DEGREE):
    """Per-element integrals of ``fn(x, y)`` (returns shape (M, ...))."""
    rule = triangle_rule(degree)
    pts = physical_points(mesh, rule)
    vals = np.asarray(fn(pts[..., 0], pts[..., 1]), dtype=float)
    w = physical_weights(mesh, rule)
    return np.einsum("mq,mq...->m...", w, vals)
