"""Closed-form reference solutions for the Poisson and plate studies."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.signal import convolve2d

SQ3 = math.sqrt(3.0)


@dataclass(frozen=True)
class ExactSolution:
    """Exact solution with derivatives; callables take ``(x, y)`` arrays.

    ``grad`` returns shape (..., 2) and ``hess`` shape (..., 2, 2).
    """

    name: str
    u: object
    grad: object
    hess: object
    f: object
    domain: tuple = ()
    notes: str = ""
    extra: dict = field(default_factory=dict)


class Poly2:
    """Bivariate polynomial ``sum c[i, j] x^i y^j``."""

    def __init__(self, c):
        self.c = np.atleast_2d(np.asarray(c, dtype=float))

    def __mul__(self, other):
        return Poly2(convolve2d(self.c, other.c))

    def __add__(self, other):
        a, b = self.c, other.c
        out = np.zeros((max(a.shape[0], b.shape[0]), max(a.shape[1], b.shape[1])))
        out[:a.shape[0], :a.shape[1]] += a
        out[:b.shape[0], :b.shape[1]] += b
        return Poly2(out)

    def __rmul__(self, s):
        return Poly2(s * self.c)

    def dx(self, k=1):
        return Poly2(P.polyder(self.c, k, axis=0)) if self.c.shape[0] > k else Poly2([[0.0]])

    def dy(self, k=1):
        return Poly2(P.polyder(self.c, k, axis=1)) if self.c.shape[1] > k else Poly2([[0.0]])

    def __call__(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        return P.polyval2d(x, y, self.c)

    @property
    def degree(self):
        nz = np.argwhere(np.abs(self.c) > 0)
        return int(nz.sum(axis=1).max()) if len(nz) else 0


def _linear(a, bx, by):
    """Poly2 for ``a + bx*x + by*y``."""
    c = np.zeros((2, 2))
    c[0, 0], c[1, 0], c[0, 1] = a, bx, by
    return Poly2(c)


def polynomial_solution(u, name="polynomial", domain=()):
    """Wrap a :class:`Poly2` as an :class:`ExactSolution` with ``f = Laplace^2 u``."""
    ux, uy = u.dx(), u.dy()
    uxx, uxy, uyy = ux.dx(), ux.dy(), uy.dy()
    bil = uxx.dx(2) + 2.0 * uxx.dy(2) + uyy.dy(2)

    def grad(x, y):
        return np.stack(np.broadcast_arrays(ux(x, y), uy(x, y)), axis=-1)

    def hess(x, y):
        a, b, c = np.broadcast_arrays(uxx(x, y), uxy(x, y), uyy(x, y))
        return np.stack([np.stack([a, b], -1), np.stack([b, c], -1)], -2)

    return ExactSolution(name, u, grad, hess, bil, domain,
                         extra={"poly": u, "laplacian": uxx + uyy})


def parallelogram_plate_solution():
    """Clamped plate solution on the parallelogram (0,0), (2,0), (3,√3), (1,√3).

    ``u = (y - √3x)^2 (y - √3x + 2√3)^2 y^2 (√3 - y)^2``; the four squared
    factors vanish on the four sides, so ``u`` and its normal derivative are
    zero on the boundary.
    """
    l1 = _linear(0.0, -SQ3, 1.0)
    l2 = _linear(2.0 * SQ3, -SQ3, 1.0)
    l3 = _linear(0.0, 0.0, 1.0)
    l4 = _linear(SQ3, 0.0, -1.0)
    q = l1 * l2 * l3 * l4
    sol = polynomial_solution(q * q, "parallelogram_plate",
                              ((0.0, 0.0), (2.0, 0.0), (3.0, SQ3), (1.0, SQ3)))
    # evaluate u = q^2 and its derivatives through the factors of q: the
    # monomial expansion loses ~1e-12 to cancellation near the boundary
    qx, qy = q.dx(), q.dy()
    qxx, qxy, qyy = qx.dx(), qx.dy(), qy.dy()

    def qval(x, y):
        return l1(x, y) * l2(x, y) * l3(x, y) * l4(x, y)

    def u(x, y):
        return qval(x, y) ** 2

    def grad(x, y):
        qv = qval(x, y)
        return np.stack(np.broadcast_arrays(2 * qv * qx(x, y), 2 * qv * qy(x, y)), axis=-1)

    def hess(x, y):
        qv, gx, gy = qval(x, y), qx(x, y), qy(x, y)
        a = 2 * (gx * gx + qv * qxx(x, y))
        b = 2 * (gx * gy + qv * qxy(x, y))
        c = 2 * (gy * gy + qv * qyy(x, y))
        a, b, c = np.broadcast_arrays(a, b, c)
        return np.stack([np.stack([a, b], -1), np.stack([b, c], -1)], -2)

    return replace(sol, u=u, grad=grad, hess=hess)


def sine_poisson_solution():
    """``u = sin(pi x) sin(pi y)`` on the unit square, ``f = -Laplace u = 2 pi^2 u``."""
    pi = math.pi

    def u(x, y):
        return np.sin(pi * x) * np.sin(pi * y)

    def grad(x, y):
        return np.stack([pi * np.cos(pi * x) * np.sin(pi * y),
                         pi * np.sin(pi * x) * np.cos(pi * y)], axis=-1)

    def hess(x, y):
        a = -pi**2 * np.sin(pi * x) * np.sin(pi * y)
        b = pi**2 * np.cos(pi * x) * np.cos(pi * y)
        return np.stack([np.stack([a, b], -1), np.stack([b, a], -1)], -2)

    def f(x, y):
        return 2.0 * pi**2 * u(x, y)

    return ExactSolution("sine_poisson", u, grad, hess, f,
                         ((0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)))


def zero_solution(domain=()):
    def z(x, y):
        return np.zeros(np.broadcast(np.asarray(x), np.asarray(y)).shape)

    def g(x, y):
        return np.zeros(z(x, y).shape + (2,))

    def h(x, y):
        return np.zeros(z(x, y).shape + (2, 2))

    return ExactSolution("zero", z, g, h, z, domain)
