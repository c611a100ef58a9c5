import math

import numpy as np
import pytest

from superfem.mesh import Mesh
from superfem.quadrature import (
    DEFAULT_EDGE_DEGREE,
    DEFAULT_TRIANGLE_DEGREE,
    edge_rule,
    integrate,
    triangle_rule,
)


def monomial(rule, p, q):
    xy = rule.points[:, 1:]
    return float(rule.weights @ (xy[:, 0] ** p * xy[:, 1] ** q))


@pytest.mark.parametrize("degree", range(1, 15))
def test_triangle_monomials_exact(degree):
    rule = triangle_rule(degree)
    assert rule.exactness_degree == degree
    assert rule.weights.sum() == pytest.approx(0.5, abs=1e-13)
    for p in range(degree + 1):
        for q in range(degree + 1 - p):
            exact = math.factorial(p) * math.factorial(q) / math.factorial(p + q + 2)
            assert abs(monomial(rule, p, q) - exact) <= 1e-13


def test_rules_positive_interior():
    for d in range(3, 15):
        r = triangle_rule(d)
        assert np.all(r.weights > 0)
        assert np.all(r.points >= -1e-14)


@pytest.mark.parametrize("degree", [1, 3, 9, 15])
def test_edge_rule_exact(degree):
    r = edge_rule(degree)
    for k in range(degree + 1):
        assert r.weights @ r.points**k == pytest.approx(1 / (k + 1), abs=1e-14)


def test_defaults():
    assert (DEFAULT_TRIANGLE_DEGREE, DEFAULT_EDGE_DEGREE) == (13, 9)


@pytest.mark.parametrize("bad", [0, 15, 2.5])
def test_unsupported_degree(bad):
    with pytest.raises(ValueError):
        triangle_rule(bad)


def test_affine_covariance():
    rng = np.random.default_rng(3)
    X = np.array([[0.2, -0.1], [1.7, 0.4], [0.5, 1.9]])
    m = Mesh(X, np.array([[0, 1, 2]]))
    c = rng.normal(size=(4, 4))

    def f(x, y):
        return np.polynomial.polynomial.polyval2d(x, y, c)

    # reference integral of f(A xi) |det A|
    A = np.column_stack([X[1] - X[0], X[2] - X[0]])
    r = triangle_rule(13)
    xi = r.points[:, 1:]
    phys = X[0] + xi @ A.T
    ref = abs(np.linalg.det(A)) * r.weights @ f(phys[:, 0], phys[:, 1])
    assert integrate(m, f, 13) == pytest.approx(ref, rel=1e-12)
