import math

import numpy as np

from superfem.exact import parallelogram_plate_solution, sine_poisson_solution

SQ3 = math.sqrt(3.0)


def test_plate_boundary_values():
    sol = parallelogram_plate_solution()
    corners = np.array(sol.domain + (sol.domain[0],))
    t = np.linspace(0, 1, 5, endpoint=False)
    pts = np.concatenate([a + t[:, None] * (b - a) for a, b in zip(corners, corners[1:])])
    assert len(pts) == 20
    assert np.abs(sol.u(pts[:, 0], pts[:, 1])).max() <= 1e-12
    assert np.abs(sol.grad(pts[:, 0], pts[:, 1])).max() <= 1e-12
    assert sol.u(1.0, SQ3 / 2) > 0


def test_plate_load_matches_finite_differences():
    sol = parallelogram_plate_solution()
    rng = np.random.default_rng(0)
    h = 1e-2
    # 4th-order centred stencils for the fourth and mixed derivatives
    d2 = np.array([-1 / 12, 4 / 3, -5 / 2, 4 / 3, -1 / 12])
    d4 = np.array([-1 / 6, 2, -13 / 2, 28 / 3, -13 / 2, 2, -1 / 6])
    for _ in range(5):
        s, r = rng.uniform(0.2, 0.8, 2)
        x, y = 2 * s + r, SQ3 * r
        k4 = np.arange(-3, 4) * h
        k2 = np.arange(-2, 3) * h
        uxxxx = d4 @ sol.u(x + k4, y) / h**4
        uyyyy = d4 @ sol.u(x, y + k4) / h**4
        grid = sol.u(x + k2[:, None], y + k2[None, :])
        uxxyy = d2 @ grid @ d2 / h**4
        fd = uxxxx + 2 * uxxyy + uyyyy
        assert abs(fd - sol.f(x, y)) <= 1e-6 * abs(sol.f(x, y))


def test_polynomial_derivatives_consistent():
    sol = parallelogram_plate_solution()
    x, y, h = 1.3, 0.7, 1e-6
    g = sol.grad(x, y)
    assert abs(g[0] - (sol.u(x + h, y) - sol.u(x - h, y)) / (2 * h)) <= 1e-6
    H = sol.hess(x, y)
    assert abs(H[0, 1] - H[1, 0]) == 0
    assert abs(H[1, 1] - (sol.grad(x, y + h)[1] - sol.grad(x, y - h)[1]) / (2 * h)) <= 1e-5


def test_sine_solution():
    sol = sine_poisson_solution()
    x, y = 0.3, 0.6
    H = sol.hess(x, y)
    assert abs(-(H[0, 0] + H[1, 1]) - sol.f(x, y)) <= 1e-12
