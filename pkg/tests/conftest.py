import math

import numpy as np
import pytest

from superfem.mesh import PARALLELOGRAM, Mesh, generate_piecewise_uniform, generate_structured

SQ3 = math.sqrt(3.0)
UNIT_SQUARE = ((0.0, 0.0), (1.0, 0.0), (0.0, 1.0))


@pytest.fixture
def square2():
    """Unit square split by the diagonal (0,0)-(1,1)."""
    return Mesh(np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]),
                np.array([[0, 1, 2], [0, 2, 3]]))


@pytest.fixture
def para4():
    return generate_structured(*PARALLELOGRAM, 4)


@pytest.fixture
def piecewise4():
    return generate_piecewise_uniform(*PARALLELOGRAM, 4)


def random_mesh(seed, n=5):
    """Structured unit-square mesh with jittered interior vertices."""
    from superfem.diagnostics import jitter_mesh

    m = generate_structured(*UNIT_SQUARE, n, diagonal="main")
    return jitter_mesh(m, 0.25 / n, np.random.default_rng(seed))


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("tests.test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(mod.TITLES):
        checks = mod.RESULTS.get(n)
        if not checks:
            tr.write_line(f"criterion {n}: NOT RUN  {mod.TITLES[n]}")
            continue
        status = "PASS" if all(ok for _, ok, _ in checks) else "FAIL"
        tr.write_line(f"criterion {n}: {status}  {mod.TITLES[n]}")
        for label, ok, detail in checks:
            tr.write_line(f"    [{'pass' if ok else 'FAIL'}] {label}: {detail}")
