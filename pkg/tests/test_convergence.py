import math

import pytest

from superfem.convergence import (
    CSV_HEADER,
    ConvergenceTable,
    StudyConfig,
    eoc,
    format_table,
    read_csv,
    run_study,
    write_csv,
)
from superfem.mesh import BudgetExceeded
from superfem.problems import CaseResult


@pytest.mark.parametrize("a, b, rate", [(40.1923, 23.6110, 0.7675),
                                        (21.4424, 5.8356, 1.8775)])
def test_eoc_examples(a, b, rate):
    assert eoc(a, b) == pytest.approx(rate, abs=1e-4)


def test_eoc_properties():
    assert eoc(3.0, 0.75) == 2.0
    assert eoc(2.0, 5.0) == -eoc(5.0, 2.0)
    with pytest.raises(ValueError):
        eoc(0.0, 1.0)
    with pytest.raises(ValueError):
        eoc(1.0, -1.0)


def _table():
    rows = [CaseResult("plate", k + 1, 0.5**k, 10 * 4**k, 1.0 / 2**k, 1.0 / 4**k, 1.0 / 4**k,
                       1e-14, None) for k in range(3)]
    return ConvergenceTable("plate", rows)


def test_rates_and_missing_columns():
    t = _table()
    assert t.rates("primal") == [None, 1.0, 1.0]
    assert t.final_rate("gap") == 2.0
    t.rows[0].error_post = None
    assert t.rates("post") == [None, None, 2.0]
    one = ConvergenceTable("plate", t.rows[:1])
    assert one.rates("gap") == [None]


def test_csv_roundtrip(tmp_path):
    t = _table()
    text = write_csv(t, tmp_path / "t.csv")
    assert text.splitlines()[0] == ",".join(CSV_HEADER)
    assert text.splitlines()[1].endswith(",")  # blank seconds without --timing
    back = read_csv(tmp_path / "t.csv", "plate")
    assert write_csv(back) == text
    assert back.rows[2].error_gap == t.rows[2].error_gap


def test_read_csv_rejects_bad_header():
    with pytest.raises(ValueError):
        read_csv("a,b\n1,2\n")


def test_format_table():
    lines = format_table(_table()).splitlines()
    assert len(lines) == 4
    assert "2.0000" in lines[-1]
    assert "seconds" not in lines[0]


def test_config_validation():
    assert StudyConfig(methods=("morley-modified",)).methods == ("morley_modified",)
    assert StudyConfig(problem="poisson").methods == ("cr", "rt")
    for bad in (dict(problem="heat"), dict(methods=("cr",)), dict(levels=0),
                dict(mesh_kind="x"), dict(structured=0)):
        with pytest.raises(ValueError):
            StudyConfig(**bad)


def test_study_budget_checked_first():
    with pytest.raises(BudgetExceeded):
        run_study(StudyConfig(levels=8, max_elements=10_000))


def test_small_studies(tmp_path):
    t = run_study(StudyConfig(problem="poisson", structured=4, levels=3,
                              report=str(tmp_path / "p.csv")))
    assert len(t.rows) == 3
    assert (tmp_path / "p.txt").exists()
    assert all(r.seconds is None for r in t.rows)
    t2 = run_study(StudyConfig(problem="poisson", structured=4, levels=3, jobs=2, timing=True))
    assert [r.error_primal for r in t2.rows] == [r.error_primal for r in t.rows]
    assert all(r.seconds >= 0 for r in t2.rows)


@pytest.mark.parametrize("kind", ["piecewise", "delaunay"])
def test_mesh_kinds(kind):
    t = run_study(StudyConfig(mesh_kind=kind, levels=2, methods=("morley",)))
    assert all(math.isfinite(e) for e in t.errors("primal"))
