"""Multi-level convergence studies, empirical orders and report files."""

from __future__ import annotations

import csv
import io
import logging
import math
import pickle
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from importlib import resources
from pathlib import Path

from .exact import parallelogram_plate_solution, sine_poisson_solution
from .mesh import (
    DEFAULT_MAX_ELEMENTS,
    PARALLELOGRAM,
    BudgetExceeded,
    generate_piecewise_uniform,
    generate_structured,
    load_mesh,
    uniform_refine,
)
from .problems import PLATE_METHODS, POISSON_METHODS, CaseResult, run_plate_case, run_poisson_case
from .quadrature import DEFAULT_EDGE_DEGREE, DEFAULT_TRIANGLE_DEGREE

logger = logging.getLogger(__name__)

__all__ = ["eoc", "ConvergenceTable", "StudyConfig", "run_study", "initial_mesh",
           "write_csv", "read_csv", "format_table", "CSV_HEADER", "MESH_KINDS"]

CSV_HEADER = ["level", "h", "dofs", "err_primal", "rate_primal", "err_gap", "rate_gap",
              "err_post", "rate_post", "residual", "seconds"]
COLUMNS = ("primal", "gap", "post")
MESH_KINDS = ("uniform", "piecewise", "delaunay")
UNIT_SQUARE = ((0.0, 0.0), (1.0, 0.0), (0.0, 1.0))


def eoc(e_coarse, e_fine):
    """Empirical order ``log2(e_coarse / e_fine)`` under mesh halving."""
    if not (e_coarse > 0 and e_fine > 0):
        raise ValueError(f"errors must be positive, got {e_coarse!r} and {e_fine!r}")
    return math.log2(e_coarse) - math.log2(e_fine)


@dataclass
class ConvergenceTable:
    """Rows of :class:`CaseResult` ordered from coarse to fine."""

    problem: str
    rows: list = field(default_factory=list)

    def errors(self, column):
        return [getattr(r, f"error_{column}") for r in self.rows]

    def rates(self, column):
        """EOC between consecutive rows; ``None`` for the first row or gaps."""
        errs = self.errors(column)
        out = [None]
        for a, b in zip(errs, errs[1:]):
            out.append(eoc(a, b) if a and b else None)
        return out

    def final_rate(self, column):
        return self.rates(column)[-1]

    def rate_of(self, values):
        """EOC sequence for an arbitrary per-row error list."""
        return [None] + [eoc(a, b) for a, b in zip(values, values[1:])]

    def records(self):
        """CSV-ready dicts (values kept as Python numbers or ``None``)."""
        rates = {c: self.rates(c) for c in COLUMNS}
        out = []
        for i, r in enumerate(self.rows):
            out.append({
                "level": r.level, "h": r.h, "dofs": r.dofs,
                "err_primal": r.error_primal, "rate_primal": rates["primal"][i],
                "err_gap": r.error_gap, "rate_gap": rates["gap"][i],
                "err_post": r.error_post, "rate_post": rates["post"][i],
                "residual": r.residual, "seconds": r.seconds,
            })
        return out


def _fmt_csv(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(table, path=None):
    """Write ``table`` as CSV (full ``repr`` precision); returns the text."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for rec in table.records():
        w.writerow([_fmt_csv(rec[k]) for k in CSV_HEADER])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def read_csv(source, problem=""):
    """Parse a CSV written by :func:`write_csv` (path or text) back into a table."""
    text = source
    if not (isinstance(source, str) and "\n" in source):
        text = Path(source).read_text(encoding="utf-8")
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames != CSV_HEADER:
        raise ValueError(f"unexpected CSV header {reader.fieldnames}")

    def num(s, cast=float):
        return None if s == "" else cast(s)

    table = ConvergenceTable(problem)
    for rec in reader:
        table.rows.append(CaseResult(
            problem=problem, level=int(rec["level"]), h=float(rec["h"]), dofs=int(rec["dofs"]),
            error_primal=num(rec["err_primal"]), error_gap=num(rec["err_gap"]),
            error_post=num(rec["err_post"]), residual=float(rec["residual"]),
            seconds=num(rec["seconds"])))
    return table


def format_table(table):
    """Aligned text table: errors with 6 significant digits, rates with 4 decimals."""
    head = ["level", "h", "dofs", "err_primal", "rate", "err_gap", "rate", "err_post", "rate",
            "residual"]
    timed = any(r.seconds is not None for r in table.rows)
    if timed:
        head.append("seconds")
    lines = []
    for rec in table.records():
        row = [str(rec["level"]), f"{rec['h']:.6g}", str(rec["dofs"])]
        for c in COLUMNS:
            e, r = rec[f"err_{c}"], rec[f"rate_{c}"]
            row.append("" if e is None else f"{e:.6g}")
            row.append("" if r is None else f"{r:.4f}")
        row.append(f"{rec['residual']:.2e}")
        if timed:
            row.append("" if rec["seconds"] is None else f"{rec['seconds']:.2f}")
        lines.append(row)
    widths = [max(len(h), *(len(r[i]) for r in lines)) if lines else len(h)
              for i, h in enumerate(head)]
    out = ["  ".join(h.rjust(w) for h, w in zip(head, widths))]
    out += ["  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in lines]
    return "\n".join(out)


# ----------------------------------------------------------------------

@dataclass
class StudyConfig:
    """Everything that determines a study; mirrored by the CLI flags."""

    problem: str = "plate"
    methods: tuple = ()
    mesh: str | None = None
    mesh_kind: str = "uniform"
    structured: int = 2
    levels: int = 7
    postprocess: bool = True
    structural: bool = False
    quad_degree: int = DEFAULT_TRIANGLE_DEGREE
    edge_degree: int = DEFAULT_EDGE_DEGREE
    max_elements: int = DEFAULT_MAX_ELEMENTS
    fix_orientation: bool = False
    iterative: bool = False
    timing: bool = False
    jobs: int = 1
    report: str | None = None

    def __post_init__(self):
        if self.problem not in ("poisson", "plate"):
            raise ValueError(f"unknown problem {self.problem!r}")
        allowed = POISSON_METHODS if self.problem == "poisson" else PLATE_METHODS
        methods = tuple(m.replace("-", "_") for m in (self.methods or allowed))
        bad = [m for m in methods if m not in allowed]
        if bad:
            raise ValueError(f"method(s) {bad} not available for {self.problem}")
        self.methods = methods
        if self.mesh_kind not in MESH_KINDS:
            raise ValueError(f"unknown mesh kind {self.mesh_kind!r}")
        if self.levels < 1:
            raise ValueError("levels must be at least 1")
        if self.structured < 1:
            raise ValueError("structured n must be at least 1")

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]


def initial_mesh(cfg):
    """Level-1 mesh for ``cfg``: a file, or a generated/shipped mesh."""
    if cfg.mesh:
        return load_mesh(cfg.mesh, fix_orientation=cfg.fix_orientation)
    spans = PARALLELOGRAM if cfg.problem == "plate" else UNIT_SQUARE
    if cfg.mesh_kind == "uniform":
        return generate_structured(*spans, cfg.structured)
    if cfg.mesh_kind == "piecewise":
        return generate_piecewise_uniform(*spans, cfg.structured)
    name = "delaunay_parallelogram.mesh" if cfg.problem == "plate" else "delaunay_square.mesh"
    with resources.as_file(resources.files("superfem") / "data" / name) as p:
        return load_mesh(p)


def default_exact(problem):
    return parallelogram_plate_solution() if problem == "plate" else sine_poisson_solution()


def _run_case(args):
    mesh, exact, cfg, level = args
    if exact is None:
        exact = default_exact(cfg.problem)
    runner = run_plate_case if cfg.problem == "plate" else run_poisson_case
    return runner(mesh, exact, cfg.methods, level=level, degree=cfg.quad_degree,
                  edge_degree=cfg.edge_degree, postprocess=cfg.postprocess,
                  structural=cfg.structural, iterative=cfg.iterative)


def run_study(cfg, exact=None, mesh=None):
    """Refine ``cfg.levels - 1`` times and run one case per level.

    The element budget is checked before any solve.  ``seconds`` is only
    recorded when ``cfg.timing`` is set, which keeps CSV output
    reproducible byte for byte.
    """
    m = mesh if mesh is not None else initial_mesh(cfg)
    final = m.n_triangles * 4 ** (cfg.levels - 1)
    if final > cfg.max_elements:
        raise BudgetExceeded(f"{cfg.levels} levels need {final} elements, budget is "
                             f"{cfg.max_elements}")
    meshes = [m]
    for _ in range(cfg.levels - 1):
        meshes.append(uniform_refine(meshes[-1], cfg.max_elements))
    jobs = [(mm, exact, cfg, i + 1) for i, mm in enumerate(meshes)]
    parallel = cfg.jobs > 1 and len(jobs) > 1
    if parallel and exact is not None:
        # the default solutions are rebuilt in each worker; custom ones must pickle
        try:
            pickle.dumps(exact)
        except (pickle.PicklingError, AttributeError, TypeError):
            logger.warning("exact solution cannot be sent to worker processes; solving serially")
            parallel = False
    if parallel:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as ex:
            rows = list(ex.map(_run_case, jobs))
    else:
        rows = []
        for j in jobs:
            rows.append(_run_case(j))
            r = rows[-1]
            logger.info("level %d: %d elements, errors %s / %s / %s", r.level,
                        meshes[r.level - 1].n_triangles, r.error_primal, r.error_gap,
                        r.error_post)
    if not cfg.timing:
        rows = [replace(r, seconds=None) for r in rows]
    table = ConvergenceTable(cfg.problem, rows)
    if cfg.report:
        write_csv(table, cfg.report)
        Path(cfg.report).with_suffix(".txt").write_text(format_table(table) + "\n",
                                                        encoding="utf-8")
    return table
