"""Command line interface: ``superfem solve`` and ``superfem diagnose``.

Exit codes: 0 success, 1 input error, 2 solver failure, 3 element budget
exceeded.  ``--config FILE`` reads ``key = value`` lines whose keys are the
long flag names (``-`` or ``_``); flags given on the command line win.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .assembly import (
    SolverError,
    assemble_cr_poisson,
    assemble_hhj_mixed,
    assemble_morley,
    assemble_rt_mixed,
)
from .convergence import (
    MESH_KINDS,
    StudyConfig,
    default_exact,
    format_table,
    initial_mesh,
    run_study,
)
from .diagnostics import classify
from .mesh import DEFAULT_MAX_ELEMENTS, BudgetExceeded, MeshError, refine_levels
from .postprocess import HypothesisError
from .problems import EquivalenceError
from .quadrature import DEFAULT_EDGE_DEGREE, DEFAULT_TRIANGLE_DEGREE

EXIT_OK, EXIT_INPUT, EXIT_SOLVER, EXIT_BUDGET = 0, 1, 2, 3


class InputError(ValueError):
    """Bad command line or config input."""


def _methods(values):
    out = []
    for v in values or []:
        out.extend(s.strip() for s in v.split(",") if s.strip())
    return tuple(out)


def _add_mesh_args(p, default_levels):
    src = p.add_mutually_exclusive_group()
    src.add_argument("--mesh", help="mesh file (vertices/triangles text format)")
    src.add_argument("--structured", type=int, metavar="N",
                     help="structured N x N initial mesh (default 2)")
    p.add_argument("--mesh-kind", choices=MESH_KINDS, default="uniform",
                   help="generated initial mesh when --mesh is absent")
    p.add_argument("--levels", type=int, default=default_levels,
                   help="number of mesh levels, the initial mesh being level 1")
    p.add_argument("--fix-orientation", action="store_true",
                   help="reorient clockwise triangles instead of rejecting them")
    p.add_argument("--max-elements", type=int, default=DEFAULT_MAX_ELEMENTS)
    p.add_argument("--alpha-threshold", type=float, default=1.0,
                   help="E1 iff delta_e <= h_e**A (default 1)")


def build_parser():
    parser = argparse.ArgumentParser(prog="superfem", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="key = value file mirroring the flags")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="run a convergence study")
    s.add_argument("--problem", choices=("poisson", "plate"), default="plate")
    s.add_argument("--method", action="append", metavar="M",
                   help="cr, rt, morley, morley-modified, hhj (repeat or comma list; "
                        "default: all for the problem)")
    _add_mesh_args(s, 7)
    s.add_argument("--postprocess", action=argparse.BooleanOptionalAction, default=True,
                   help="compute the K_h post-processed error column")
    s.add_argument("--structural", action="store_true",
                   help="also compute divergence, Helmholtz and equivalence residuals")
    s.add_argument("--report", metavar="CSV", help="write CSV (and a .txt table beside it)")
    s.add_argument("--quad-degree", type=int, default=DEFAULT_TRIANGLE_DEGREE)
    s.add_argument("--edge-degree", type=int, default=DEFAULT_EDGE_DEGREE)
    s.add_argument("--iterative", action="store_true", help="CG / MINRES instead of LU")
    s.add_argument("--timing", action="store_true", help="record wall time per level")
    s.add_argument("--jobs", type=int, default=1, help="solve levels in parallel processes")
    s.add_argument("--dump-matrix", metavar="DIR",
                   help="write the level-1 system matrices as 'i j value' files")

    d = sub.add_parser("diagnose", help="mesh structure report")
    _add_mesh_args(d, 1)
    d.add_argument("--problem", choices=("poisson", "plate"), default="plate",
                   help="selects the generated domain when --mesh is absent")
    return parser


def read_config(path):
    """Parse ``key = value`` lines (``#`` comments) into a dict."""
    out = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc}") from None
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"{path}:{n}: expected 'key = value'")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k.replace("-", "_")] = v
    return out


def _apply_config(parser, argv):
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    cfg = read_config(known.config)
    # find the subparser actions to convert values with their types
    subs = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    for sp in subs.choices.values():
        defaults = {}
        for act in sp._actions:
            if act.dest not in cfg:
                continue
            raw = cfg[act.dest]
            if isinstance(act, (argparse._StoreTrueAction, argparse.BooleanOptionalAction)):
                if raw.lower() not in ("1", "0", "true", "false", "yes", "no", "on", "off"):
                    raise InputError(f"config {act.dest}: expected a boolean, got {raw!r}")
                val = raw.lower() in ("1", "true", "yes", "on")
            elif isinstance(act, argparse._AppendAction):
                val = [raw]
            else:
                try:
                    val = act.type(raw) if act.type else raw
                except ValueError:
                    raise InputError(f"config {act.dest}: bad value {raw!r}") from None
                if act.choices and val not in act.choices:
                    raise InputError(f"config {act.dest}: {raw!r} not in {list(act.choices)}")
            defaults[act.dest] = val
        sp.set_defaults(**defaults)
    known_keys = {a.dest for sp in subs.choices.values() for a in sp._actions}
    unknown = sorted(set(cfg) - known_keys - {"config", "verbose"})
    if unknown:
        raise InputError(f"unknown config key(s): {', '.join(unknown)}")


def _study_config(args):
    return StudyConfig(
        problem=args.problem, methods=_methods(args.method), mesh=args.mesh,
        mesh_kind=args.mesh_kind, structured=args.structured or 2, levels=args.levels,
        postprocess=args.postprocess, structural=args.structural,
        quad_degree=args.quad_degree, edge_degree=args.edge_degree,
        max_elements=args.max_elements, fix_orientation=args.fix_orientation,
        iterative=args.iterative, timing=args.timing, jobs=args.jobs, report=args.report)


def _dump(cfg, directory):
    mesh = initial_mesh(cfg)
    exact = default_exact(cfg.problem)
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    builders = {
        "cr": lambda: assemble_cr_poisson(mesh, exact.f, cfg.quad_degree),
        "rt": lambda: assemble_rt_mixed(mesh, exact.f, cfg.quad_degree),
        "morley": lambda: assemble_morley(mesh, exact.f, "standard", cfg.quad_degree),
        "morley_modified": lambda: assemble_morley(mesh, exact.f, "modified", cfg.quad_degree),
        "hhj": lambda: assemble_hhj_mixed(mesh, exact.f, cfg.quad_degree),
    }
    for m in cfg.methods:
        builders[m]().dump(out / f"{m}.txt")


def cmd_solve(args):
    cfg = _study_config(args)
    mesh = initial_mesh(cfg)
    diag = classify(mesh, args.alpha_threshold, lineage=[mesh])
    print(f"# {cfg.problem}: methods {', '.join(cfg.methods)}; initial mesh "
          f"{mesh.n_triangles} triangles, h = {mesh.h_max:.6g}; "
          f"E2 edges {len(diag.e2)}, kappa {diag.kappa}")
    if args.dump_matrix:
        _dump(cfg, args.dump_matrix)
    table = run_study(cfg, mesh=mesh)
    print(format_table(table))
    for r in table.rows:
        items = dict(r.residuals)
        if "std_mod_gap" in r.extra:
            items["std_mod_gap"] = r.extra["std_mod_gap"]
        if items:
            print(f"# level {r.level}: " + ", ".join(f"{k} {v:.3e}" for k, v in items.items()))
    return EXIT_OK


def cmd_diagnose(args):
    cfg = StudyConfig(problem=args.problem, mesh=args.mesh, mesh_kind=args.mesh_kind,
                      structured=args.structured or 2, levels=args.levels,
                      fix_orientation=args.fix_orientation, max_elements=args.max_elements)
    meshes = refine_levels(initial_mesh(cfg), args.levels, args.max_elements)
    for i, m in enumerate(meshes, 1):
        d = classify(m, args.alpha_threshold, lineage=meshes[:i])
        print(f"level {i}: {m.n_triangles} triangles, h = {m.h_max:.6g}")
        for line in d.summary():
            print("  " + line)
    return EXIT_OK


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
    except InputError as exc:
        print(f"superfem: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    handler = cmd_solve if args.command == "solve" else cmd_diagnose
    try:
        return handler(args)
    except BudgetExceeded as exc:
        print(f"superfem: budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (SolverError, EquivalenceError, HypothesisError) as exc:
        print(f"superfem: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (MeshError, InputError, ValueError, OSError) as exc:
        print(f"superfem: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
