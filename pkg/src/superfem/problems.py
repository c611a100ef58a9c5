"""Single-mesh solves of the Poisson and clamped-plate model problems.

Each ``run_*_case`` returns a :class:`CaseResult` holding the three error
quantities tracked by the convergence studies:

* ``primal``: energy error of the primal nonconforming method,
* ``gap``: distance between the discrete flux / moment and the canonical
  interpolation of the exact one,
* ``post``: error of the ``K_h``-recovered discrete gradient / hessian,

plus the structural residuals (divergence, Helmholtz, equivalence).
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .assembly import (
    assemble_cr_poisson,
    assemble_hhj_mixed,
    assemble_morley,
    assemble_rt_mixed,
    solve,
)
from .dofs import ElementKind
from .elements import PiecewiseField, mesh_geometry
from .exact import ExactSolution
from .interpolation import interp_hhj, interp_pd, interp_rt
from .postprocess import (
    divdiv_residual,
    gradient_field,
    helmholtz_recover_hhj,
    helmholtz_recover_rt,
    hessian_field,
    hhj_matrix_field,
    kh_recover,
)
from .quadrature import (
    DEFAULT_EDGE_DEGREE,
    DEFAULT_TRIANGLE_DEGREE,
    physical_points,
    physical_weights,
    triangle_rule,
)

logger = logging.getLogger(__name__)

__all__ = ["CaseResult", "IncompatibleBoundaryData", "EquivalenceError", "l2_error",
           "run_poisson_case", "run_plate_case", "POISSON_METHODS", "PLATE_METHODS"]

POISSON_METHODS = ("cr", "rt")
PLATE_METHODS = ("morley", "morley_modified", "hhj")
EQUIVALENCE_TOL = 1e-9


class IncompatibleBoundaryData(ValueError):
    """The exact solution does not satisfy the homogeneous boundary conditions."""


class EquivalenceError(RuntimeError):
    """Modified Morley and HHJ solutions disagree beyond tolerance."""


@dataclass
class CaseResult:
    """Errors and diagnostics of one solve on one mesh."""

    problem: str
    level: int
    h: float
    dofs: int
    error_primal: float | None = None
    error_gap: float | None = None
    error_post: float | None = None
    residual: float = 0.0
    seconds: float | None = 0.0
    residuals: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)
    fields: dict = field(default_factory=dict, repr=False)


# ----------------------------------------------------------------------

def _operand_values(op, mesh, rule, pts, derivative):
    if op is None:
        return None
    if isinstance(op, PiecewiseField):
        if derivative == 0:
            return op.values(rule.points)
        if derivative == 1:
            return op.gradients(rule.points)
        if derivative == 2:
            return op.hessians(rule.points)
        raise ValueError("derivative must be 0, 1 or 2")
    if isinstance(op, ExactSolution):
        fn = (op.u, op.grad, op.hess)[derivative]
    else:
        fn = op
    return np.asarray(fn(pts[..., 0], pts[..., 1]), dtype=float)


def l2_error(a, b, mesh, derivative=0, degree=DEFAULT_TRIANGLE_DEGREE):
    """``||D^k a - D^k b||_{L2}`` (broken), summed over all value components.

    ``a`` and ``b`` may be :class:`PiecewiseField`, :class:`ExactSolution`,
    a callable ``fn(x, y)`` (already the quantity to compare) or ``None``
    (zero).  For callables ``derivative`` is ignored.
    """
    rule = triangle_rule(degree)
    pts = physical_points(mesh, rule)
    va = _operand_values(a, mesh, rule, pts, derivative)
    vb = _operand_values(b, mesh, rule, pts, derivative)
    if va is None and vb is None:
        return 0.0
    diff = va if vb is None else (-vb if va is None else va - vb)
    sq = diff.reshape(diff.shape[0], diff.shape[1], -1) ** 2
    w = physical_weights(mesh, rule)
    return float(np.sqrt(np.einsum("mq,mqc->", w, sq)))


def _check_boundary(mesh, exact, clamped, tol=1e-9):
    be = mesh.boundary_edges
    pts = np.concatenate([mesh.vertices[mesh.boundary_vertices], mesh.edge_midpoints[be]])
    scale = max(1.0, float(np.abs(exact.u(mesh.vertices[:, 0], mesh.vertices[:, 1])).max()))
    bad = float(np.abs(exact.u(pts[:, 0], pts[:, 1])).max(initial=0.0))
    if bad > tol * scale:
        raise IncompatibleBoundaryData(f"exact solution {exact.name!r} is not zero on the "
                                       f"boundary (max |u| = {bad:.3e})")
    if clamped:
        g = exact.grad(pts[:, 0], pts[:, 1])
        gs = max(1.0, float(np.abs(exact.grad(mesh.vertices[:, 0], mesh.vertices[:, 1])).max()))
        bad = float(np.abs(g).max(initial=0.0))
        if bad > tol * gs:
            raise IncompatibleBoundaryData(f"exact solution {exact.name!r} has nonzero "
                                           f"gradient on the boundary ({bad:.3e})")


def _free_count(system):
    return int(system.matrix.shape[0])


# ----------------------------------------------------------------------

def run_poisson_case(mesh, exact, methods=POISSON_METHODS, *, level=1,
                     degree=DEFAULT_TRIANGLE_DEGREE, edge_degree=DEFAULT_EDGE_DEGREE,
                     postprocess=True, structural=True, iterative=False, keep_fields=False):
    """Solve ``-Laplace u = f`` with CR and/or RT0 on ``mesh``.

    ``primal`` and ``post`` come from CR (``||grad u - grad_h u_CR||`` and
    ``||grad u - K_h grad_h u_CR||``), ``gap`` from RT0
    (``||sigma_RT - Pi_RT grad u||``).  A column whose method is not requested
    stays ``None``.
    """
    methods = tuple(methods)
    unknown = set(methods) - set(POISSON_METHODS)
    if unknown:
        raise ValueError(f"unknown Poisson method(s): {sorted(unknown)}")
    _check_boundary(mesh, exact, clamped=False)
    t0 = time.perf_counter()
    res = CaseResult("poisson", level, mesh.h_max, 0)
    residuals = []
    if "cr" in methods:
        sys_cr = assemble_cr_poisson(mesh, exact.f, degree)
        solve(sys_cr, iterative=iterative)
        residuals.append(sys_cr.residual)
        u = PiecewiseField(mesh, ElementKind.CR, sys_cr.unpack(sys_cr.solution)["u"])
        g = gradient_field(u)
        res.dofs += _free_count(sys_cr)
        res.error_primal = l2_error(exact.grad, g, mesh, degree=degree)
        if postprocess:
            res.error_post = l2_error(exact.grad, kh_recover(mesh, g), mesh, degree=degree)
        if keep_fields:
            res.fields.update(u_cr=u)
    if "rt" in methods:
        def g_rhs(x, y):
            return -np.asarray(exact.f(x, y), dtype=float)

        sys_rt = assemble_rt_mixed(mesh, g_rhs, degree)
        solve(sys_rt, iterative=iterative)
        residuals.append(sys_rt.residual)
        parts = sys_rt.unpack(sys_rt.solution)
        sigma = PiecewiseField(mesh, ElementKind.RT0, parts["sigma"])
        pi_sigma = interp_rt(mesh, exact.grad, edge_degree)
        diff = PiecewiseField(mesh, ElementKind.RT0, sigma.coeffs - pi_sigma.coeffs)
        res.dofs += _free_count(sys_rt)
        res.error_gap = l2_error(diff, None, mesh, degree=degree)
        res.extra["error_rt_flux"] = l2_error(exact.grad, sigma, mesh, degree=degree)
        if structural:
            res.residuals["divergence_gap"] = float(np.abs(diff.divergence()).max())
            # commuting property: mean div Pi sigma = mean Laplace u, element-wise
            rule = triangle_rule(degree)
            pts = physical_points(mesh, rule)
            H = exact.hess(pts[..., 0], pts[..., 1])
            area = mesh_geometry(mesh).areas
            lap = np.einsum("mq,mq->m", physical_weights(mesh, rule),
                            H[..., 0, 0] + H[..., 1, 1]) / area
            scale = max(1.0, float(np.abs(lap).max()))
            res.residuals["commuting"] = float(np.abs(pi_sigma.divergence() - lap).max()) / scale
            _, hres = helmholtz_recover_rt(mesh, diff)
            res.residuals["helmholtz_rt"] = hres
        if keep_fields:
            res.fields.update(sigma_rt=sigma, pi_sigma=pi_sigma,
                              u_rt=PiecewiseField(mesh, ElementKind.P0, parts["u"]))
    res.residual = max(residuals, default=0.0)
    res.seconds = time.perf_counter() - t0
    return res


def run_plate_case(mesh, exact, methods=PLATE_METHODS, *, level=1,
                   degree=DEFAULT_TRIANGLE_DEGREE, edge_degree=DEFAULT_EDGE_DEGREE,
                   postprocess=True, structural=True, iterative=False, keep_fields=False):
    """Solve ``Laplace^2 u = f`` (clamped) with Morley / modified Morley / HHJ.

    The tracked columns use the standard Morley solution when ``"morley"`` is
    requested, otherwise the modified Morley solution, otherwise HHJ:
    ``||hess u - hess_h u_M||``, ``||hess_h u_M - Pi_HHJ hess u||`` and
    ``||hess u - K_h hess_h u_M||``.  When both modified Morley and HHJ run,
    their equivalence ``hess_h u~_M = sigma_HHJ``, ``Pi_D u~_M = u_HHJ`` is
    checked to 1e-9 (relative) and :class:`EquivalenceError` raised otherwise.
    """
    methods = tuple(methods)
    unknown = set(methods) - set(PLATE_METHODS)
    if unknown:
        raise ValueError(f"unknown plate method(s): {sorted(unknown)}")
    if not methods:
        raise ValueError("no plate method requested")
    _check_boundary(mesh, exact, clamped=True)
    t0 = time.perf_counter()
    res = CaseResult("plate", level, mesh.h_max, 0)
    residuals = []
    pi_hess = interp_hhj(mesh, exact.hess, edge_degree)
    pi_mats = hhj_matrix_field(pi_hess)
    hess_fields = {}

    for mode, key in (("standard", "morley"), ("modified", "morley_modified")):
        if key not in methods:
            continue
        s = assemble_morley(mesh, exact.f, mode, degree)
        solve(s, iterative=iterative)
        residuals.append(s.residual)
        u = PiecewiseField(mesh, ElementKind.MORLEY, s.unpack(s.solution)["u"])
        hess_fields[key] = (u, hessian_field(u))
        res.dofs = max(res.dofs, _free_count(s))

    sigma = u_hhj = None
    if "hhj" in methods:
        s = assemble_hhj_mixed(mesh, exact.f, degree)
        solve(s, iterative=iterative)
        residuals.append(s.residual)
        parts = s.unpack(s.solution)
        sigma = PiecewiseField(mesh, ElementKind.HHJ0, parts["sigma"])
        u_hhj = PiecewiseField(mesh, ElementKind.P1C0, parts["u"])
        hess_fields["hhj"] = (u_hhj, hhj_matrix_field(sigma))
        res.dofs = max(res.dofs, _free_count(s))

    key = next(k for k in ("morley", "morley_modified", "hhj") if k in hess_fields)
    H = hess_fields[key][1]
    res.extra["primary_method"] = key
    res.error_primal = l2_error(exact.hess, H, mesh, degree=degree)
    gap = PiecewiseField(mesh, ElementKind.P0, H.coeffs - pi_mats.coeffs)
    res.error_gap = l2_error(gap, None, mesh, degree=degree)
    if postprocess:
        res.error_post = l2_error(exact.hess, kh_recover(mesh, H), mesh, degree=degree)

    if "morley" in hess_fields and "morley_modified" in hess_fields:
        d = hess_fields["morley"][1].coeffs - hess_fields["morley_modified"][1].coeffs
        res.extra["std_mod_gap"] = l2_error(PiecewiseField(mesh, ElementKind.P0, d), None,
                                            mesh, degree=2)

    if "morley_modified" in hess_fields and sigma is not None:
        um, Hm = hess_fields["morley_modified"]
        Hs = hess_fields["hhj"][1]
        nrm = l2_error(Hs, None, mesh, degree=2)
        stress = l2_error(PiecewiseField(mesh, ElementKind.P0, Hm.coeffs - Hs.coeffs), None,
                          mesh, degree=2) / max(nrm, 1e-300)
        pd = interp_pd(mesh, um)
        unrm = max(float(np.linalg.norm(pd.coeffs)), 1e-300)
        disp = float(np.linalg.norm(pd.coeffs - u_hhj.coeffs)) / unrm
        res.residuals["equivalence_stress"] = stress
        res.residuals["equivalence_displacement"] = disp
        if stress > EQUIVALENCE_TOL or disp > EQUIVALENCE_TOL:
            raise EquivalenceError(f"modified Morley and HHJ differ (stress {stress:.3e}, "
                                   f"displacement {disp:.3e})")

    if structural and sigma is not None:
        diff = PiecewiseField(mesh, ElementKind.HHJ0, sigma.coeffs - pi_hess.coeffs)
        res.residuals["divdiv_gap"], _ = divdiv_residual(mesh, diff)
        _, hres = helmholtz_recover_hhj(mesh, diff)
        res.residuals["helmholtz_hhj"] = hres

    if keep_fields:
        for k, (u, Hk) in hess_fields.items():
            res.fields[f"u_{k}"] = u
            res.fields[f"hess_{k}"] = Hk
        res.fields["pi_hess"] = pi_hess
        if sigma is not None:
            res.fields["sigma_hhj"] = sigma
    res.residual = max(residuals, default=0.0)
    res.seconds = time.perf_counter() - t0
    return res

