"""Global degree-of-freedom numbering for every element kind."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np


class ElementKind(str, Enum):
    CR = "CR"
    CR0 = "CR0"
    MORLEY = "Morley"
    RT0 = "RT0"
    HHJ0 = "HHJ0"
    P1C = "P1C"
    P1C0 = "P1C0"
    P0 = "P0"
    P0VEC = "P0^2"

    @property
    def local_dofs(self):
        return _LOCAL_DOFS[self]

    @property
    def base(self):
        """Kind with the boundary constraint dropped (same shape functions)."""
        return {ElementKind.CR0: ElementKind.CR,
                ElementKind.P1C0: ElementKind.P1C,
                ElementKind.P0VEC: ElementKind.P0}.get(self, self)


_LOCAL_DOFS = {
    ElementKind.CR: 3, ElementKind.CR0: 3, ElementKind.MORLEY: 6,
    ElementKind.RT0: 3, ElementKind.HHJ0: 3, ElementKind.P1C: 3,
    ElementKind.P1C0: 3, ElementKind.P0: 1, ElementKind.P0VEC: 1,
}


@dataclass(frozen=True)
class DofMap:
    """Map (element, local dof) -> global dof, with the boundary mask.

    ``boundary`` marks global dofs removed by essential conditions of the
    constrained spaces (CR0, Morley, P1C0); it is all False otherwise.
    """

    kind: ElementKind
    element_dofs: np.ndarray
    boundary: np.ndarray

    @property
    def n_dofs(self):
        return len(self.boundary)

    @property
    def free(self):
        return np.flatnonzero(~self.boundary)


def build_dofmap(mesh, kind):
    kind = ElementKind(kind)
    cache = mesh.__dict__.setdefault("_dofmaps", {})
    if kind in cache:
        return cache[kind]
    M, N, E = mesh.n_triangles, mesh.n_vertices, mesh.n_edges
    if kind in (ElementKind.CR, ElementKind.CR0, ElementKind.RT0, ElementKind.HHJ0):
        dofs = mesh.tri_edges
        mask = mesh.boundary_edges.copy() if kind is ElementKind.CR0 \
            else np.zeros(E, dtype=bool)
    elif kind in (ElementKind.P1C, ElementKind.P1C0):
        dofs = mesh.triangles
        mask = mesh.boundary_vertices.copy() if kind is ElementKind.P1C0 \
            else np.zeros(N, dtype=bool)
    elif kind is ElementKind.MORLEY:
        dofs = np.hstack([mesh.triangles, N + mesh.tri_edges])
        mask = np.concatenate([mesh.boundary_vertices, mesh.boundary_edges])
    else:
        dofs = np.arange(M)[:, None]
        mask = np.zeros(M, dtype=bool)
    dofs = np.ascontiguousarray(dofs, dtype=np.int64)
    dofs.setflags(write=False)
    mask.setflags(write=False)
    dm = DofMap(kind, dofs, mask)
    cache[kind] = dm
    return dm
