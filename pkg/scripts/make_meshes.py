"""Regenerate the mesh files shipped in ``src/superfem/data``.

Run from the repository root: ``python3 scripts/make_meshes.py``.  The
Delaunay meshes use a fixed seed, so the output is reproducible.
"""

from pathlib import Path

import numpy as np
from scipy.spatial import Delaunay

from superfem.mesh import (
    PARALLELOGRAM,
    Mesh,
    generate_piecewise_uniform,
    generate_structured,
    save_mesh,
)

DATA = Path(__file__).resolve().parents[1] / "src" / "superfem" / "data"


def delaunay_parallelogram(corner, span1, span2, n_side, n_inner, seed, min_dist):
    """Delaunay mesh with ``n_side`` equal segments per side and jittered-free
    random interior points kept at least ``min_dist`` (reference units) apart."""
    corner, span1, span2 = (np.asarray(v, float) for v in (corner, span1, span2))
    t = np.arange(n_side) / n_side
    ref = np.concatenate([
        np.column_stack([t, 0 * t]), np.column_stack([1 + 0 * t, t]),
        np.column_stack([1 - t, 1 + 0 * t]), np.column_stack([0 * t, 1 - t])])
    rng = np.random.default_rng(seed)
    pts = list(ref)
    margin = 0.5 / n_side
    tries = 0
    while len(pts) < len(ref) + n_inner and tries < 100_000:
        tries += 1
        q = rng.uniform(margin, 1 - margin, size=2)
        if min(np.linalg.norm(q - p) for p in pts) >= min_dist:
            pts.append(q)
    ref = np.array(pts)
    tri = Delaunay(ref).simplices
    xy = corner + ref[:, :1] * span1 + ref[:, 1:] * span2
    return Mesh(xy, tri, fix_orientation=True)


def main():
    DATA.mkdir(parents=True, exist_ok=True)
    square = ((0.0, 0.0), (1.0, 0.0), (0.0, 1.0))
    save_mesh(generate_structured(*square, 1), DATA / "unit_square.mesh")
    save_mesh(generate_structured(*PARALLELOGRAM, 2), DATA / "parallelogram_uniform.mesh")
    save_mesh(generate_piecewise_uniform(*PARALLELOGRAM, 2),
              DATA / "parallelogram_piecewise.mesh")
    save_mesh(delaunay_parallelogram(*PARALLELOGRAM, 6, 24, 7, 0.13),
              DATA / "delaunay_parallelogram.mesh")
    save_mesh(delaunay_parallelogram(*square, 6, 24, 11, 0.13), DATA / "delaunay_square.mesh")


if __name__ == "__main__":
    main()
