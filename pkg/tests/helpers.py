"""Shared constructions for the diagnostics and acceptance tests."""

import math

import numpy as np

from superfem.diagnostics import synthetic_pair


def random_linear(rng, matrix=False):
    """Random linear field ``c0 + G x``; symmetric-matrix valued if ``matrix``."""
    if matrix:
        c0 = rng.normal(size=(2, 2))
        G = rng.normal(size=(2, 2, 2))
        return c0 + c0.T, G + np.swapaxes(G, 0, 1)
    return rng.normal(size=2), rng.normal(size=(2, 2))


def lemma_slope(alpha, defect, matrix=False, seed=5):
    """Fitted exponent of the patch defect, normalised by ``|tau|_1`` on the patch,
    against ``h`` on synthetic ``O(h^{1+alpha})`` pairs."""
    hs = np.logspace(-1, -3, 6)
    rng = np.random.default_rng(seed)
    c0, G = random_linear(rng, matrix)
    direction = np.array([0.6, 0.8])
    ys = []
    for h in hs:
        Kl, Kr, area = synthetic_pair(h, alpha, direction=direction)
        ys.append(defect(Kl, Kr, c0, G) / (np.linalg.norm(G) * math.sqrt(area)))
    return float(np.polyfit(np.log(hs), np.log(ys), 1)[0])
