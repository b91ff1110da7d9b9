"""Quadrature rules on tetrahedra in barycentric form.

A rule is a pair ``(bary, weights)`` with ``bary`` of shape (Q, 4) and
weights summing to 1, so ``sum_q w_q f(x_q) * |K|`` approximates the
integral of ``f`` over a tet ``K``.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi

__all__ = ["load_rule", "error_rule", "conical_rule", "map_to_tets"]


def _orbit_4(a: float, b: float) -> np.ndarray:
    return np.array([[a, b, b, b], [b, a, b, b], [b, b, a, b], [b, b, b, a]])


def _orbit_6(a: float, b: float) -> np.ndarray:
    return np.array(
        [
            [a, a, b, b],
            [a, b, a, b],
            [a, b, b, a],
            [b, a, a, b],
            [b, a, b, a],
            [b, b, a, a],
        ]
    )


@lru_cache(maxsize=None)
def load_rule():
    """Four-point rule exact for quadratics, equal weights."""
    alpha = (5.0 + 3.0 * np.sqrt(5.0)) / 20.0  # 0.5854101966...
    beta = (5.0 - np.sqrt(5.0)) / 20.0  # 0.1381966011...
    return _orbit_4(alpha, beta), np.full(4, 0.25)


@lru_cache(maxsize=None)
def error_rule():
    """Keast's 11-point rule, exact for polynomials of degree 4.

    The centroid weight is negative; fine for error integrals of smooth data.
    """
    bary = np.vstack(
        [
            np.full((1, 4), 0.25),
            _orbit_4(11.0 / 14.0, 1.0 / 14.0),
            _orbit_6(0.3994035761667992, 0.1005964238332008),
        ]
    )
    # tabulated against unit reference volume 1/6
    w = np.concatenate(
        [[-74.0 / 5625.0], np.full(4, 343.0 / 45000.0), np.full(6, 56.0 / 2250.0)]
    )
    return bary, 6.0 * w


@lru_cache(maxsize=None)
def conical_rule(degree: int):
    """Collapsed Gauss-Jacobi product rule exact to ``degree``.

    Used as an independent high-order reference; all weights are positive.
    """
    k = degree // 2 + 1
    tu, wu = roots_jacobi(k, 2.0, 0.0)
    tv, wv = roots_jacobi(k, 1.0, 0.0)
    tw, ww = roots_jacobi(k, 0.0, 0.0)
    u, v, w = (0.5 * (tu + 1.0), 0.5 * (tv + 1.0), 0.5 * (tw + 1.0))
    wu, wv, ww = wu / 8.0, wv / 4.0, ww / 2.0
    U, V, W = np.meshgrid(u, v, w, indexing="ij")
    WU, WV, WW = np.meshgrid(wu, wv, ww, indexing="ij")
    x = U
    y = V * (1.0 - U)
    z = W * (1.0 - U) * (1.0 - V)
    bary = np.column_stack([(1.0 - x - y - z).ravel(), x.ravel(), y.ravel(), z.ravel()])
    weights = (WU * WV * WW).ravel() * 6.0
    return bary, weights


def map_to_tets(nodes: np.ndarray, tets: np.ndarray, bary: np.ndarray) -> np.ndarray:
    """Physical quadrature points, shape (T, Q, 3)."""
    return np.einsum("qk,tkd->tqd", bary, nodes[tets])
