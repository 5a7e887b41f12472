"""Quadrature on the reference triangle, segment and prism."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

MAX_DEGREE = 60


@lru_cache(maxsize=None)
def triangle_rule(degree: int):
    """Collapsed (Duffy) Gauss rule exact for polynomials of total ``degree``.

    Returns points ``(n, 2)`` and positive weights summing to 1/2.
    """
    if degree < 0 or degree > MAX_DEGREE:
        raise ValueError(f"unsupported triangle quadrature degree {degree}")
    n = max(1, (degree + 2) // 2)
    xj, wj = roots_jacobi(n, 1.0, 0.0)  # weight (1 - x)
    xl, wl = roots_legendre(n)
    s = 0.5 * (1.0 + xj)
    t = 0.5 * (1.0 + xl)
    S, T = np.meshgrid(s, t, indexing="ij")
    W = np.outer(wj, wl) * 0.125
    pts = np.column_stack([S.ravel(), (T * (1.0 - S)).ravel()])
    return pts, W.ravel()


@lru_cache(maxsize=None)
def segment_rule(n: int):
    """``n``-point Gauss-Legendre rule on ``[0, 1]``."""
    if n < 1:
        raise ValueError("segment rule needs at least one point")
    x, w = roots_legendre(n)
    return 0.5 * (1.0 + x), 0.5 * w


@dataclass(frozen=True)
class Quadrature:
    tri_points: np.ndarray
    tri_weights: np.ndarray
    seg_points: np.ndarray
    seg_weights: np.ndarray

    @property
    def points(self) -> np.ndarray:
        """Prism points ``(n_tri * n_seg, 3)``, thickness index fastest."""
        nt, ns = len(self.tri_weights), len(self.seg_weights)
        pts = np.empty((nt, ns, 3))
        pts[..., :2] = self.tri_points[:, None, :]
        pts[..., 2] = self.seg_points[None, :]
        return pts.reshape(-1, 3)

    @property
    def weights(self) -> np.ndarray:
        return np.outer(self.tri_weights, self.seg_weights).ravel()


@lru_cache(maxsize=None)
def make_quadrature(p_face: int, p_thick: int) -> Quadrature:
    """Full-integration rule for a prism with the given orders.

    The triangle rule integrates degree ``2 p_face`` exactly; the thickness
    rule has ``max(p_thick + 1, 2)`` Gauss points.
    """
    if p_face < 1 or p_thick < 1:
        raise ValueError("orders must be >= 1")
    tp, tw = triangle_rule(2 * p_face)
    sp, sw = segment_rule(max(p_thick + 1, 2))
    return Quadrature(tp, tw, sp, sw)
