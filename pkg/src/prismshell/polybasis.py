"""Hierarchical shape functions on the unit prism.

The reference prism is the product of the triangle ``xi, eta >= 0,
xi + eta <= 1`` with the segment ``0 <= zeta <= 1``.  Shape functions are
grouped by the topological entity they belong to (vertices, triangle
edges, through-thickness edges, triangle faces, quadrilateral faces and the
volume) and every group is built from barycentric coordinates of the
triangle, affine coordinates of the segment and Legendre polynomials.

All evaluators accept a single point ``(3,)`` or a batch ``(n, 3)`` and
return values with shape ``(n,)`` and gradients with shape ``(n, 3)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

# vertex v -> (triangle index i, segment index j)
VERTEX_TABLE = ((0, 0), (1, 0), (2, 0), (0, 1), (1, 1), (2, 1))
# triangle edge -> (segment index i, j, k); argument is lambda_j - lambda_k
TRI_EDGE_TABLE = ((0, 1, 0), (0, 2, 1), (0, 0, 2), (1, 1, 0), (1, 2, 1), (1, 0, 2))
TRI_EDGE_VERTICES = ((0, 1), (1, 2), (2, 0), (3, 4), (4, 5), (5, 3))
# quadrilateral face -> (i, j); argument is lambda_j - lambda_i
QUAD_FACE_TABLE = ((0, 1), (1, 2), (2, 0))
QUAD_FACE_VERTICES = ((0, 1, 4, 3), (1, 2, 5, 4), (2, 0, 3, 5))

_GRAD_LAMBDA = np.array([[-1.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
_GRAD_MU = np.array([[0.0, 0.0, -1.0], [0.0, 0.0, 1.0]])

KIND_ORDER = ("vertex", "tri_edge", "quad_edge", "tri_face", "quad_face", "volume")


class OrderError(ValueError):
    """A polynomial index lies outside the range allowed by the entity order."""


class RefPoint(NamedTuple):
    xi: float
    eta: float
    zeta: float


class BaryCoords(NamedTuple):
    lam: np.ndarray  # (n, 3)
    mu: np.ndarray  # (n, 2)
    grad_lam: np.ndarray  # (3, 3), row j is grad lambda_j
    grad_mu: np.ndarray  # (2, 3)


class EntityFnId(NamedTuple):
    """Identifies one shape function: entity kind, local entity index, multi-index."""

    kind: str
    entity: int
    index: tuple


@dataclass(frozen=True)
class PrismOrders:
    """Per-entity polynomial orders of one prism.

    ``quad_face`` and ``volume`` carry ``(thickness, in_plane)`` pairs so that
    the through-thickness order can differ from the in-plane one.
    """

    tri_edge: tuple = (1,) * 6
    tri_face: tuple = (1, 1)
    quad_edge: tuple = (1, 1, 1)
    quad_face: tuple = ((1, 1),) * 3
    volume: tuple = (1, 1)

    def __post_init__(self):
        flat = list(self.tri_edge) + list(self.tri_face) + list(self.quad_edge)
        flat += [p for pair in self.quad_face for p in pair] + list(self.volume)
        if len(self.tri_edge) != 6 or len(self.tri_face) != 2 or len(self.quad_edge) != 3:
            raise ValueError("wrong number of entity orders")
        if len(self.quad_face) != 3 or len(self.volume) != 2:
            raise ValueError("wrong number of entity orders")
        if any(int(p) < 1 for p in flat):
            raise ValueError(f"all orders must be >= 1, got {self}")

    @classmethod
    def uniform(cls, p_face: int, p_thick: int = 1) -> "PrismOrders":
        return cls(
            tri_edge=(p_face,) * 6,
            tri_face=(p_face, p_face),
            quad_edge=(p_thick,) * 3,
            quad_face=((p_thick, p_face),) * 3,
            volume=(p_thick, p_face),
        )


@dataclass(frozen=True)
class Orientation:
    """Reversal flags for entities shared between neighbouring prisms.

    Flags are set when the local direction of a triangle edge (or the in-plane
    direction of a quadrilateral face) runs against ascending global vertex
    numbering.
    """

    tri_edge: tuple = (False,) * 6
    quad_face: tuple = (False,) * 3

    @classmethod
    def from_nodes(cls, nodes: Sequence[int]) -> "Orientation":
        """Orientation of a prism built on mid-surface triangle ``nodes``."""
        n0, n1, n2 = (int(n) for n in nodes)
        # local edge a->b uses L(lambda_b - lambda_a)
        flips = (n0 > n1, n1 > n2, n2 > n0)
        return cls(tri_edge=flips + flips, quad_face=flips)


def legendre(ell: int, s):
    """Legendre polynomial ``L_ell`` and its derivative at ``s``.

    >>> legendre(2, 0.5)
    (-0.125, 1.5)
    """
    if ell < 0:
        raise OrderError(f"Legendre degree must be >= 0, got {ell}")
    vals, ders = legendre_table(ell, s)
    if np.ndim(s) == 0:
        return float(vals[ell]), float(ders[ell])
    return vals[ell], ders[ell]


def legendre_table(n: int, s):
    """All ``L_0..L_n`` and derivatives; arrays of shape ``(n + 1, *s.shape)``."""
    s = np.asarray(s, dtype=float)
    vals = np.empty((max(n, 0) + 1,) + s.shape)
    ders = np.empty_like(vals)
    vals[0] = 1.0
    ders[0] = 0.0
    if n >= 1:
        vals[1] = s
        ders[1] = 1.0
    for ell in range(1, n):
        vals[ell + 1] = ((2 * ell + 1) * s * vals[ell] - ell * vals[ell - 1]) / (ell + 1)
        # L'_{l+1} = L'_{l-1} + (2l+1) L_l
        ders[ell + 1] = ders[ell - 1] + (2 * ell + 1) * vals[ell]
    return vals, ders


def _as_points(point) -> np.ndarray:
    pts = np.asarray(point, dtype=float)
    if pts.ndim == 1:
        pts = pts[None, :]
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError(f"points must have shape (3,) or (n, 3), got {np.shape(point)}")
    return pts


def bary(point, tol: float = 1e-12) -> BaryCoords:
    """Barycentric and affine coordinates of reference prism points."""
    pts = _as_points(point)
    xi, eta, zeta = pts.T
    outside = (
        (xi < -tol) | (eta < -tol) | (zeta < -tol) | (zeta > 1 + tol) | (xi + eta > 1 + tol)
    )
    if np.any(outside):
        bad = pts[np.argmax(outside)]
        raise ValueError(f"point {tuple(bad)} lies outside the reference prism")
    lam = np.stack([1.0 - xi - eta, xi, eta], axis=1)
    mu = np.stack([1.0 - zeta, zeta], axis=1)
    return BaryCoords(lam, mu, _GRAD_LAMBDA.copy(), _GRAD_MU.copy())


def _product(factors, grads):
    """Value and gradient of a product of scalar factors with known gradients."""
    value = np.ones(factors[0].shape)
    for f in factors:
        value = value * f
    grad = np.zeros(factors[0].shape + (3,))
    for a, ga in enumerate(grads):
        others = np.ones(factors[0].shape)
        for b, f in enumerate(factors):
            if b != a:
                others = others * f
        grad += others[:, None] * ga
    return value, grad


def _leg_factor(ell, s, grad_s):
    vals, ders = legendre_table(ell, s)
    return vals[ell], ders[ell][:, None] * grad_s


def _check(ell, pmax, what):
    if ell < 0 or ell > pmax:
        raise OrderError(f"{what} index {ell} outside 0..{pmax}")


def vertex_shape(v: int, point):
    if not 0 <= v < 6:
        raise ValueError(f"vertex index {v} outside 0..5")
    b = bary(point)
    i, j = VERTEX_TABLE[v]
    return _product([b.lam[:, i], b.mu[:, j]], [_GRAD_LAMBDA[i], _GRAD_MU[j]])


def tri_edge_shape(edge: int, ell: int, point, reversed: bool = False, p: int | None = None):
    """Triangle edge function ``mu_i lam_j lam_k L_ell(+-(lam_j - lam_k))``."""
    if not 0 <= edge < 6:
        raise ValueError(f"triangle edge index {edge} outside 0..5")
    _check(ell, (p - 2) if p is not None else ell, "triangle edge")
    b = bary(point)
    i, j, k = TRI_EDGE_TABLE[edge]
    sign = -1.0 if reversed else 1.0
    s = sign * (b.lam[:, j] - b.lam[:, k])
    ds = sign * (_GRAD_LAMBDA[j] - _GRAD_LAMBDA[k])
    L, dL = _leg_factor(ell, s, np.broadcast_to(ds, (len(s), 3)))
    beta, dbeta = _product(
        [b.mu[:, i], b.lam[:, j], b.lam[:, k]], [_GRAD_MU[i], _GRAD_LAMBDA[j], _GRAD_LAMBDA[k]]
    )
    return beta * L, dbeta * L[:, None] + beta[:, None] * dL


def quad_edge_shape(edge: int, ell: int, point, reversed: bool = False, p: int | None = None):
    """Through-thickness edge function ``lam_i mu_0 mu_1 L_ell(mu_1 - mu_0)``."""
    if not 0 <= edge < 3:
        raise ValueError(f"quadrilateral edge index {edge} outside 0..2")
    _check(ell, (p - 2) if p is not None else ell, "quadrilateral edge")
    b = bary(point)
    sign = -1.0 if reversed else 1.0
    s = sign * (b.mu[:, 1] - b.mu[:, 0])
    ds = sign * (_GRAD_MU[1] - _GRAD_MU[0])
    L, dL = _leg_factor(ell, s, np.broadcast_to(ds, (len(s), 3)))
    beta, dbeta = _product(
        [b.lam[:, edge], b.mu[:, 0], b.mu[:, 1]], [_GRAD_LAMBDA[edge], _GRAD_MU[0], _GRAD_MU[1]]
    )
    return beta * L, dbeta * L[:, None] + beta[:, None] * dL


def tri_face_shape(face: int, k: int, ell: int, point, p: int | None = None):
    """Triangle face bubble ``mu_i lam_0 lam_1 lam_2 L_k(lam_1 - lam_0) L_ell(lam_2 - lam_0)``."""
    if face not in (0, 1):
        raise ValueError(f"triangle face index {face} outside 0..1")
    if k < 0 or ell < 0 or (p is not None and k + ell > p - 3):
        raise OrderError(f"triangle face index ({k}, {ell}) outside k + l <= p - 3")
    b = bary(point)
    n = len(b.lam)
    s1 = b.lam[:, 1] - b.lam[:, 0]
    s2 = b.lam[:, 2] - b.lam[:, 0]
    L1, dL1 = _leg_factor(k, s1, np.broadcast_to(_GRAD_LAMBDA[1] - _GRAD_LAMBDA[0], (n, 3)))
    L2, dL2 = _leg_factor(ell, s2, np.broadcast_to(_GRAD_LAMBDA[2] - _GRAD_LAMBDA[0], (n, 3)))
    return _product(
        [b.mu[:, face], b.lam[:, 0], b.lam[:, 1], b.lam[:, 2], L1, L2],
        [_GRAD_MU[face], _GRAD_LAMBDA[0], _GRAD_LAMBDA[1], _GRAD_LAMBDA[2], dL1, dL2],
    )


def quad_face_shape(face: int, k: int, ell: int, point, reversed: bool = False,
                    p_thick: int | None = None, p_plane: int | None = None):
    """Quadrilateral face function ``mu_0 mu_1 lam_i lam_j L_k(mu_1 - mu_0) L_ell(lam_j - lam_i)``.

    ``k`` runs through the thickness and ``ell`` along the in-plane edge.
    """
    if not 0 <= face < 3:
        raise ValueError(f"quadrilateral face index {face} outside 0..2")
    _check(k, (p_thick - 2) if p_thick is not None else k, "quadrilateral face thickness")
    _check(ell, (p_plane - 2) if p_plane is not None else ell, "quadrilateral face in-plane")
    b = bary(point)
    n = len(b.lam)
    i, j = QUAD_FACE_TABLE[face]
    sign = -1.0 if reversed else 1.0
    Lt, dLt = _leg_factor(k, b.mu[:, 1] - b.mu[:, 0],
                          np.broadcast_to(_GRAD_MU[1] - _GRAD_MU[0], (n, 3)))
    Lp, dLp = _leg_factor(ell, sign * (b.lam[:, j] - b.lam[:, i]),
                          np.broadcast_to(sign * (_GRAD_LAMBDA[j] - _GRAD_LAMBDA[i]), (n, 3)))
    return _product(
        [b.mu[:, 0], b.mu[:, 1], b.lam[:, i], b.lam[:, j], Lt, Lp],
        [_GRAD_MU[0], _GRAD_MU[1], _GRAD_LAMBDA[i], _GRAD_LAMBDA[j], dLt, dLp],
    )


def volume_shape(k: int, ell: int, m: int, point, p_thick: int | None = None,
                 p_plane: int | None = None):
    """Prism bubble ``mu_0 mu_1 lam_0 lam_1 lam_2 L_k(mu_1-mu_0) L_ell(lam_1-lam_0) L_m(lam_2-lam_0)``."""
    _check(k, (p_thick - 2) if p_thick is not None else k, "volume thickness")
    if ell < 0 or m < 0 or (p_plane is not None and ell + m > p_plane - 3):
        raise OrderError(f"volume in-plane index ({ell}, {m}) outside l + m <= p - 3")
    b = bary(point)
    n = len(b.lam)
    Lt, dLt = _leg_factor(k, b.mu[:, 1] - b.mu[:, 0],
                          np.broadcast_to(_GRAD_MU[1] - _GRAD_MU[0], (n, 3)))
    L1, dL1 = _leg_factor(ell, b.lam[:, 1] - b.lam[:, 0],
                          np.broadcast_to(_GRAD_LAMBDA[1] - _GRAD_LAMBDA[0], (n, 3)))
    L2, dL2 = _leg_factor(m, b.lam[:, 2] - b.lam[:, 0],
                          np.broadcast_to(_GRAD_LAMBDA[2] - _GRAD_LAMBDA[0], (n, 3)))
    return _product(
        [b.mu[:, 0], b.mu[:, 1], b.lam[:, 0], b.lam[:, 1], b.lam[:, 2], Lt, L1, L2],
        [_GRAD_MU[0], _GRAD_MU[1], _GRAD_LAMBDA[0], _GRAD_LAMBDA[1], _GRAD_LAMBDA[2],
         dLt, dL1, dL2],
    )


# --- enumeration -----------------------------------------------------------

def triangle_pairs(p: int):
    """Multi-indices ``(k, l)`` with ``k + l <= p - 3`` in canonical order."""
    return [(k, t - k) for t in range(p - 2) for k in range(t + 1)]


def enumerate_functions(orders: PrismOrders, kinds: Sequence[str] = KIND_ORDER) -> list:
    """Canonical list of :class:`EntityFnId` active for ``orders``."""
    ids = []
    for kind in KIND_ORDER:
        if kind not in kinds:
            continue
        if kind == "vertex":
            ids += [EntityFnId("vertex", v, ()) for v in range(6)]
        elif kind == "tri_edge":
            for e, p in enumerate(orders.tri_edge):
                ids += [EntityFnId("tri_edge", e, (ell,)) for ell in range(p - 1)]
        elif kind == "quad_edge":
            for e, p in enumerate(orders.quad_edge):
                ids += [EntityFnId("quad_edge", e, (ell,)) for ell in range(p - 1)]
        elif kind == "tri_face":
            for f, p in enumerate(orders.tri_face):
                ids += [EntityFnId("tri_face", f, kl) for kl in triangle_pairs(p)]
        elif kind == "quad_face":
            for f, (pt, pp) in enumerate(orders.quad_face):
                ids += [EntityFnId("quad_face", f, (k, ell))
                        for ell in range(pp - 1) for k in range(pt - 1)]
        elif kind == "volume":
            pt, pp = orders.volume
            ids += [EntityFnId("volume", 0, (k,) + lm)
                    for lm in triangle_pairs(pp) for k in range(pt - 1)]
    return ids


@dataclass
class ShapeTable:
    """Values ``(n_points, n_fn)`` and reference gradients ``(n_points, n_fn, 3)``."""

    ids: list
    values: np.ndarray
    grads: np.ndarray

    def __len__(self):
        return len(self.ids)


def shape_table(orders: PrismOrders, point, orientation: Orientation | None = None,
                kinds: Sequence[str] = KIND_ORDER) -> ShapeTable:
    """Evaluate every active shape function of a prism at the given points.

    Functions are evaluated with shared Legendre tables, so this is the fast
    path used by element integration; the single-function evaluators above
    serve as its independent reference in the tests.
    """
    orient = orientation or Orientation()
    ids = enumerate_functions(orders, kinds)
    b = bary(point)
    n = len(b.lam)
    lam, mu = b.lam, b.mu
    gl, gm = _GRAD_LAMBDA, _GRAD_MU
    values = np.empty((n, len(ids)))
    grads = np.empty((n, len(ids), 3))
    pmax = max(list(orders.tri_edge) + list(orders.tri_face) + list(orders.quad_edge)
               + [p for pair in orders.quad_face for p in pair] + list(orders.volume))
    # Legendre tables of the recurring arguments
    st = mu[:, 1] - mu[:, 0]
    Lt, dLt = legendre_table(pmax, st)
    dst = gm[1] - gm[0]
    s10 = lam[:, 1] - lam[:, 0]
    s20 = lam[:, 2] - lam[:, 0]
    L10, dL10 = legendre_table(pmax, s10)
    L20, dL20 = legendre_table(pmax, s20)
    edge_tabs = {}

    def edge_leg(j, k, rev):
        key = (j, k, rev)
        if key not in edge_tabs:
            sign = -1.0 if rev else 1.0
            vals, ders = legendre_table(pmax, sign * (lam[:, j] - lam[:, k]))
            edge_tabs[key] = (vals, ders, sign * (gl[j] - gl[k]))
        return edge_tabs[key]

    for col, fid in enumerate(ids):
        kind, ent, idx = fid
        if kind == "vertex":
            i, j = VERTEX_TABLE[ent]
            values[:, col] = lam[:, i] * mu[:, j]
            grads[:, col] = mu[:, j, None] * gl[i] + lam[:, i, None] * gm[j]
        elif kind == "tri_edge":
            i, j, k = TRI_EDGE_TABLE[ent]
            vals, ders, ds = edge_leg(j, k, bool(orient.tri_edge[ent]))
            ell = idx[0]
            beta = mu[:, i] * lam[:, j] * lam[:, k]
            dbeta = (lam[:, j] * lam[:, k])[:, None] * gm[i] \
                + (mu[:, i] * lam[:, k])[:, None] * gl[j] \
                + (mu[:, i] * lam[:, j])[:, None] * gl[k]
            values[:, col] = beta * vals[ell]
            grads[:, col] = dbeta * vals[ell][:, None] + (beta * ders[ell])[:, None] * ds
        elif kind == "quad_edge":
            ell = idx[0]
            beta = lam[:, ent] * mu[:, 0] * mu[:, 1]
            dbeta = (mu[:, 0] * mu[:, 1])[:, None] * gl[ent] \
                + (lam[:, ent] * mu[:, 1])[:, None] * gm[0] \
                + (lam[:, ent] * mu[:, 0])[:, None] * gm[1]
            values[:, col] = beta * Lt[ell]
            grads[:, col] = dbeta * Lt[ell][:, None] + (beta * dLt[ell])[:, None] * dst
        elif kind == "tri_face":
            k, ell = idx
            bub = lam[:, 0] * lam[:, 1] * lam[:, 2]
            dbub = (lam[:, 1] * lam[:, 2])[:, None] * gl[0] \
                + (lam[:, 0] * lam[:, 2])[:, None] * gl[1] \
                + (lam[:, 0] * lam[:, 1])[:, None] * gl[2]
            P = L10[k] * L20[ell]
            dP = (dL10[k] * L20[ell])[:, None] * (gl[1] - gl[0]) \
                + (L10[k] * dL20[ell])[:, None] * (gl[2] - gl[0])
            m = mu[:, ent]
            values[:, col] = m * bub * P
            grads[:, col] = (bub * P)[:, None] * gm[ent] + (m * P)[:, None] * dbub \
                + (m * bub)[:, None] * dP
        elif kind == "quad_face":
            k, ell = idx
            i, j = QUAD_FACE_TABLE[ent]
            vals, ders, ds = edge_leg(j, i, bool(orient.quad_face[ent]))
            beta = mu[:, 0] * mu[:, 1] * lam[:, i] * lam[:, j]
            dbeta = (mu[:, 1] * lam[:, i] * lam[:, j])[:, None] * gm[0] \
                + (mu[:, 0] * lam[:, i] * lam[:, j])[:, None] * gm[1] \
                + (mu[:, 0] * mu[:, 1] * lam[:, j])[:, None] * gl[i] \
                + (mu[:, 0] * mu[:, 1] * lam[:, i])[:, None] * gl[j]
            P = Lt[k] * vals[ell]
            dP = (dLt[k] * vals[ell])[:, None] * dst + (Lt[k] * ders[ell])[:, None] * ds
            values[:, col] = beta * P
            grads[:, col] = dbeta * P[:, None] + beta[:, None] * dP
        else:  # volume
            k, ell, m = idx
            mm = mu[:, 0] * mu[:, 1]
            bub = lam[:, 0] * lam[:, 1] * lam[:, 2]
            dmm = mu[:, 1, None] * gm[0] + mu[:, 0, None] * gm[1]
            dbub = (lam[:, 1] * lam[:, 2])[:, None] * gl[0] \
                + (lam[:, 0] * lam[:, 2])[:, None] * gl[1] \
                + (lam[:, 0] * lam[:, 1])[:, None] * gl[2]
            P = Lt[k] * L10[ell] * L20[m]
            dP = (dLt[k] * L10[ell] * L20[m])[:, None] * dst \
                + (Lt[k] * dL10[ell] * L20[m])[:, None] * (gl[1] - gl[0]) \
                + (Lt[k] * L10[ell] * dL20[m])[:, None] * (gl[2] - gl[0])
            values[:, col] = mm * bub * P
            grads[:, col] = (bub * P)[:, None] * dmm + (mm * P)[:, None] * dbub \
                + (mm * bub)[:, None] * dP
    return ShapeTable(ids, values, grads)


def evaluate_function(fid: EntityFnId, point, orientation: Orientation | None = None):
    """Evaluate a single function by id through the per-kind evaluators."""
    orient = orientation or Orientation()
    kind, ent, idx = fid
    if kind == "vertex":
        return vertex_shape(ent, point)
    if kind == "tri_edge":
        return tri_edge_shape(ent, idx[0], point, bool(orient.tri_edge[ent]))
    if kind == "quad_edge":
        return quad_edge_shape(ent, idx[0], point)
    if kind == "tri_face":
        return tri_face_shape(ent, idx[0], idx[1], point)
    if kind == "quad_face":
        return quad_face_shape(ent, idx[0], idx[1], point, bool(orient.quad_face[ent]))
    if kind == "volume":
        return volume_shape(idx[0], idx[1], idx[2], point)
    raise ValueError(f"unknown function kind {kind!r}")


# --- 2D mid-surface functions ------------------------------------------------

def triangle_table(p: int, points2d, flips=(False, False, False)):
    """Hierarchical functions of a triangle up to order ``p`` at ``(n, 2)`` points.

    Used for the mid-surface geometry.  Returns values ``(n, m)`` and
    gradients ``(n, m, 2)`` ordered as vertices, edges (0-1, 1-2, 2-0), bubble.
    """
    pts = np.atleast_2d(np.asarray(points2d, dtype=float))
    pts3 = np.column_stack([pts, np.zeros(len(pts))])
    orders = PrismOrders(tri_edge=(p,) * 3 + (1,) * 3, tri_face=(p, 1))
    orient = Orientation(tri_edge=tuple(flips) + (False,) * 3)
    tab = shape_table(orders, pts3, orient, kinds=("vertex", "tri_edge", "tri_face"))
    # at zeta = 0 the bottom functions equal their 2D counterparts; top ones vanish
    keep = [c for c, f in enumerate(tab.ids)
            if (f.kind == "vertex" and f.entity < 3) or (f.kind == "tri_edge" and f.entity < 3)
            or (f.kind == "tri_face" and f.entity == 0)]
    return tab.values[:, keep], tab.grads[:, keep, :2], [tab.ids[c] for c in keep]
