"""Prism element integration: strain energy, internal forces, tangent and loads.

Element DOFs are laid out as the Cartesian ``u`` coefficients (function
major, component minor), followed by the ``v`` coefficients and then the
``w`` coefficients (function major, the two convected components minor).

The kernels work on batches of elements sharing one order signature and
orientation pattern, so shape tables are evaluated once per batch.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np

from .dofmesh import ElementSpec
from .kinematics import I3, Material, material_tangent, svk_energy, svk_stress
from .polybasis import Orientation, shape_table
from .quadrature import Quadrature, make_quadrature, segment_rule, triangle_rule
from .shellgeom import GeometryError, ShellMesh, frames, jacobians, mid_surface

CHUNK_BYTES = 48e6


class ElementInversionError(ArithmeticError):
    """The current configuration of an element is inverted (det F <= 0)."""


class ElementState(NamedTuple):
    u: np.ndarray  # (n_u, 3) Cartesian
    v: np.ndarray  # (n_v,)
    w: np.ndarray  # (n_w, 2)


class ElementVectors(NamedTuple):
    f_u: np.ndarray
    f_v: np.ndarray
    f_w: np.ndarray


class ElementTangent(NamedTuple):
    """Tangent blocks ``K[a][b]`` for ``a, b`` in ``(u, v, w)`` plus the full matrix."""

    blocks: tuple
    full: np.ndarray


@dataclass(frozen=True)
class Shapes:
    """Shape values and reference gradients of one spec at quadrature points."""

    quad: Quadrature
    Nu: np.ndarray  # (nq, nu)
    dNu: np.ndarray  # (nq, nu, 3)
    dNv: np.ndarray
    dNw: np.ndarray
    u_ids: tuple
    v_ids: tuple
    w_ids: tuple

    @property
    def sizes(self):
        return len(self.u_ids), len(self.v_ids), len(self.w_ids)

    @property
    def n_dofs(self):
        nu, nv, nw = self.sizes
        return 3 * nu + nv + 2 * nw


def quadrature_for(spec: ElementSpec) -> Quadrature:
    p_face = max(max(spec.edge_orders), spec.face_order)
    return make_quadrature(p_face, max(spec.p_v, spec.p_w))


@lru_cache(maxsize=256)
def element_shapes(spec_key, nodes_order) -> Shapes:
    """Shape tables for an order signature and orientation (cached)."""
    edge_orders, face_order, p_v, p_w = spec_key
    spec = ElementSpec(nodes_order, edge_orders, face_order, p_v, p_w)
    quad = quadrature_for(spec)
    pts = quad.points
    orient = Orientation.from_nodes(nodes_order)
    tu = shape_table(spec.u_orders(), pts, orient, ("vertex", "tri_edge", "tri_face"))
    tv = shape_table(spec.thick_orders(p_v), pts, orient, ("quad_edge", "quad_face", "volume"))
    tw = shape_table(spec.thick_orders(p_w), pts, orient, ("quad_edge", "quad_face", "volume"))
    return Shapes(quad, tu.values, tu.grads, tv.grads, tw.grads,
                  tuple(tu.ids), tuple(tv.ids), tuple(tw.ids))


def orientation_key(nodes) -> tuple:
    """Representative node triple with the same relative ordering as ``nodes``."""
    ranks = np.argsort(np.argsort(np.asarray(nodes)))
    return tuple(int(r) for r in ranks)


def local_keys(spec: ElementSpec) -> list:
    """Identity of every local DOF as ``(field, EntityFnId, component)``."""
    u, v, w = spec.function_ids()
    keys = [("u", f, i) for f in u for i in range(3)]
    keys += [("v", f, 2) for f in v]
    keys += [("w", f, a) for f in w for a in range(2)]
    return keys


class Geometry(NamedTuple):
    Jinv: np.ndarray  # (ne, nq, 3, 3)
    dV: np.ndarray  # (ne, nq)
    G: np.ndarray  # (ne, nq, 3, 3)


def element_geometry(mesh: ShellMesh, elems, quad: Quadrature) -> Geometry:
    elems = np.atleast_1d(elems)
    pts = quad.points
    ms = mid_surface(mesh, elems, pts)
    J = jacobians(mesh, elems, pts, ms)
    det = np.linalg.det(J)
    if np.any(det <= 0):
        bad = elems[np.argmin(det.min(axis=1))]
        raise GeometryError(f"element {int(bad)} has non-positive Jacobian")
    G = frames(mesh, elems, pts, ms)
    return Geometry(np.linalg.inv(J), det * quad.weights[None, :], G)


def split_state(X, sizes):
    """Split element DOF arrays ``(ne, ndof)`` into ``u (ne,nu,3), v, w (ne,nw,2)``."""
    nu, nv, nw = sizes
    X = np.asarray(X, float)
    ne = X.shape[0]
    xu = X[:, :3 * nu].reshape(ne, nu, 3)
    xv = X[:, 3 * nu:3 * nu + nv]
    xw = X[:, 3 * nu + nv:].reshape(ne, nw, 2)
    return xu, xv, xw


def _chunks(ne, nq, ndof):
    per = max(nq * 9 * ndof * 8 * 3, 1)
    step = max(1, int(CHUNK_BYTES // per))
    for s in range(0, ne, step):
        yield slice(s, min(ne, s + step))


def _kinematics(shp: Shapes, geo: Geometry, X):
    """Cartesian shape gradients and deformation quantities of a chunk."""
    xu, xv, xw = split_state(X, shp.sizes)
    gu = shp.dNu[None] @ geo.Jinv  # (ne, nq, nu, 3)
    gv = shp.dNv[None] @ geo.Jinv
    gw = shp.dNw[None] @ geo.Jinv
    grad_u = np.swapaxes(xu, 1, 2)[:, None] @ gu  # (ne, nq, 3, 3)
    grad_v = np.einsum("em,eqmJ->eqJ", xv, gv)
    grad_w = np.swapaxes(xw, 1, 2)[:, None] @ gw  # (ne, nq, 2, 3)
    gc = np.concatenate([grad_w, grad_v[:, :, None, :]], axis=2)
    MF = I3 + grad_u
    grad_h = geo.G @ gc
    H = I3 + grad_h
    # F - I formed without cancellation so small strains keep full precision
    D = grad_u + grad_h + grad_u @ grad_h
    F = I3 + D
    detF = np.linalg.det(F)
    detM = np.linalg.det(MF)
    if np.any(detF <= 0) or np.any(detM <= 0):
        raise ElementInversionError(
            f"inverted configuration (min det F = {min(detF.min(), detM.min()):.3e})")
    return gu, gv, gw, MF, H, F, D


def _green(D):
    Dt = np.swapaxes(D, -1, -2)
    return 0.5 * (D + Dt + Dt @ D)


def _stress(F, D, material):
    E = _green(D)
    S = svk_stress(E, material)
    return E, S, F @ S


def batch_energy(shp, geo, X, material) -> np.ndarray:
    """Strain energy of each element in the batch."""
    out = np.empty(len(X))
    for sl in _chunks(len(X), len(shp.quad.weights), shp.n_dofs):
        g = Geometry(geo.Jinv[sl], geo.dV[sl], geo.G[sl])
        *_, D = _kinematics(shp, g, X[sl])
        E = _green(D)
        out[sl] = np.sum(svk_energy(E, material) * g.dV, axis=1)
    return out


def _forces(gu, gv, gw, MF, H, P, G, dV):
    gP = np.swapaxes(MF @ G, -1, -2) @ P  # rows g_a . P
    fu = np.sum(((gu * dV[..., None, None]) @ np.swapaxes(P @ np.swapaxes(H, -1, -2), -1, -2)),
                axis=1)  # (ne, nu, 3)
    fv = np.einsum("eqmJ,eqJ,eq->em", gv, gP[:, :, 2], dV)
    fw = np.einsum("eqmJ,eqaJ,eq->ema", gw, gP[:, :, :2], dV)
    return fu, fv, fw


def batch_forces(shp, geo, X, material) -> np.ndarray:
    """Internal force vectors ``(ne, ndof)`` of a batch."""
    out = np.empty((len(X), shp.n_dofs))
    for sl in _chunks(len(X), len(shp.quad.weights), shp.n_dofs):
        g = Geometry(geo.Jinv[sl], geo.dV[sl], geo.G[sl])
        gu, gv, gw, MF, H, F, D = _kinematics(shp, g, X[sl])
        _, _, P = _stress(F, D, material)
        fu, fv, fw = _forces(gu, gv, gw, MF, H, P, g.G, g.dV)
        n = fu.shape[0]
        out[sl] = np.concatenate([fu.reshape(n, -1), fv, fw.reshape(n, -1)], axis=1)
    return out


def batch_tangent(shp, geo, X, material):
    """Internal forces ``(ne, ndof)`` and tangents ``(ne, ndof, ndof)`` of a batch."""
    nu, nv, nw = shp.sizes
    ndof = shp.n_dofs
    nq = len(shp.quad.weights)
    f_out = np.empty((len(X), ndof))
    K_out = np.empty((len(X), ndof, ndof))
    for sl in _chunks(len(X), nq, ndof):
        g = Geometry(geo.Jinv[sl], geo.dV[sl], geo.G[sl])
        gu, gv, gw, MF, H, F, D = _kinematics(shp, g, X[sl])
        _, S, P = _stress(F, D, material)
        fu, fv, fw = _forces(gu, gv, gw, MF, H, P, g.G, g.dV)
        ne = fu.shape[0]
        f_out[sl] = np.concatenate([fu.reshape(ne, -1), fv, fw.reshape(ne, -1)], axis=1)

        gcur = MF @ g.G  # columns g_a
        B = np.zeros((ne, nq, 3, 3, ndof))
        b = gu @ H  # (ne, nq, nu, 3): H^T grad N
        bu = B[..., :3 * nu].reshape(ne, nq, 3, 3, nu, 3)
        bt = np.swapaxes(b, 2, 3)  # (ne, nq, 3J, nu)
        for i in range(3):
            bu[:, :, i, :, :, i] = bt
        B[..., 3 * nu:3 * nu + nv] = (gcur[..., 2][..., None, None]
                                      * np.swapaxes(gv, 2, 3)[:, :, None])
        B[..., 3 * nu + nv:] = (gcur[..., :2][:, :, :, None, None, :]
                                * np.swapaxes(gw, 2, 3)[:, :, None, :, :, None]).reshape(
            ne, nq, 3, 3, 2 * nw)
        B = B.reshape(ne, nq, 9, ndof)
        A = material_tangent(F, S, material) * g.dV[..., None, None]
        AB = (A @ B).reshape(ne, nq * 9, ndof)
        K = np.swapaxes(B.reshape(ne, nq * 9, ndof), 1, 2) @ AB

        # second variation of F couples u and the enrichment fields
        NG = gu @ g.G  # (ne, nq, nu, 3a): grad N_k . G_a
        Pt = np.swapaxes(P, -1, -2)
        PMv = gv @ Pt  # (ne, nq, nv, 3i): (P grad M)_i
        PMw = gw @ Pt
        NGd = NG * g.dV[..., None, None]
        # contractions over q as batched products: (ne, nu, q) @ (ne, q, n*3)
        Kuv = (np.swapaxes(NGd[..., 2], 1, 2) @ PMv.reshape(ne, nq, -1)).reshape(ne, nu, nv, 3)
        Kuv = np.swapaxes(Kuv, 2, 3).reshape(ne, 3 * nu, nv)
        Kuw = (np.swapaxes(NGd[..., :2].reshape(ne, nq, 2 * nu), 1, 2)
               @ PMw.reshape(ne, nq, -1)).reshape(ne, nu, 2, nw, 3)
        Kuw = Kuw.transpose(0, 1, 4, 3, 2).reshape(ne, 3 * nu, 2 * nw)
        K[:, :3 * nu, 3 * nu:3 * nu + nv] += Kuv
        K[:, 3 * nu:3 * nu + nv, :3 * nu] += np.swapaxes(Kuv, 1, 2)
        K[:, :3 * nu, 3 * nu + nv:] += Kuw
        K[:, 3 * nu + nv:, :3 * nu] += np.swapaxes(Kuw, 1, 2)
        K_out[sl] = K
    return f_out, K_out


def batch_stress(shp, geo, X, material):
    """Cauchy stress (Cartesian) at the quadrature points, ``(ne, nq, 3, 3)``."""
    *_, F, D = _kinematics(shp, geo, X)
    _, S, P = _stress(F, D, material)
    J = np.linalg.det(F)
    return (P @ np.swapaxes(F, -1, -2)) / J[..., None, None]


# --- single-element interface --------------------------------------------------

@dataclass
class Element:
    """One prism of a mesh with its orders and material."""

    mesh: ShellMesh
    index: int
    spec: ElementSpec
    material: Material

    def __post_init__(self):
        self.shapes = element_shapes(self.spec.signature, orientation_key(self.spec.nodes))
        self.geometry = element_geometry(self.mesh, [self.index], self.shapes.quad)

    @property
    def quadrature(self) -> Quadrature:
        return self.shapes.quad

    def pack(self, state: ElementState) -> np.ndarray:
        nu, nv, nw = self.shapes.sizes
        u = np.asarray(state.u, float).reshape(nu, 3)
        v = np.asarray(state.v, float).reshape(nv)
        w = np.asarray(state.w, float).reshape(nw, 2)
        return np.concatenate([u.ravel(), v, w.ravel()])

    def unpack(self, x) -> ElementState:
        xu, xv, xw = split_state(np.asarray(x, float)[None], self.shapes.sizes)
        return ElementState(xu[0], xv[0], xw[0])

    def zero_state(self) -> ElementState:
        return self.unpack(np.zeros(self.shapes.n_dofs))

    def split(self, vec) -> ElementVectors:
        s = self.unpack(vec)
        return ElementVectors(s.u, s.v, s.w)

    def energy(self, state) -> float:
        x = state if isinstance(state, np.ndarray) else self.pack(state)
        return float(batch_energy(self.shapes, self.geometry, x[None], self.material)[0])

    def forces_vector(self, x) -> np.ndarray:
        return batch_forces(self.shapes, self.geometry, np.asarray(x, float)[None], self.material)[0]

    def tangent_matrix(self, x):
        f, K = batch_tangent(self.shapes, self.geometry, np.asarray(x, float)[None], self.material)
        return f[0], K[0]


def internal_forces(elem: Element, state: ElementState) -> ElementVectors:
    """Internal force vectors of one element at ``state``."""
    return elem.split(elem.forces_vector(elem.pack(state)))


def tangent(elem: Element, state: ElementState) -> ElementTangent:
    """Consistent tangent of one element, split into ``u, v, w`` blocks."""
    _, K = elem.tangent_matrix(elem.pack(state))
    nu, nv, nw = elem.shapes.sizes
    cuts = np.cumsum([0, 3 * nu, nv, 2 * nw])
    blocks = tuple(tuple(K[cuts[a]:cuts[a + 1], cuts[b]:cuts[b + 1]] for b in range(3))
                   for a in range(3))
    return ElementTangent(blocks, K)


# --- external loads --------------------------------------------------------------

@dataclass(frozen=True)
class Load:
    """Fixed-direction load.

    ``kind`` is ``"point"`` (force on the nodes of a set, shared equally by
    the top and bottom vertices), ``"edge"`` (force per unit length along
    the mid-surface edges of a set), ``"surface"`` (force per unit
    mid-surface area, e.g. self-weight; ``set_name=None`` loads every
    triangle) or ``"pressure"`` (magnitude along the reference director).
    """

    kind: str
    set_name: str | None
    value: tuple

    def __post_init__(self):
        if self.kind not in ("point", "edge", "surface", "self_weight", "pressure"):
            raise ValueError(f"unknown load kind {self.kind!r}")


def self_weight(q: float, direction=(0.0, 0.0, -1.0), set_name=None) -> Load:
    d = np.asarray(direction, float)
    return Load("surface", set_name, tuple(q * d / np.linalg.norm(d)))


_EDGE_MAP = (
    (lambda s: np.column_stack([s, 0 * s])),
    (lambda s: np.column_stack([1 - s, s])),
    (lambda s: np.column_stack([0 * s, 1 - s])),
)


def element_surface_load(mesh: ShellMesh, spec: ElementSpec, elem: int, load: Load,
                         extra_degree: int = 4) -> np.ndarray:
    """Consistent load on the ``u`` functions of one element (local ``u`` DOFs)."""
    p = max(max(spec.edge_orders), spec.face_order)
    tp, tw = triangle_rule(p + extra_degree)
    pts = np.column_stack([tp, np.full(len(tp), 0.5)])
    tab = shape_table(spec.u_orders(), pts, spec.orientation, ("vertex", "tri_edge", "tri_face"))
    ms = mid_surface(mesh, [elem], pts)
    n = np.cross(ms.dZ[0, :, :, 0], ms.dZ[0, :, :, 1])
    dA = np.linalg.norm(n, axis=1)
    if load.kind == "pressure":
        q = float(np.ravel(load.value)[0]) * ms.D[0]
    else:
        q = np.broadcast_to(np.asarray(load.value, float), (len(tp), 3))
    return np.einsum("qk,qi,q->ki", tab.values, q, dA * tw).ravel()


def element_edge_load(mesh: ShellMesh, spec: ElementSpec, elem: int, local_edge: int,
                      load: Load, extra_degree: int = 4) -> np.ndarray:
    p = max(max(spec.edge_orders), spec.face_order)
    s, w = segment_rule((p + extra_degree) // 2 + 1)
    pts2 = _EDGE_MAP[local_edge](s)
    pts = np.column_stack([pts2, np.full(len(s), 0.5)])
    tab = shape_table(spec.u_orders(), pts, spec.orientation, ("vertex", "tri_edge", "tri_face"))
    ms = mid_surface(mesh, [elem], pts)
    dxi = _EDGE_MAP[local_edge](np.array([1.0]))[0] - _EDGE_MAP[local_edge](np.array([0.0]))[0]
    tangent_vec = ms.dZ[0] @ dxi
    ds = np.linalg.norm(tangent_vec, axis=1)
    q = np.asarray(load.value, float)
    return np.einsum("qk,i,q->ki", tab.values, q, ds * w).ravel()


def element_loads(mesh: ShellMesh, spec: ElementSpec, elem: int, loads) -> np.ndarray:
    """Element-local consistent load on the ``u`` DOFs of one element.

    Point loads act on vertex DOFs only and are handled at the global level,
    so they contribute nothing here.
    """
    nu = len(spec.function_ids()[0])
    f = np.zeros(3 * nu)
    for load in loads:
        if load.kind == "point":
            continue
        if load.kind == "edge":
            edges = set(mesh.set_edges(load.set_name).tolist())
            for j in range(3):
                if int(mesh.tri_edges[elem, j]) in edges:
                    f += element_edge_load(mesh, spec, elem, j, load)
            continue
        if load.set_name is not None:
            kind, ids = mesh.get_set(load.set_name)
            if elem not in set(ids.tolist()):
                continue
        f += element_surface_load(mesh, spec, elem, load)
    return f


def external_forces(mesh: ShellMesh, specs, elem_dofs, n_dofs: int, load: Load,
                    node_dofs=None) -> np.ndarray:
    """Global load vector of ``load`` acting on ``u`` DOFs only.

    ``specs``/``elem_dofs`` come from the DOF map; ``node_dofs(node, layer)``
    returns the three vertex DOFs of a node layer (needed for point loads).
    """
    f = np.zeros(n_dofs)
    if load.kind == "point":
        nodes = mesh.set_nodes(load.set_name)
        P = np.asarray(load.value, float)
        for n in nodes:
            for layer in (0, 1):
                f[node_dofs(int(n), layer)] += 0.5 * P
        return f
    if load.kind == "edge":
        edges = set(mesh.set_edges(load.set_name).tolist())
        if not edges:
            raise ValueError(f"set {load.set_name!r} contains no edges")
        done = set()
        for t in range(mesh.n_tris):
            for j in range(3):
                e = int(mesh.tri_edges[t, j])
                if e in edges and e not in done:
                    done.add(e)
                    fe = element_edge_load(mesh, specs[t], t, j, load)
                    f[elem_dofs[t][:len(fe)]] += fe
        return f
    if load.set_name is None:
        tris = range(mesh.n_tris)
    else:
        kind, ids = mesh.get_set(load.set_name)
        if kind != "tri":
            raise ValueError(f"surface load needs a triangle set, {load.set_name!r} is {kind}")
        tris = ids
    for t in tris:
        fe = element_surface_load(mesh, specs[t], int(t), load)
        f[elem_dofs[t][:len(fe)]] += fe
    return f
