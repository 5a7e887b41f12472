"""Global degrees of freedom, sparse assembly and constraints.

DOFs live on mesh entities.  Vertices, triangle edges and triangles exist
twice (bottom and top layer of the prism mesh) and carry three Cartesian
displacement components.  Through-thickness edges (one per node),
quadrilateral faces (one per mid-surface edge) and prism volumes carry the
convected coefficients ``v`` (one component) and ``w`` (two components).

Global numbering is nodes, triangle edges, triangles, quadrilateral edges,
quadrilateral faces, volumes; inside an entity it runs layer, function,
component.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .polybasis import Orientation, PrismOrders, enumerate_functions, triangle_pairs
from .shellgeom import ShellMesh

log = logging.getLogger(__name__)

# dof kind codes
NODE, TRI_EDGE, TRI, QUAD_EDGE, QUAD_FACE, VOLUME = range(6)
KIND_NAMES = ("node", "tri_edge", "tri", "quad_edge", "quad_face", "volume")


class DofError(ValueError):
    pass


@dataclass(frozen=True)
class ElementSpec:
    """Orders and orientation of one prism as seen by the DOF map."""

    nodes: tuple
    edge_orders: tuple
    face_order: int
    p_v: int
    p_w: int

    @property
    def orientation(self) -> Orientation:
        return Orientation.from_nodes(self.nodes)

    def u_orders(self) -> PrismOrders:
        return PrismOrders(tri_edge=tuple(self.edge_orders) * 2,
                           tri_face=(self.face_order,) * 2)

    def thick_orders(self, p_thick: int) -> PrismOrders:
        return PrismOrders(
            quad_edge=(p_thick,) * 3,
            quad_face=tuple((p_thick, pe) for pe in self.edge_orders),
            volume=(p_thick, self.face_order),
        )

    def function_ids(self):
        """``(u_ids, v_ids, w_ids)`` in canonical element order."""
        u = enumerate_functions(self.u_orders(), ("vertex", "tri_edge", "tri_face"))
        v = enumerate_functions(self.thick_orders(self.p_v), ("quad_edge", "quad_face", "volume"))
        w = enumerate_functions(self.thick_orders(self.p_w), ("quad_edge", "quad_face", "volume"))
        return u, v, w

    @property
    def signature(self):
        return (tuple(self.edge_orders), self.face_order, self.p_v, self.p_w)


def _npairs(p):
    return max(p - 1, 0) * max(p - 2, 0) // 2


@dataclass
class DofMap:
    """Entity to global index map.

    Per-DOF arrays describe every global DOF: its entity kind and id, the
    layer (0 bottom, 1 top; -1 for thickness entities), component (Cartesian
    ``0..2`` for ``u``; ``2`` for ``v`` and ``0``/``1`` for ``w``) and the
    coordinate-system flag (``True`` when expressed in the convected frame).
    """

    mesh: ShellMesh
    face_orders: np.ndarray
    edge_orders: np.ndarray
    p_v: int
    p_w: int
    n_dofs: int
    elem_specs: list
    elem_dofs: list
    kind: np.ndarray
    entity: np.ndarray
    layer: np.ndarray
    comp: np.ndarray
    fn: np.ndarray
    convected: np.ndarray
    offsets: dict = field(default_factory=dict)

    def node_dofs(self, node: int, layer: int) -> np.ndarray:
        base = self.offsets["node"] + (2 * node + layer) * 3
        return np.arange(base, base + 3)

    def summary(self) -> dict:
        return {KIND_NAMES[k]: int(np.sum(self.kind == k)) for k in range(6)}


def build_dof_map(mesh: ShellMesh, face_orders, p_v: int = 2, p_w: int = 2) -> DofMap:
    """Number all DOFs of ``mesh`` for per-triangle face orders.

    Edge orders follow the max rule over the adjacent triangles.
    """
    face_orders = np.broadcast_to(np.asarray(face_orders, dtype=np.int64), (mesh.n_tris,)).copy()
    if np.any(face_orders < 1) or p_v < 1 or p_w < 1:
        raise DofError("orders must be >= 1")
    edge_orders = np.ones(len(mesh.edges), dtype=np.int64)
    for k in range(3):
        np.maximum.at(edge_orders, mesh.tri_edges[:, k], face_orders)

    N, Ne, Nt = mesh.n_nodes, len(mesh.edges), mesh.n_tris
    ne_fn = edge_orders - 1
    nt_fn = np.array([_npairs(p) for p in face_orders], dtype=np.int64)
    nv, nw = p_v - 1, p_w - 1
    sizes = {
        "node": np.full(N, 6),
        "tri_edge": 6 * ne_fn,
        "tri": 6 * nt_fn,
        "quad_edge": np.full(N, nv + 2 * nw),
        "quad_face": (nv + 2 * nw) * ne_fn,
        "volume": (nv + 2 * nw) * nt_fn,
    }
    starts = {}
    offsets = {}
    base = 0
    for name, sz in sizes.items():
        offsets[name] = base
        st = np.concatenate([[0], np.cumsum(sz)])
        starts[name] = base + st[:-1]
        base += int(st[-1])
    n_dofs = base

    kind = np.empty(n_dofs, np.int8)
    entity = np.empty(n_dofs, np.int64)
    layer = np.empty(n_dofs, np.int8)
    comp = np.empty(n_dofs, np.int8)
    fn = np.empty(n_dofs, np.int64)

    def fill_u(code, name, count_fn, n_ent):
        for e in range(n_ent):
            s0 = starts[name][e]
            nf = int(count_fn[e])
            if nf == 0:
                continue
            idx = np.arange(2 * nf * 3)
            sl = slice(s0, s0 + len(idx))
            kind[sl] = code
            entity[sl] = e
            layer[sl] = idx // (nf * 3)
            fn[sl] = (idx // 3) % nf
            comp[sl] = idx % 3

    fill_u(NODE, "node", np.ones(N, np.int64), N)
    fill_u(TRI_EDGE, "tri_edge", ne_fn, Ne)
    fill_u(TRI, "tri", nt_fn, Nt)

    def fill_c(code, name, count_plane, n_ent):
        for e in range(n_ent):
            s0 = starts[name][e]
            npl = int(count_plane[e])
            kv, kw = nv * npl, nw * npl
            if kv:
                sl = slice(s0, s0 + kv)
                kind[sl], entity[sl], layer[sl], comp[sl] = code, e, -1, 2
                fn[sl] = np.arange(kv)
            if kw:
                sl = slice(s0 + kv, s0 + kv + 2 * kw)
                kind[sl], entity[sl], layer[sl] = code, e, -1
                fn[sl] = np.arange(2 * kw) // 2
                comp[sl] = np.arange(2 * kw) % 2

    fill_c(QUAD_EDGE, "quad_edge", np.ones(N, np.int64), N)
    fill_c(QUAD_FACE, "quad_face", ne_fn, Ne)
    fill_c(VOLUME, "volume", nt_fn, Nt)
    convected = kind >= QUAD_EDGE

    specs, elem_dofs = [], []
    for t in range(Nt):
        tri = tuple(int(x) for x in mesh.tris[t])
        tedges = mesh.tri_edges[t]
        spec = ElementSpec(tri, tuple(int(edge_orders[e]) for e in tedges), int(face_orders[t]),
                           p_v, p_w)
        specs.append(spec)
        u_ids, v_ids, w_ids = spec.function_ids()
        dofs = []
        for fid in u_ids:
            if fid.kind == "vertex":
                b = starts["node"][tri[fid.entity % 3]] + (fid.entity // 3) * 3
            elif fid.kind == "tri_edge":
                e = tedges[fid.entity % 3]
                nf = ne_fn[e]
                b = starts["tri_edge"][e] + ((fid.entity // 3) * nf + fid.index[0]) * 3
            else:
                nf = nt_fn[t]
                pos = triangle_pairs(face_orders[t]).index(fid.index)
                b = starts["tri"][t] + (fid.entity * nf + pos) * 3
            dofs += [b, b + 1, b + 2]
        for ids, ncomp, shift_of in ((v_ids, 1, lambda npl: 0), (w_ids, 2, lambda npl: nv * npl)):
            pt = p_v if ncomp == 1 else p_w
            for fid in ids:
                if fid.kind == "quad_edge":
                    b = starts["quad_edge"][tri[fid.entity]] + shift_of(1)
                    pos = fid.index[0]
                elif fid.kind == "quad_face":
                    e = tedges[fid.entity]
                    b = starts["quad_face"][e] + shift_of(ne_fn[e])
                    k, ell = fid.index
                    pos = ell * (pt - 1) + k
                else:
                    b = starts["volume"][t] + shift_of(nt_fn[t])
                    k = fid.index[0]
                    pos = triangle_pairs(face_orders[t]).index(fid.index[1:]) * (pt - 1) + k
                dofs += [b + ncomp * pos + c for c in range(ncomp)]
        elem_dofs.append(np.array(dofs, dtype=np.int64))

    return DofMap(mesh, face_orders, edge_orders, p_v, p_w, n_dofs, specs, elem_dofs,
                  kind, entity, layer, comp, fn, convected, offsets)


# --- assembly ----------------------------------------------------------------

class SparsityPattern:
    """CSR pattern of the global matrix with a scatter map for element blocks."""

    def __init__(self, n_dofs: int, elem_dofs: list):
        self.n = n_dofs
        rows, cols = [], []
        for d in elem_dofs:
            rows.append(np.repeat(d, len(d)))
            cols.append(np.tile(d, len(d)))
        r = np.concatenate(rows) if rows else np.zeros(0, np.int64)
        c = np.concatenate(cols) if cols else np.zeros(0, np.int64)
        key = r * n_dofs + c
        uniq, inverse = np.unique(key, return_inverse=True)
        self.rows = uniq // n_dofs
        self.cols = uniq % n_dofs
        self.scatter = inverse
        self.segments = np.concatenate([[0], np.cumsum([len(d) ** 2 for d in elem_dofs])])
        m = sp.csr_matrix((np.arange(1, len(uniq) + 1, dtype=float), (self.rows, self.cols)),
                          shape=(n_dofs, n_dofs))
        m.sort_indices()
        self.indptr, self.indices = m.indptr, m.indices
        self.csr_pos = m.data.astype(np.int64) - 1  # csr slot -> unique entry

    def matrix(self, blocks: list) -> sp.csr_matrix:
        """Sum element blocks (in element order) into a CSR matrix."""
        flat = np.concatenate([np.asarray(b).ravel() for b in blocks])
        vals = np.bincount(self.scatter, weights=flat, minlength=len(self.rows))
        return sp.csr_matrix((vals[self.csr_pos], self.indices, self.indptr),
                             shape=(self.n, self.n))


def assemble(system, elem: int, vector, tangent, dofmap: DofMap):
    """Scatter-add one element's vector and tangent into ``system``.

    ``system`` is a ``(residual, lil_or_dense_matrix)`` pair; the batched
    :class:`SparsityPattern` path is used for whole-mesh assembly.
    """
    dofs = dofmap.elem_dofs[elem]
    vector = np.asarray(vector)
    if len(vector) != len(dofs):
        raise DofError(f"element {elem} vector has {len(vector)} entries, expected {len(dofs)}")
    if np.any(dofs >= len(system[0])):
        raise DofError("DOF index out of range")
    residual, K = system
    np.add.at(residual, dofs, vector)
    if tangent is not None:
        K[np.ix_(dofs, dofs)] += tangent
    return system


def scatter_vector(n_dofs: int, elem_dofs: list, vectors: list) -> np.ndarray:
    out = np.zeros(n_dofs)
    if elem_dofs:
        np.add.at(out, np.concatenate(elem_dofs), np.concatenate(vectors))
    return out


# --- constraints -------------------------------------------------------------

AXES = {"x": 0, "y": 1, "z": 2}


@dataclass
class Constraints:
    """Fixed DOFs (homogeneous) plus a record of the rules that produced them."""

    n_dofs: int
    fixed: set = field(default_factory=set)
    rules: list = field(default_factory=list)

    def fix(self, dofs):
        self.fixed.update(int(d) for d in np.atleast_1d(dofs))

    @property
    def fixed_array(self) -> np.ndarray:
        return np.array(sorted(self.fixed), dtype=np.int64)

    def free(self) -> np.ndarray:
        mask = np.ones(self.n_dofs, bool)
        mask[self.fixed_array] = False
        return np.flatnonzero(mask)


def _set_entities(mesh: ShellMesh, name: str):
    kind, ids = mesh.get_set(name)
    nodes = mesh.set_nodes(name)
    edges = mesh.set_edges(name)
    tris = np.unique(ids) if kind == "tri" else np.zeros(0, np.int64)
    return nodes, edges, tris


def fix_directions(constraints: Constraints, dofmap: DofMap, set_name: str, axes) -> Constraints:
    """Fix displacement components along Cartesian ``axes`` on a mesh set.

    Cartesian ``u`` DOFs are fixed component-wise.  A convected DOF is fixed
    when its reference frame direction at the entity nodes lies in the
    constrained subspace and left free when it is orthogonal to it.
    """
    mesh = dofmap.mesh
    axes = sorted({AXES[a] if isinstance(a, str) else int(a) for a in axes})
    nodes, edges, tris = _set_entities(mesh, set_name)
    in_node = np.zeros(mesh.n_nodes, bool)
    in_node[nodes] = True
    in_edge = np.zeros(len(mesh.edges), bool)
    in_edge[edges] = True
    in_tri = np.zeros(mesh.n_tris, bool)
    in_tri[tris] = True

    k, ent, c = dofmap.kind, dofmap.entity, dofmap.comp
    u_hit = ((k == NODE) & in_node[np.where(k == NODE, ent, 0)]) \
        | ((k == TRI_EDGE) & in_edge[np.where(k == TRI_EDGE, ent, 0)]) \
        | ((k == TRI) & in_tri[np.where(k == TRI, ent, 0)])
    u_hit &= np.isin(c, axes)
    constraints.fix(np.flatnonzero(u_hit))

    # convected DOFs: classify frame directions per node
    t0, t1 = mesh.tangent_frames()
    frame = np.stack([t0, t1, mesh.directors], axis=1)  # (N, 3 dirs, 3)
    proj = np.linalg.norm(frame[:, :, axes], axis=-1)  # (N, 3)
    oblique = (proj > 1e-6) & (proj < 1 - 1e-6)
    if np.any(oblique[nodes]):
        log.warning("set %r: convected frame oblique to constrained axes %s; "
                    "fixing components with projection > 0.5", set_name, axes)
    node_fix = proj > 0.5  # (N, a)
    edge_fix = node_fix[mesh.edges[:, 0]] & node_fix[mesh.edges[:, 1]]
    tri_fix = node_fix[mesh.tris].all(axis=1)
    conv = np.zeros(dofmap.n_dofs, bool)
    for code, in_ent, fix_tab in ((QUAD_EDGE, in_node, node_fix), (QUAD_FACE, in_edge, edge_fix),
                                  (VOLUME, in_tri, tri_fix)):
        sel = np.flatnonzero(k == code)
        ok = in_ent[ent[sel]] & fix_tab[ent[sel], c[sel]]
        conv[sel[ok]] = True
    constraints.fix(np.flatnonzero(conv))
    constraints.rules.append((set_name, tuple(axes)))
    return constraints


def apply_symmetry(constraints: Constraints, dofmap: DofMap, specs) -> Constraints:
    """Apply boundary conditions given as ``(set_name, kind)`` pairs.

    ``kind`` is ``"sym_x"``/``"sym_y"``/``"sym_z"`` (normal component fixed),
    ``"clamp"`` (all components), ``"diaphragm_x"`` etc. (components in the
    plane normal to the axis), or an explicit axis string such as ``"yz"``.
    """
    for name, kind in specs:
        dofmap.mesh.get_set(name)
        if kind.startswith("sym_"):
            axes = kind[4:]
        elif kind == "clamp":
            axes = "xyz"
        elif kind.startswith("diaphragm_"):
            axes = "xyz".replace(kind[-1], "")
        elif set(kind) <= set("xyz") and kind:
            axes = kind
        else:
            raise DofError(f"unknown constraint kind {kind!r}")
        fix_directions(constraints, dofmap, name, axes)
    return constraints
