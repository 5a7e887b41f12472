"""Reference shell geometry: mid-surface mesh, directors, Jacobians and local bases.

A shell is described by a triangulated mid-surface.  Every triangle is
extruded along the nodal director field into one prism, so the position of
a point with reference coordinates ``(xi, eta, zeta)`` is::

    Z = Zm(xi, eta) + a(xi, eta) * (zeta - 1/2) * D(xi, eta)

where ``Zm``, ``D`` and ``a`` are interpolated from nodal (and, for curved
geometry, edge) coefficients with the hierarchical triangle functions.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .polybasis import triangle_table

MESH_HEADER = "prismshell-mesh v1"


class GeometryError(ValueError):
    """Degenerate or inverted geometry."""


class MeshFormatError(ValueError):
    """Malformed mesh file; the message carries the offending line number."""


@dataclass
class ShellMesh:
    """Triangulated mid-surface with directors, thickness and named sets.

    ``sets`` maps a name to ``(kind, ids)`` where kind is ``"node"``,
    ``"edge"`` or ``"tri"``.  Edge ids index :attr:`edges`, the sorted list
    of unique node pairs.  ``edge_z``/``edge_d`` are optional quadratic
    geometry coefficients (one row per edge) of the mid-surface and the
    director; without them the geometry is piecewise flat.
    """

    nodes: np.ndarray
    tris: np.ndarray
    directors: np.ndarray | None = None
    thickness: np.ndarray | None = None
    sets: dict = field(default_factory=dict)
    edge_z: np.ndarray | None = None
    edge_d: np.ndarray | None = None
    frame_axis: np.ndarray | None = None

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=float).reshape(-1, 3)
        self.tris = np.asarray(self.tris, dtype=np.int64).reshape(-1, 3)
        if self.tris.size and (self.tris.min() < 0 or self.tris.max() >= len(self.nodes)):
            raise GeometryError("triangle references a nonexistent node")
        edges, tri_edges = _edge_topology(self.tris)
        self._edges = edges
        self._tri_edges = tri_edges
        if self.thickness is None:
            self.thickness = np.ones(len(self.nodes))
        self.thickness = np.broadcast_to(np.asarray(self.thickness, dtype=float),
                                         (len(self.nodes),)).copy()
        if np.any(self.thickness <= 0):
            raise GeometryError("thickness must be positive")
        if self.directors is None:
            self.directors = area_weighted_normals(self.nodes, self.tris)
        self.directors = np.asarray(self.directors, dtype=float).reshape(-1, 3)
        norms = np.linalg.norm(self.directors, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-12):
            self.directors = self.directors / norms[:, None]
        self.sets = {k: (kind, np.asarray(ids, dtype=np.int64)) for k, (kind, ids) in self.sets.items()}
        self._frames = None

    @property
    def edges(self) -> np.ndarray:
        return self._edges

    @property
    def tri_edges(self) -> np.ndarray:
        """Edge index of local edges (0-1, 1-2, 2-0) of every triangle."""
        return self._tri_edges

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_tris(self) -> int:
        return len(self.tris)

    @property
    def geometry_order(self) -> int:
        return 1 if self.edge_z is None else 2

    def edge_index(self, pairs) -> np.ndarray:
        """Edge ids of node pairs (either orientation)."""
        pairs = np.sort(np.asarray(pairs, dtype=np.int64).reshape(-1, 2), axis=1)
        lookup = {tuple(e): i for i, e in enumerate(self._edges)}
        try:
            return np.array([lookup[tuple(p)] for p in pairs], dtype=np.int64)
        except KeyError as exc:
            raise GeometryError(f"node pair {exc.args[0]} is not a mesh edge") from None

    def set_nodes(self, name: str) -> np.ndarray:
        """All nodes touched by a named set."""
        kind, ids = self.get_set(name)
        if kind == "node":
            return np.unique(ids)
        if kind == "edge":
            return np.unique(self._edges[ids])
        return np.unique(self.tris[ids])

    def set_edges(self, name: str) -> np.ndarray:
        """Edges lying inside a named set (both end nodes for node sets)."""
        kind, ids = self.get_set(name)
        if kind == "edge":
            return np.unique(ids)
        if kind == "tri":
            return np.unique(self._tri_edges[ids])
        inset = np.zeros(self.n_nodes, bool)
        inset[ids] = True
        return np.flatnonzero(inset[self._edges[:, 0]] & inset[self._edges[:, 1]])

    def get_set(self, name: str):
        if name not in self.sets:
            raise KeyError(f"mesh has no set named {name!r}; known: {sorted(self.sets)}")
        return self.sets[name]

    def tangent_frames(self) -> tuple[np.ndarray, np.ndarray]:
        """Orthonormal nodal tangent pairs ``(t0, t1)`` with ``t0 x t1 = D``.

        ``t0`` is the normalised ``axis x D`` for a mesh-wide axis, chosen
        among the Cartesian axes as the one furthest from parallel to every
        director unless :attr:`frame_axis` is given.
        """
        if self._frames is None:
            D = self.directors
            if self.frame_axis is not None:
                axis = np.asarray(self.frame_axis, float)
            else:
                cands = np.eye(3)
                score = [np.min(np.linalg.norm(np.cross(c, D), axis=1)) for c in cands]
                axis = cands[int(np.argmax(score))]
            t0 = np.cross(axis, D)
            n0 = np.linalg.norm(t0, axis=1)
            if np.any(n0 < 1e-8):
                raise GeometryError("frame axis is parallel to a director; set frame_axis")
            t0 /= n0[:, None]
            t1 = np.cross(D, t0)
            self._frames = (t0, t1)
        return self._frames

    def with_sets(self, **sets) -> "ShellMesh":
        merged = dict(self.sets)
        merged.update(sets)
        return replace(self, sets=merged)


def _edge_topology(tris: np.ndarray):
    local = np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
    keyed = np.sort(local, axis=1)
    edges, inverse = np.unique(keyed, axis=0, return_inverse=True)
    tri_edges = inverse.reshape(3, -1).T.copy()
    return edges, tri_edges


def area_weighted_normals(nodes, tris) -> np.ndarray:
    """Normalised area-weighted average of the triangle normals around each node."""
    X = np.asarray(nodes, dtype=float)
    t = np.asarray(tris, dtype=np.int64)
    normals = np.cross(X[t[:, 1]] - X[t[:, 0]], X[t[:, 2]] - X[t[:, 0]])  # 2 * area * n
    area2 = np.linalg.norm(normals, axis=1)
    scale = max(np.max(area2, initial=0.0), 1e-300)
    bad = np.flatnonzero(area2 <= 1e-14 * scale)
    if len(bad):
        raise GeometryError(f"triangle {int(bad[0])} has zero area")
    acc = np.zeros_like(X)
    for k in range(3):
        np.add.at(acc, t[:, k], normals)
    norms = np.linalg.norm(acc, axis=1)
    if np.any(norms == 0):
        raise GeometryError(f"node {int(np.argmin(norms))} has no adjacent triangle")
    return acc / norms[:, None]


def compute_directors(mesh: ShellMesh) -> ShellMesh:
    """Copy of ``mesh`` with directors recomputed from the triangle normals."""
    return replace(mesh, directors=area_weighted_normals(mesh.nodes, mesh.tris))


def spin(a) -> np.ndarray:
    """Skew matrix with ``spin(a) @ b == cross(a, b)``; batched over leading axes."""
    a = np.asarray(a, dtype=float)
    S = np.zeros(a.shape[:-1] + (3, 3))
    S[..., 0, 1] = -a[..., 2]
    S[..., 0, 2] = a[..., 1]
    S[..., 1, 0] = a[..., 2]
    S[..., 1, 2] = -a[..., 0]
    S[..., 2, 0] = -a[..., 1]
    S[..., 2, 1] = a[..., 0]
    return S


class RefFrame(NamedTuple):
    """Local reference bases at a batch of points (columns are the vectors)."""

    cov: np.ndarray  # G_A, (..., 3, 3)
    contra: np.ndarray  # G^A, (..., 3, 3)
    metric: np.ndarray  # G^A . G^B
    J: np.ndarray  # dZ/dxi, (..., 3, 3)
    detJ: np.ndarray


class MidSurface(NamedTuple):
    """Interpolated mid-surface fields of a batch of elements at points."""

    Z: np.ndarray  # (ne, nq, 3)
    dZ: np.ndarray  # (ne, nq, 3, 2)
    D: np.ndarray
    dD: np.ndarray
    a: np.ndarray  # interpolated thickness (ne, nq)
    a_elem: np.ndarray  # element thickness (ne,)
    t0: np.ndarray  # interpolated tangents (ne, nq, 3)
    t1: np.ndarray


def mid_surface(mesh: ShellMesh, elems, points) -> MidSurface:
    """Evaluate mid-surface fields of elements ``elems`` at reference points ``(nq, 2|3)``."""
    elems = np.atleast_1d(np.asarray(elems, dtype=np.int64))
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    vals, grads, _ = triangle_table(mesh.geometry_order, pts[:, :2])
    tri = mesh.tris[elems]  # (ne, 3)
    Zc = mesh.nodes[tri]  # (ne, 3, 3)
    Dc = mesh.directors[tri]
    if mesh.geometry_order == 2:
        te = mesh.tri_edges[elems]
        Zc = np.concatenate([Zc, mesh.edge_z[te]], axis=1)
        Dc = np.concatenate([Dc, mesh.edge_d[te]], axis=1)
    nv = vals[:, :3]
    Z = np.einsum("qk,ekc->eqc", vals, Zc)
    dZ = np.einsum("qkd,ekc->eqcd", grads, Zc)
    D = np.einsum("qk,ekc->eqc", vals, Dc)
    dD = np.einsum("qkd,ekc->eqcd", grads, Dc)
    a_nodes = mesh.thickness[tri]
    a = nv @ a_nodes.T
    t0n, t1n = mesh.tangent_frames()
    t0 = np.einsum("qk,ekc->eqc", nv, t0n[tri])
    t1 = np.einsum("qk,ekc->eqc", nv, t1n[tri])
    return MidSurface(Z, dZ, D, dD, a.T, a_nodes.mean(axis=1), t0, t1)


def _split(points):
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    return pts, pts[:, 2]


def reference_position(mesh: ShellMesh, elem, point) -> np.ndarray:
    """Reference positions ``(n, 3)`` of points of one element."""
    pts, zeta = _split(point)
    m = mid_surface(mesh, [elem], pts)
    return m.Z[0] + (m.a[0] * (zeta - 0.5))[:, None] * m.D[0]


def jacobians(mesh: ShellMesh, elems, points, ms: MidSurface | None = None) -> np.ndarray:
    """Jacobians ``dZ/dxi`` of shape ``(ne, nq, 3, 3)`` (columns xi, eta, zeta).

    The thickness is taken constant per element (the nodal mean).
    """
    pts, zeta = _split(points)
    m = ms if ms is not None else mid_surface(mesh, elems, pts)
    a = m.a_elem[:, None, None, None]
    J = np.empty(m.Z.shape[:2] + (3, 3))
    J[..., :2] = m.dZ + a * (zeta - 0.5)[None, :, None, None] * m.dD
    J[..., 2] = m.a_elem[:, None, None] * m.D
    return J


def jacobian(mesh: ShellMesh, elem, point) -> np.ndarray:
    """Jacobian of one element at points, ``(n, 3, 3)``; raises on inversion."""
    J = jacobians(mesh, [elem], point)[0]
    det = np.linalg.det(J)
    if np.any(det <= 0):
        raise GeometryError(f"element {elem} is inverted (det J = {det.min():.3e})")
    return J


def frames(mesh: ShellMesh, elems, points, ms: MidSurface | None = None):
    """Covariant local frame ``[G_0 G_1 G_2]`` (ne, nq, 3, 3) from nodal tangents.

    ``G_0``, ``G_1`` interpolate the nodal tangent pairs; ``G_2`` is their
    normalised cross product scaled by the element thickness.
    """
    pts, _ = _split(points)
    m = ms if ms is not None else mid_surface(mesh, elems, pts)
    cr = np.cross(m.t0, m.t1)
    nrm = np.linalg.norm(cr, axis=-1)
    ref = np.linalg.norm(m.t0, axis=-1) * np.linalg.norm(m.t1, axis=-1)
    if np.any(nrm < 1e-12 * ref):
        raise GeometryError("interpolated tangents are (nearly) parallel")
    G = np.empty(m.Z.shape[:2] + (3, 3))
    G[..., 0] = m.t0
    G[..., 1] = m.t1
    G[..., 2] = (m.a_elem[:, None] / nrm)[..., None] * cr
    return G


def curvilinear_basis(mesh: ShellMesh, elem, point) -> RefFrame:
    """Local frame, its dual, metric and the Jacobian at points of one element."""
    pts, _ = _split(point)
    m = mid_surface(mesh, [elem], pts)
    G = frames(mesh, [elem], pts, m)[0]
    J = jacobians(mesh, [elem], pts, m)[0]
    contra = np.linalg.inv(G).transpose(0, 2, 1)
    metric = np.einsum("qia,qib->qab", contra, contra)
    return RefFrame(G, contra, metric, J, np.linalg.det(J))


# --- mesh file ---------------------------------------------------------------

def read_mesh(path) -> ShellMesh:
    """Read the line-oriented ``prismshell-mesh v1`` text format."""
    lines = Path(path).read_text().splitlines()
    return parse_mesh(lines)


def parse_mesh(lines) -> ShellMesh:
    it = [(i + 1, ln.split("#", 1)[0].strip()) for i, ln in enumerate(lines)]
    it = [(n, ln) for n, ln in it if ln]
    if not it or it[0][1] != MESH_HEADER:
        raise MeshFormatError(f"line {it[0][0] if it else 1}: expected header {MESH_HEADER!r}")
    pos = 1
    ids_nodes, coords, dirs, thick = [], [], [], []
    tri_ids, tris = [], []
    raw_sets = []
    geom2 = []

    def count(keyword):
        nonlocal pos
        n, ln = it[pos]
        parts = ln.split()
        if len(parts) != 2 or parts[0] != keyword:
            raise MeshFormatError(f"line {n}: expected '{keyword} <count>'")
        try:
            c = int(parts[1])
        except ValueError:
            raise MeshFormatError(f"line {n}: bad count {parts[1]!r}") from None
        pos += 1
        if pos + c > len(it):
            raise MeshFormatError(f"line {n}: file ends before {c} {keyword} records")
        return c

    try:
        while pos < len(it):
            n, ln = it[pos]
            head = ln.split()[0]
            if head == "nodes":
                for _ in range(count("nodes")):
                    n, ln = it[pos]
                    v = ln.split()
                    if len(v) not in (4, 5, 7, 8):
                        raise MeshFormatError(f"line {n}: node needs 'id x y z [dx dy dz] [a]'")
                    ids_nodes.append(int(v[0]))
                    coords.append([float(x) for x in v[1:4]])
                    dirs.append([float(x) for x in v[4:7]] if len(v) >= 7 else None)
                    thick.append(float(v[-1]) if len(v) in (5, 8) else None)
                    pos += 1
            elif head == "tris":
                for _ in range(count("tris")):
                    n, ln = it[pos]
                    v = ln.split()
                    if len(v) != 4:
                        raise MeshFormatError(f"line {n}: triangle needs 'id n0 n1 n2'")
                    tri_ids.append(int(v[0]))
                    tris.append([int(x) for x in v[1:]])
                    pos += 1
            elif head == "set":
                v = ln.split()
                if len(v) < 3 or v[2] not in ("node", "edge", "tri"):
                    raise MeshFormatError(f"line {n}: expected 'set <name> node|edge|tri id...'")
                raw_sets.append((n, v[1], v[2], [int(x) for x in v[3:]]))
                pos += 1
            elif head == "geom2":
                for _ in range(count("geom2")):
                    n, ln = it[pos]
                    v = ln.split()
                    if len(v) != 8:
                        raise MeshFormatError(f"line {n}: geom2 needs 'n0 n1 zx zy zz dx dy dz'")
                    geom2.append((n, int(v[0]), int(v[1]), [float(x) for x in v[2:]]))
                    pos += 1
            else:
                raise MeshFormatError(f"line {n}: unknown section {head!r}")
    except ValueError as exc:
        if isinstance(exc, MeshFormatError):
            raise
        raise MeshFormatError(f"line {it[min(pos, len(it) - 1)][0]}: {exc}") from None

    node_index = {nid: k for k, nid in enumerate(ids_nodes)}
    tri_index = {tid: k for k, tid in enumerate(tri_ids)}
    try:
        tri_arr = np.array([[node_index[x] for x in t] for t in tris], dtype=np.int64)
    except KeyError as exc:
        raise MeshFormatError(f"triangle references unknown node {exc.args[0]}") from None
    directors = None
    if all(d is not None for d in dirs) and dirs:
        directors = np.array(dirs)
    thickness = None
    if all(a is not None for a in thick) and thick:
        thickness = np.array(thick)
    mesh = ShellMesh(np.array(coords), tri_arr, directors, thickness)
    sets = {}
    for n, name, kind, ids in raw_sets:
        if kind == "node":
            table = node_index
        elif kind == "tri":
            table = tri_index
        else:
            table = None
        if table is not None:
            missing = [x for x in ids if x not in table]
            if missing:
                raise MeshFormatError(f"line {n}: set {name!r} references unknown id {missing[0]}")
            sets[name] = (kind, np.array([table[x] for x in ids], dtype=np.int64))
        else:
            if any(x < 0 or x >= len(mesh.edges) for x in ids):
                raise MeshFormatError(f"line {n}: set {name!r} references unknown edge")
            sets[name] = (kind, np.array(ids, dtype=np.int64))
    mesh.sets = sets
    if geom2:
        ez = np.zeros((len(mesh.edges), 3))
        ed = np.zeros((len(mesh.edges), 3))
        for n, a, b, vals in geom2:
            try:
                e = mesh.edge_index([[node_index[a], node_index[b]]])[0]
            except (KeyError, GeometryError):
                raise MeshFormatError(f"line {n}: ({a}, {b}) is not a mesh edge") from None
            ez[e] = vals[:3]
            ed[e] = vals[3:]
        mesh.edge_z, mesh.edge_d = ez, ed
    return mesh


def write_mesh(mesh: ShellMesh, path) -> None:
    out = [MESH_HEADER, f"nodes {mesh.n_nodes}"]
    for i, (x, d, a) in enumerate(zip(mesh.nodes, mesh.directors, mesh.thickness)):
        out.append(f"{i} " + " ".join(repr(float(v)) for v in (*x, *d, a)))
    out.append(f"tris {mesh.n_tris}")
    for i, t in enumerate(mesh.tris):
        out.append(f"{i} {t[0]} {t[1]} {t[2]}")
    for name, (kind, ids) in mesh.sets.items():
        out.append(f"set {name} {kind} " + " ".join(str(int(x)) for x in ids))
    if mesh.edge_z is not None:
        out.append(f"geom2 {len(mesh.edges)}")
        for (a, b), z, d in zip(mesh.edges, mesh.edge_z, mesh.edge_d):
            out.append(f"{a} {b} " + " ".join(repr(float(x)) for x in (*z, *d)))
    Path(path).write_text("\n".join(out) + "\n")
