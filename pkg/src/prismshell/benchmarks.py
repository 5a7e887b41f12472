"""Benchmark shells: literal input data, mesh generators, supports and loads.

Every generator returns a :class:`Problem` holding the mid-surface mesh
(exact nodes and directors, quadratic edge geometry), the material, the
boundary conditions, the reference load (load factor 1 reaches the target
value) and the monitored points.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial import Delaunay

from .element import Load, self_weight
from .kinematics import Material
from .shellgeom import ShellMesh

# Input data per benchmark.  None marks "not applicable".
TABLE1 = {
    "PC-L": dict(L=600.0, R=300.0, a=3.0, theta=None, E=3.0, nu=0.3, P=1.0, q=None),
    "SLR": dict(L=50.0, R=25.0, a=0.25, theta=40.0, E=4.32e8, nu=0.0, P=None, q=90.0),
    "SAP": dict(L=None, R=(6.0, 10.0), a=0.03, theta=None, E=21e6, nu=0.0, P=None, q=0.8),
    "HS": dict(L=None, R=10.0, a=0.04, theta=18.0, E=6.825e7, nu=0.3, P=400.0, q=None),
    "POC": dict(L=10.35, R=4.953, a=0.094, theta=None, E=10.5e6, nu=0.3125, P=40000.0, q=None),
    "PC": dict(L=200.0, R=100.0, a=1.0, theta=None, E=30e3, nu=0.3, P=12000.0, q=None),
}

# vertical displacement of the roof's free-edge midpoint
SLR_REFERENCE = {"computed": 0.3176, "literature": 0.3024}
NONLINEAR = ("SAP", "HS", "POC", "PC")
LINEAR = ("PC-L", "SLR", "SLR-H")


@dataclass
class Monitor:
    """A mesh node whose mid-surface displacement is recorded.

    ``direction`` defines the scalar value reported (e.g. the vertical or
    radial component).
    """

    node: int
    direction: tuple


@dataclass
class Problem:
    name: str
    mesh: ShellMesh
    material: Material
    bcs: list
    loads: list
    monitors: dict
    target: float  # load magnitude reached at load factor 1
    nonlinear: bool = False
    params: dict = field(default_factory=dict)

    @property
    def primary_monitor(self) -> str:
        return next(iter(self.monitors))


class BenchmarkError(KeyError):
    pass


# --- generic parametric surface meshing ----------------------------------------

def _grid_triangles(n1: int, n2: int, pattern: str = "alternate"):
    """Triangulate a structured ``(n1+1) x (n2+1)`` vertex grid (index ``i*(n2+1)+j``)."""
    tris = []
    for i in range(n1):
        for j in range(n2):
            a = i * (n2 + 1) + j
            b = a + (n2 + 1)
            c, d = b + 1, a + 1
            if pattern == "alternate" and (i + j) % 2:
                tris += [(a, b, d), (b, c, d)]
            else:
                tris += [(a, b, c), (a, c, d)]
    return np.array(tris, dtype=np.int64)


def surface_mesh(param_nodes, tris, surface, thickness, sets=None, frame_axis=None) -> ShellMesh:
    """Mesh of a parametric surface with exact directors and quadratic edges.

    ``surface(st)`` maps parameter points ``(n, 2)`` to ``(points, unit
    normals)``.  Triangles are reoriented so that their normal agrees with
    the director.
    """
    st = np.asarray(param_nodes, float)
    X, D = surface(st)
    tris = np.array(tris, dtype=np.int64)
    n = np.cross(X[tris[:, 1]] - X[tris[:, 0]], X[tris[:, 2]] - X[tris[:, 0]])
    flip = np.einsum("ij,ij->i", n, D[tris].mean(axis=1)) < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]
    mesh = ShellMesh(X, tris, D, thickness, sets or {}, frame_axis=frame_axis)
    e = mesh.edges
    Xm, Dm = surface(0.5 * (st[e[:, 0]] + st[e[:, 1]]))
    edge_z = 4.0 * (Xm - 0.5 * (X[e[:, 0]] + X[e[:, 1]]))
    edge_d = 4.0 * (Dm - 0.5 * (D[e[:, 0]] + D[e[:, 1]]))
    return replace(mesh, edge_z=edge_z, edge_d=edge_d)


def _node_set(mask):
    return ("node", np.flatnonzero(mask))


def _closest(points, target) -> int:
    return int(np.argmin(np.linalg.norm(points - np.asarray(target, float), axis=1)))


def _cylinder(R):
    """Cylinder about the x axis, parameters ``(x, phi)`` with phi from +z towards +y."""
    def surface(st):
        x, phi = st[:, 0], st[:, 1]
        X = np.column_stack([x, R * np.sin(phi), R * np.cos(phi)])
        D = np.column_stack([np.zeros_like(x), np.sin(phi), np.cos(phi)])
        return X, D
    return surface


def _rect_grid(n1, n2, s_range, t_range):
    s = np.linspace(*s_range, n1 + 1)
    t = np.linspace(*t_range, n2 + 1)
    S, T = np.meshgrid(s, t, indexing="ij")
    return np.column_stack([S.ravel(), T.ravel()]), _grid_triangles(n1, n2)


def _material(data) -> Material:
    return Material(data["E"], data["nu"])


# --- individual benchmarks --------------------------------------------------------

def scordelis_lo(n: int = 4, data=None) -> Problem:
    """Quadrant of the roof: x from midspan (0) to the diaphragm (L/2), phi from crown to edge."""
    d = dict(TABLE1["SLR"], **(data or {}))
    L, R, a, q = d["L"], d["R"], d["a"], d["q"]
    th = np.radians(d["theta"])
    st, tris = _rect_grid(n, n, (0.0, L / 2), (0.0, th))
    x, phi = st[:, 0], st[:, 1]
    tol = 1e-9
    sets = {
        "mid": _node_set(np.abs(x) < tol),
        "diaphragm": _node_set(np.abs(x - L / 2) < tol),
        "crown": _node_set(np.abs(phi) < tol),
        "free": _node_set(np.abs(phi - th) < tol),
    }
    mesh = surface_mesh(st, tris, _cylinder(R), a, sets, frame_axis=(1.0, 0.0, 0.0))
    A = _closest(st, (0.0, th))
    return Problem("SLR", mesh, _material(d),
                   bcs=[("mid", "sym_x"), ("crown", "sym_y"), ("diaphragm", "diaphragm_x")],
                   loads=[self_weight(q, (0, 0, -1))],
                   monitors={"A": Monitor(A, (0.0, 0.0, -1.0))}, target=q, params=d)


def _hole_centres(L2, S, nx, ny):
    cx = (np.arange(nx) + 0.5) * L2 / nx
    cy = (np.arange(ny) + 0.5) * S / ny
    return np.array([(x, y) for x in cx for y in cy])


def perforated_scordelis_lo(nx_holes: int = 3, ny_holes: int = 2, radius: float = 0.3,
                            h: float = 2.5, data=None) -> Problem:
    """Quadrant of the roof with a uniform grid of circular holes.

    Holes are cut in the developed (unrolled) plane of the cylinder, so they
    are geodesic circles of the given radius.  The Delaunay mesh is graded
    towards the holes with rings of nodes.
    """
    d = dict(TABLE1["SLR"], **(data or {}))
    L, R, a, q = d["L"], d["R"], d["a"], d["q"]
    th = np.radians(d["theta"])
    L2, S = L / 2, R * th
    centres = _hole_centres(L2, S, nx_holes, ny_holes)
    pts = []
    nbx, nby = int(np.ceil(L2 / h)), int(np.ceil(S / h))
    xs, ys = np.linspace(0, L2, nbx + 1), np.linspace(0, S, nby + 1)
    # boundary and interior background grid
    for x in xs:
        for y in ys:
            pts.append((x, y))
    rings = [(radius, 10), (2.2 * radius, 10), (4.5 * radius, 8)]
    keep = []
    for p in pts:
        dist = np.min(np.linalg.norm(centres - p, axis=1))
        on_bnd = p[0] in (0, L2) or p[1] in (0, S)
        if on_bnd or dist > 8 * radius:
            keep.append(p)
    pts = keep
    for c in centres:
        for r, m in rings:
            ang = np.linspace(0, 2 * np.pi, m, endpoint=False) + (0.5 * np.pi / m if r > radius else 0)
            pts += [tuple(c + r * np.array([np.cos(t), np.sin(t)])) for t in ang]
    pts = np.array(pts)
    tri = Delaunay(pts)
    simp = tri.simplices
    cent = pts[simp].mean(axis=1)
    inside = np.min(np.linalg.norm(cent[:, None, :] - centres[None], axis=2), axis=1) < radius
    simp = simp[~inside]
    used = np.unique(simp)
    remap = -np.ones(len(pts), np.int64)
    remap[used] = np.arange(len(used))
    pts = pts[used]
    simp = remap[simp]
    st = np.column_stack([pts[:, 0], pts[:, 1] / R])
    x, phi = st[:, 0], st[:, 1]
    tol = 1e-9
    sets = {
        "mid": _node_set(np.abs(x) < tol),
        "diaphragm": _node_set(np.abs(x - L2) < tol),
        "crown": _node_set(np.abs(phi) < tol),
        "free": _node_set(np.abs(phi - th) < tol),
    }
    mesh = surface_mesh(st, simp, _cylinder(R), a, sets, frame_axis=(1.0, 0.0, 0.0))
    A = _closest(st, (0.0, th))
    params = dict(d, holes=centres.tolist(), hole_radius=radius)
    return Problem("SLR-H", mesh, _material(d),
                   bcs=[("mid", "sym_x"), ("crown", "sym_y"), ("diaphragm", "diaphragm_x")],
                   loads=[self_weight(q, (0, 0, -1))],
                   monitors={"A": Monitor(A, (0.0, 0.0, -1.0))}, target=q, params=params)


def _cylinder_eighth(d, n_axial, n_circ, name):
    L, R, a = d["L"], d["R"], d["a"]
    st, tris = _rect_grid(n_axial, n_circ, (0.0, L / 2), (0.0, np.pi / 2))
    x, phi = st[:, 0], st[:, 1]
    tol = 1e-9
    sets = {
        "mid": _node_set(np.abs(x) < tol),
        "end": _node_set(np.abs(x - L / 2) < tol),
        "top": _node_set(np.abs(phi) < tol),  # plane y = 0
        "side": _node_set(np.abs(phi - np.pi / 2) < tol),  # plane z = 0
        "load": _node_set((np.abs(x) < tol) & (np.abs(phi) < tol)),
    }
    mesh = surface_mesh(st, tris, _cylinder(R), a, sets, frame_axis=(1.0, 0.0, 0.0))
    return mesh, st


def pinched_cylinder(n: int = 6, linear: bool = False, data=None) -> Problem:
    """One eighth of a cylinder on rigid end diaphragms, pinched at midspan."""
    key = "PC-L" if linear else "PC"
    d = dict(TABLE1[key], **(data or {}))
    mesh, st = _cylinder_eighth(d, n, n, key)
    P = d["P"]
    A = _closest(st, (0.0, 0.0))
    B = _closest(st, (0.0, np.pi / 2))
    return Problem(key, mesh, _material(d),
                   bcs=[("mid", "sym_x"), ("top", "sym_y"), ("side", "sym_z"),
                        ("end", "diaphragm_x")],
                   loads=[Load("point", "load", (0.0, 0.0, -P / 4))],
                   monitors={"A": Monitor(A, (0.0, 0.0, -1.0)), "B": Monitor(B, (0.0, 1.0, 0.0))},
                   target=P, nonlinear=not linear, params=d)


def pullout_cylinder(n_axial: int = 6, n_circ: int = 12, data=None) -> Problem:
    """One eighth of an open-ended cylinder pulled by a pair of radial forces."""
    d = dict(TABLE1["POC"], **(data or {}))
    mesh, st = _cylinder_eighth(d, n_axial, n_circ, "POC")
    P, L = d["P"], d["L"]
    A = _closest(st, (0.0, 0.0))
    B = _closest(st, (L / 2, 0.0))
    C = _closest(st, (L / 2, np.pi / 2))
    return Problem("POC", mesh, _material(d),
                   bcs=[("mid", "sym_x"), ("top", "sym_y"), ("side", "sym_z")],
                   loads=[Load("point", "load", (0.0, 0.0, P / 4))],
                   monitors={"A": Monitor(A, (0.0, 0.0, 1.0)), "B": Monitor(B, (0.0, 0.0, -1.0)),
                             "C": Monitor(C, (0.0, -1.0, 0.0))},
                   target=P, nonlinear=True, params=d)


def slit_annular_plate(n_r: int = 2, n_theta: int = 16, data=None) -> Problem:
    """Flat annulus slit along theta = 0; clamped at theta = 0, lifted at theta = 2 pi."""
    d = dict(TABLE1["SAP"], **(data or {}))
    Ri, Ro = d["R"]
    q = d["q"]
    st, tris = _rect_grid(n_r, n_theta, (Ri, Ro), (0.0, 2 * np.pi))

    def surface(p):
        r, t = p[:, 0], p[:, 1]
        X = np.column_stack([r * np.cos(t), r * np.sin(t), np.zeros_like(r)])
        D = np.tile([0.0, 0.0, 1.0], (len(r), 1))
        return X, D

    r, t = st[:, 0], st[:, 1]
    tol = 1e-9
    sets = {
        "clamped": _node_set(np.abs(t) < tol),
        "loaded": _node_set(np.abs(t - 2 * np.pi) < tol),
    }
    mesh = surface_mesh(st, tris, surface, d["a"], sets)
    A = _closest(st, (Ri, 2 * np.pi))
    B = _closest(st, (Ro, 2 * np.pi))
    return Problem("SAP", mesh, _material(d), bcs=[("clamped", "clamp")],
                   loads=[Load("edge", "loaded", (0.0, 0.0, q))],
                   monitors={"A": Monitor(A, (0.0, 0.0, 1.0)), "B": Monitor(B, (0.0, 0.0, 1.0))},
                   target=q, nonlinear=True, params=d)


def hemisphere(n_polar: int = 5, n_azim: int = 10, data=None, equator: str = "pin") -> Problem:
    """Quarter hemisphere with a polar cutout, pinched at the equator by alternating forces.

    ``equator="pin"`` leaves the bottom edge free and removes the vertical
    rigid motion at the load point A; ``equator="fixed"`` restrains the
    vertical displacement along the whole bottom edge, which suppresses the
    inextensional bending mode the problem is meant to exercise.
    """
    if equator not in ("pin", "fixed"):
        raise BenchmarkError(f"equator must be 'pin' or 'fixed', got {equator!r}")
    d = dict(TABLE1["HS"], **(data or {}))
    R, P = d["R"], d["P"]
    cut = np.radians(d["theta"])
    st, tris = _rect_grid(n_polar, n_azim, (cut, np.pi / 2), (0.0, np.pi / 2))

    def surface(p):
        ph, th = p[:, 0], p[:, 1]
        D = np.column_stack([np.sin(ph) * np.cos(th), np.sin(ph) * np.sin(th), np.cos(ph)])
        return R * D, D

    ph, th = st[:, 0], st[:, 1]
    tol = 1e-9
    eq = np.abs(ph - np.pi / 2) < tol
    sets = {
        "xz": _node_set(np.abs(th) < tol),  # plane y = 0
        "yz": _node_set(np.abs(th - np.pi / 2) < tol),  # plane x = 0
        "equator": _node_set(eq),
        "loadA": _node_set(eq & (np.abs(th) < tol)),
        "loadB": _node_set(eq & (np.abs(th - np.pi / 2) < tol)),
    }
    A = _closest(st, (np.pi / 2, 0.0))
    B = _closest(st, (np.pi / 2, np.pi / 2))
    sets["pin"] = ("node", np.array([A]))
    mesh = surface_mesh(st, tris, surface, d["a"], sets, frame_axis=(0.0, 0.0, 1.0))
    bottom = "pin" if equator == "pin" else "equator"
    return Problem("HS", mesh, _material(d),
                   bcs=[("xz", "sym_y"), ("yz", "sym_x"), (bottom, "z")],
                   loads=[Load("point", "loadA", (P / 2, 0.0, 0.0)),
                          Load("point", "loadB", (0.0, -P / 2, 0.0))],
                   monitors={"A": Monitor(A, (1.0, 0.0, 0.0)), "B": Monitor(B, (0.0, -1.0, 0.0))},
                   target=P, nonlinear=True, params=d)


GENERATORS = {
    "PC-L": lambda **kw: pinched_cylinder(linear=True, **kw),
    "SLR": scordelis_lo,
    "SLR-H": perforated_scordelis_lo,
    "SAP": slit_annular_plate,
    "HS": hemisphere,
    "POC": pullout_cylinder,
    "PC": pinched_cylinder,
}


def get_benchmark(name: str, **kwargs) -> Problem:
    """Build a named benchmark; keyword arguments go to its generator."""
    key = name.upper()
    if key not in GENERATORS:
        raise BenchmarkError(f"unknown benchmark {name!r}; choose from {sorted(GENERATORS)}")
    try:
        return GENERATORS[key](**kwargs)
    except TypeError as exc:
        raise BenchmarkError(f"bad parameters for {key}: {exc}") from None
