"""Legacy ASCII VTK export of prism meshes with high-order displacement fields."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .model import ShellModel

VTK_WEDGE = 13


def _lattice(m: int):
    """Triangle lattice points ``(i/m, j/m)`` and the sub-triangles over them."""
    idx = {}
    pts = []
    for j in range(m + 1):
        for i in range(m + 1 - j):
            idx[(i, j)] = len(pts)
            pts.append((i / m, j / m))
    tris = []
    for j in range(m):
        for i in range(m - j):
            tris.append((idx[(i, j)], idx[(i + 1, j)], idx[(i, j + 1)]))
            if i + j < m - 1:
                tris.append((idx[(i + 1, j)], idx[(i + 1, j + 1)], idx[(i, j + 1)]))
    return np.array(pts), np.array(tris, dtype=np.int64)


def export_points(model: ShellModel, U=None, refine: int | None = None, layers: int = 2):
    """Plotting points, wedge connectivity and per-point displacement.

    Each prism is split into ``m^2 * layers`` linear wedges with ``m = p``
    of the element (or ``refine``); with ``m = 1, layers = 1`` this is the
    plain six-node prism mesh.
    """
    from .shellgeom import reference_position
    mesh = model.mesh
    X_all, D_all, cells, cell_elem = [], [], [], []
    base = 0
    for e in range(mesh.n_tris):
        spec = model.dofmap.elem_specs[e]
        m = refine or max(1, max(max(spec.edge_orders), spec.face_order))
        lat, sub = _lattice(m)
        nl = len(lat)
        zs = np.linspace(0.0, 1.0, layers + 1)
        pts = np.concatenate([np.column_stack([lat, np.full(nl, z)]) for z in zs])
        X_all.append(reference_position(mesh, e, pts))
        if U is not None:
            D_all.append(model.displacement_at(U, e, pts))
        for k in range(layers):
            lo, hi = base + k * nl, base + (k + 1) * nl
            for a, b, c in sub:
                # base triangle ordered so its normal points away from the top face
                cells.append((lo + a, lo + c, lo + b, hi + a, hi + c, hi + b))
                cell_elem.append(e)
        base += len(pts)
    X = np.concatenate(X_all)
    D = np.concatenate(D_all) if D_all else None
    return X, np.array(cells, dtype=np.int64), np.array(cell_elem, dtype=np.int64), D


def write_vtk(path, model: ShellModel, U=None, cell_fields: dict | None = None,
              refine: int | None = None, layers: int = 2, title: str = "prismshell") -> Path:
    """Write an UNSTRUCTURED_GRID of wedges.

    ``cell_fields`` holds per-element arrays (e.g. order, error indicator);
    they are expanded to the sub-cells of each element.
    """
    X, cells, cell_elem, D = export_points(model, U, refine, layers)
    path = Path(path)
    lines = ["# vtk DataFile Version 3.0", title[:250], "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {len(X)} double"]
    lines += [f"{x:.10g} {y:.10g} {z:.10g}" for x, y, z in X]
    lines.append(f"CELLS {len(cells)} {7 * len(cells)}")
    lines += ["6 " + " ".join(map(str, c)) for c in cells]
    lines.append(f"CELL_TYPES {len(cells)}")
    lines += [str(VTK_WEDGE)] * len(cells)
    fields = {"element": np.arange(model.mesh.n_tris),
              "face_order": model.dofmap.face_orders}
    fields.update(cell_fields or {})
    lines.append(f"CELL_DATA {len(cells)}")
    for name, vals in fields.items():
        vals = np.asarray(vals)[cell_elem]
        lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        lines += [f"{v:.10g}" for v in vals]
    if D is not None:
        lines.append(f"POINT_DATA {len(X)}")
        lines.append("VECTORS displacement double")
        lines += [f"{x:.10g} {y:.10g} {z:.10g}" for x, y, z in D]
    path.write_text("\n".join(lines) + "\n")
    return path


def read_vtk_counts(path):
    """Point and cell counts plus cell types of a legacy file written by :func:`write_vtk`."""
    tokens = Path(path).read_text().split("\n")
    out = {}
    for i, line in enumerate(tokens):
        if line.startswith("POINTS"):
            out["points"] = int(line.split()[1])
        elif line.startswith("CELL_TYPES"):
            n = int(line.split()[1])
            out["cells"] = n
            out["types"] = {int(t) for t in tokens[i + 1:i + 1 + n]}
    return out
