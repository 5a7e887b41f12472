"""Discrete shell model: mesh, material, DOF map and batched global assembly."""

from __future__ import annotations

from collections import defaultdict

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .dofmesh import Constraints, DofMap, SparsityPattern, apply_symmetry, build_dof_map
from .element import (
    Load, batch_energy, batch_forces, batch_stress, batch_tangent, element_geometry,
    element_shapes, external_forces, orientation_key,
)
from .kinematics import Material
from .polybasis import shape_table
from .shellgeom import ShellMesh, frames, jacobians


class ElementBatch:
    """Elements sharing an order signature and orientation pattern."""

    def __init__(self, mesh, elems, spec, dofs):
        self.elems = np.asarray(elems, dtype=np.int64)
        self.shapes = element_shapes(spec.signature, orientation_key(spec.nodes))
        self.geometry = element_geometry(mesh, self.elems, self.shapes.quad)
        self.dofs = np.asarray(dofs, dtype=np.int64)  # (ne, ndof)


class ShellModel:
    """Assembles energy, residual and tangent over a whole mesh.

    Parameters
    ----------
    mesh : ShellMesh
    material : Material
    face_orders : int or array
        In-plane order per triangle.
    p_v, p_w : int
        Through-thickness orders of the ``v`` and ``w`` fields.
    bcs : sequence of ``(set_name, kind)``
        Boundary conditions, see :func:`prismshell.dofmesh.apply_symmetry`.
    """

    def __init__(self, mesh: ShellMesh, material: Material, face_orders=1, p_v: int = 2,
                 p_w: int = 2, bcs=()):
        self.mesh = mesh
        self.material = material
        self.dofmap: DofMap = build_dof_map(mesh, face_orders, p_v, p_w)
        self.bcs = tuple(bcs)
        self.constraints = apply_symmetry(Constraints(self.dofmap.n_dofs), self.dofmap, self.bcs)
        self.free = self.constraints.free()
        groups = defaultdict(list)
        for e, spec in enumerate(self.dofmap.elem_specs):
            groups[(spec.signature, orientation_key(spec.nodes))].append(e)
        self.batches = []
        for _, elems in sorted(groups.items()):
            spec = self.dofmap.elem_specs[elems[0]]
            dofs = np.stack([self.dofmap.elem_dofs[e] for e in elems])
            self.batches.append(ElementBatch(mesh, elems, spec, dofs))
        order = [b.dofs[i] for b in self.batches for i in range(len(b.elems))]
        self.pattern = SparsityPattern(self.dofmap.n_dofs, order)

    @property
    def n_dofs(self) -> int:
        return self.dofmap.n_dofs

    @property
    def n_free(self) -> int:
        return len(self.free)

    def expand(self, q) -> np.ndarray:
        """Full DOF vector from free DOF values (fixed DOFs are zero)."""
        U = np.zeros(self.n_dofs)
        U[self.free] = q
        return U

    def energy(self, U) -> float:
        return float(sum(np.sum(batch_energy(b.shapes, b.geometry, U[b.dofs], self.material))
                         for b in self.batches))

    def internal_forces(self, U) -> np.ndarray:
        f = np.zeros(self.n_dofs)
        for b in self.batches:
            fe = batch_forces(b.shapes, b.geometry, U[b.dofs], self.material)
            np.add.at(f, b.dofs.ravel(), fe.ravel())
        return f

    def tangent(self, U):
        """``(f_int, K)`` with ``K`` a CSR matrix over all DOFs."""
        f = np.zeros(self.n_dofs)
        blocks = []
        for b in self.batches:
            fe, Ke = batch_tangent(b.shapes, b.geometry, U[b.dofs], self.material)
            np.add.at(f, b.dofs.ravel(), fe.ravel())
            blocks.append(Ke)
        return f, self.pattern.matrix(blocks)

    def reduced(self, U):
        """Free-DOF residual basis: ``(f_int[free], K[free][:, free])``."""
        f, K = self.tangent(U)
        return f[self.free], K[self.free][:, self.free]

    def load_vector(self, loads) -> np.ndarray:
        if isinstance(loads, Load):
            loads = [loads]
        f = np.zeros(self.n_dofs)
        for load in loads:
            f += external_forces(self.mesh, self.dofmap.elem_specs, self.dofmap.elem_dofs,
                                 self.n_dofs, load, self.dofmap.node_dofs)
        return f

    def cauchy_stress(self, U):
        """Per element quadrature-point Cauchy stresses (list in element order)."""
        out = [None] * self.mesh.n_tris
        for b in self.batches:
            s = batch_stress(b.shapes, b.geometry, U[b.dofs], self.material)
            for i, e in enumerate(b.elems):
                out[e] = s[i]
        return out

    def node_displacement(self, U, node: int) -> np.ndarray:
        """Mid-surface displacement of a node (mean of the two vertex values)."""
        d = self.dofmap
        return 0.5 * (U[d.node_dofs(node, 0)] + U[d.node_dofs(node, 1)])

    def displacement_at(self, U, elem: int, points) -> np.ndarray:
        """Displacement ``u + v g_2 + w^a g_a`` at reference points of an element."""
        spec = self.dofmap.elem_specs[elem]
        pts = np.atleast_2d(points)
        x = U[self.dofmap.elem_dofs[elem]]
        tu = shape_table(spec.u_orders(), pts, spec.orientation, ("vertex", "tri_edge", "tri_face"))
        tv = shape_table(spec.thick_orders(spec.p_v), pts, spec.orientation,
                         ("quad_edge", "quad_face", "volume"))
        tw = shape_table(spec.thick_orders(spec.p_w), pts, spec.orientation,
                         ("quad_edge", "quad_face", "volume"))
        nu, nv = len(tu.ids), len(tv.ids)
        xu = x[:3 * nu].reshape(nu, 3)
        xv = x[3 * nu:3 * nu + nv]
        xw = x[3 * nu + nv:].reshape(-1, 2)
        u = tu.values @ xu
        # convected frame from the u gradient
        J = jacobians(self.mesh, [elem], pts)[0]
        G = frames(self.mesh, [elem], pts)[0]
        grad_u = np.einsum("ki,qkj,qjI->qiI", xu, tu.grads, np.linalg.inv(J))
        g = (np.eye(3) + grad_u) @ G
        v = tv.values @ xv
        w = tw.values @ xw
        return u + v[:, None] * g[..., 2] + np.einsum("qa,qia->qi", w, g[..., :2])

    def symmetric_error(self, K) -> float:
        K = sp.csr_matrix(K)
        return spla.norm(K - K.T) / max(spla.norm(K), 1e-300)
