import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial.transform import Rotation

from prismshell.benchmarks import get_benchmark
from prismshell.dofmesh import build_dof_map
from prismshell.element import (
    Element, ElementInversionError, Load, element_loads, internal_forces, self_weight, tangent,
)
from prismshell.kinematics import Material, svk_energy
from prismshell.model import ShellModel
from prismshell.shellgeom import ShellMesh
from prismshell.solver import displacement_from_map

MAT = Material(1000.0, 0.3)


def roof_element(order=3, e=1, p_thick=2):
    mesh = get_benchmark("SLR", n=2).mesh
    dm = build_dof_map(mesh, order, p_thick, p_thick)
    return Element(mesh, e, dm.elem_specs[e], MAT)


def slab(a=0.2, n=3):
    x = np.linspace(0, 2, n + 1)
    y = np.linspace(0, 1, n + 1)
    X, Y = np.meshgrid(x, y, indexing="ij")
    nodes = np.column_stack([X.ravel(), Y.ravel(), 0 * X.ravel()])
    tris = []
    for i in range(n):
        for j in range(n):
            k = i * (n + 1) + j
            tris += [[k, k + n + 1, k + n + 2], [k, k + n + 2, k + 1]]
    return ShellMesh(nodes, tris, thickness=a)


@settings(max_examples=5, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_tangent_matches_fd_of_forces(seed):
    el = roof_element(order=3)
    rng = np.random.default_rng(seed)
    x = 0.02 * rng.standard_normal(el.shapes.n_dofs)
    f, K = el.tangent_matrix(x)
    h = 1e-6
    fd = np.empty_like(K)
    for j in range(len(x)):
        d = np.zeros_like(x)
        d[j] = h
        fd[:, j] = (el.forces_vector(x + d) - el.forces_vector(x - d)) / (2 * h)
    assert np.linalg.norm(K - fd) <= 1e-5 * np.linalg.norm(K)
    np.testing.assert_allclose(K, K.T, atol=1e-10 * np.abs(K).max())


def test_forces_are_energy_gradient():
    el = roof_element(order=2)
    rng = np.random.default_rng(3)
    x = 0.02 * rng.standard_normal(el.shapes.n_dofs)
    f = el.forces_vector(x)
    h = 1e-6
    for j in rng.choice(len(x), 12, replace=False):
        d = np.zeros_like(x)
        d[j] = h
        fd = (el.energy(x + d) - el.energy(x - d)) / (2 * h)
        assert fd == pytest.approx(f[j], rel=1e-5, abs=1e-7 * np.abs(f).max())


def test_block_split_and_zero_state():
    el = roof_element()
    z = el.zero_state()
    assert el.energy(z) == 0.0
    vec = internal_forces(el, z)
    assert all(np.all(v == 0) for v in vec)
    t = tangent(el, z)
    nu, nv, nw = el.shapes.sizes
    assert t.blocks[0][0].shape == (3 * nu, 3 * nu)
    assert t.blocks[1][2].shape == (nv, 2 * nw)
    assert t.full.shape == (el.shapes.n_dofs,) * 2
    np.testing.assert_array_equal(el.pack(el.unpack(np.arange(el.shapes.n_dofs))),
                                  np.arange(el.shapes.n_dofs))


@pytest.mark.parametrize("order", [2, 4])
def test_finite_rigid_motion_is_stress_free(order):
    mesh = get_benchmark("SLR", n=2).mesh
    model = ShellModel(mesh, MAT, order)
    Q = Rotation.from_rotvec([0.3, -0.5, 0.9]).as_matrix()
    t = np.array([1.0, -2.0, 0.5])
    U = displacement_from_map(model, lambda X: Q @ X + t)
    f, K = model.tangent(np.zeros(model.n_dofs))
    scale = abs(K).max() * np.abs(U).max()
    assert np.abs(model.internal_forces(U)).max() <= 1e-9 * scale
    assert model.energy(U) <= 1e-9 * scale * np.abs(U).max()


def test_uniform_stretch_patch():
    mesh = slab()
    model = ShellModel(mesh, MAT, 3)
    F0 = np.array([[1.01, 0.002, 0.0], [0.0, 0.995, 0.0], [0.0, 0.0, 1.0]])
    # transverse stretch that makes S_zz vanish, so top and bottom faces are traction free
    lam, mu = MAT.lame_lambda, MAT.lame_mu
    E_in = 0.5 * (F0.T @ F0 - np.eye(3))
    F0[2, 2] = np.sqrt(1 - 2 * lam * (E_in[0, 0] + E_in[1, 1]) / (lam + 2 * mu))
    U = displacement_from_map(model, lambda X: F0 @ X)
    E0 = 0.5 * (F0.T @ F0 - np.eye(3))
    area, a = 2.0, 0.2
    assert model.energy(U) == pytest.approx(svk_energy(E0, MAT) * area * a, rel=1e-10)
    f = model.internal_forces(U)
    # interior resultants vanish; boundary tractions balance to zero overall
    fx = f[model.dofmap.comp == 0][model.dofmap.kind[model.dofmap.comp == 0] == 0]
    assert abs(fx.sum()) <= 1e-10 * np.abs(f).max()
    on_boundary = np.zeros(mesh.n_nodes, bool)
    X = mesh.nodes
    on_boundary[(X[:, 0] < 1e-12) | (X[:, 0] > 2 - 1e-12) | (X[:, 1] < 1e-12)
                | (X[:, 1] > 1 - 1e-12)] = True
    d = model.dofmap
    interior_u = (d.kind == 0) & ~on_boundary[np.where(d.kind == 0, d.entity, 0)]
    assert np.abs(f[interior_u]).max() <= 1e-10 * np.abs(f).max()


def test_surface_load_resultant_on_vertex_dofs():
    mesh = get_benchmark("SLR", n=2).mesh
    model = ShellModel(mesh, MAT, 4)
    q = np.array([0.0, 0.0, -0.09])
    f = model.load_vector(self_weight(0.09))
    d = model.dofmap
    area = 0.0
    from prismshell.quadrature import triangle_rule
    from prismshell.shellgeom import mid_surface
    tp, tw = triangle_rule(10)
    pts = np.column_stack([tp, np.full(len(tp), 0.5)])
    for e in range(mesh.n_tris):
        ms = mid_surface(mesh, [e], pts)
        area += np.linalg.norm(np.cross(ms.dZ[0, :, :, 0], ms.dZ[0, :, :, 1]), axis=1) @ tw
    vert = d.kind == 0
    for c in range(3):
        assert f[vert & (d.comp == c)].sum() == pytest.approx(q[c] * area, rel=1e-10, abs=1e-14)
    assert np.all(f[d.convected] == 0)


def test_edge_and_point_loads():
    mesh = slab(n=2).with_sets(right=("node", [6, 7, 8]), corner=("node", [8]))
    model = ShellModel(mesh, MAT, 3)
    f = model.load_vector([Load("edge", "right", (0.0, 0.0, 2.0)), Load("point", "corner", (1, 0, 0))])
    d = model.dofmap
    vert = d.kind == 0
    assert f[vert & (d.comp == 2)].sum() == pytest.approx(2.0 * 1.0, rel=1e-12)
    assert f[vert & (d.comp == 0)].sum() == pytest.approx(1.0)
    np.testing.assert_allclose(f[d.node_dofs(8, 0)] + f[d.node_dofs(8, 1)] - [1, 0, 0],
                               [0, 0, f[vert & (d.comp == 2) & (d.entity == 8)].sum()])
    spec = model.dofmap.elem_specs[0]
    assert element_loads(mesh, spec, 0, [Load("point", "corner", (1, 0, 0))]).sum() == 0


def test_unknown_load_kind():
    with pytest.raises(ValueError):
        Load("wind", None, (0, 0, 1))


def test_inversion_detected():
    el = roof_element(order=2)
    x = np.zeros(el.shapes.n_dofs)
    nu, nv, nw = el.shapes.sizes
    x[3 * nu:3 * nu + nv] = -50.0  # collapse the thickness
    with pytest.raises(ElementInversionError):
        el.forces_vector(x)
