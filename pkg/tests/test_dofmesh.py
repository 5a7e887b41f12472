import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from prismshell.benchmarks import get_benchmark
from prismshell.dofmesh import (
    NODE, QUAD_EDGE, QUAD_FACE, TRI, TRI_EDGE, VOLUME, Constraints, DofError, SparsityPattern,
    apply_symmetry, assemble, build_dof_map, fix_directions, scatter_vector,
)
from prismshell.shellgeom import ShellMesh


def plate():
    nodes = [[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0], [2, 0, 0]]
    m = ShellMesh(nodes, [[0, 1, 2], [0, 2, 3], [1, 4, 2]], thickness=0.1)
    return m.with_sets(left=("node", [0, 3]), all=("tri", [0, 1, 2]))


def expected_count(mesh, p, pv, pw):
    N, E, T = mesh.n_nodes, len(mesh.edges), mesh.n_tris
    face = (p - 1) * (p - 2) // 2
    per_plane = (pv - 1) + 2 * (pw - 1)
    return 6 * (N + E * (p - 1) + T * face) + per_plane * (N + E * (p - 1) + T * face)


@pytest.mark.parametrize("p,pv,pw", [(1, 1, 1), (2, 2, 2), (3, 2, 3), (5, 3, 2)])
def test_uniform_counts(p, pv, pw):
    m = plate()
    dm = build_dof_map(m, p, pv, pw)
    assert dm.n_dofs == expected_count(m, p, pv, pw)
    s = dm.summary()
    assert s["node"] == 6 * m.n_nodes
    assert s["tri_edge"] == 6 * len(m.edges) * (p - 1)
    assert s["quad_edge"] == m.n_nodes * ((pv - 1) + 2 * (pw - 1))
    # each element sees every DOF of its closure exactly once
    for spec, dofs in zip(dm.elem_specs, dm.elem_dofs):
        assert len(set(dofs.tolist())) == len(dofs)


def test_entity_order_and_layout():
    dm = build_dof_map(plate(), 4, 3, 3)
    assert np.all(np.diff(dm.kind) >= 0)
    assert list(dm.offsets) == ["node", "tri_edge", "tri", "quad_edge", "quad_face", "volume"]
    np.testing.assert_array_equal(dm.node_dofs(2, 1), dm.offsets["node"] + 15 + np.arange(3))
    assert np.all(dm.convected == (dm.kind >= QUAD_EDGE))
    assert np.all(dm.layer[dm.convected] == -1)


def test_edge_orders_follow_max_rule():
    m = plate()
    dm = build_dof_map(m, [2, 5, 3])
    for e, (a, b) in enumerate(m.edges):
        adj = [t for t in range(m.n_tris) if e in m.tri_edges[t]]
        assert dm.edge_orders[e] == max(dm.face_orders[t] for t in adj)


def test_shared_entities_share_dofs():
    m = plate()
    dm = build_dof_map(m, [3, 4, 2], 3, 3)
    # the edge (0, 2) is shared by triangles 0 and 1
    e = next(i for i, ed in enumerate(m.edges) if set(ed) == {0, 2})
    shared = np.flatnonzero(((dm.kind == TRI_EDGE) | (dm.kind == QUAD_FACE)) & (dm.entity == e))
    assert len(shared) > 0
    for t in (0, 1):
        assert set(shared) <= set(dm.elem_dofs[t].tolist())
    assert not set(shared) & set(dm.elem_dofs[2].tolist())


@settings(max_examples=15, deadline=None)
@given(st.lists(st.integers(1, 6), min_size=3, max_size=3), st.integers(1, 3), st.integers(1, 3))
def test_numbering_is_deterministic_and_dense(orders, pv, pw):
    a = build_dof_map(plate(), orders, pv, pw)
    b = build_dof_map(plate(), orders, pv, pw)
    for x, y in zip(a.elem_dofs, b.elem_dofs):
        np.testing.assert_array_equal(x, y)
    used = np.unique(np.concatenate(a.elem_dofs))
    np.testing.assert_array_equal(used, np.arange(a.n_dofs))


def test_bad_orders():
    with pytest.raises(DofError):
        build_dof_map(plate(), 0)
    with pytest.raises(DofError):
        build_dof_map(plate(), 2, 0, 2)


def test_z_constraint_on_flat_plate():
    m = plate()
    dm = build_dof_map(m, 3, 2, 2)
    c = fix_directions(Constraints(dm.n_dofs), dm, "left", "z")
    fixed = c.fixed_array
    on_left = np.isin(dm.entity, [0, 3]) & np.isin(dm.kind, [NODE, QUAD_EDGE])
    # Cartesian z on vertices and the director component v (along z)
    assert set(np.flatnonzero(on_left & (dm.kind == NODE) & (dm.comp == 2))) <= set(fixed)
    assert set(np.flatnonzero(on_left & (dm.kind == QUAD_EDGE) & (dm.comp == 2))) <= set(fixed)
    # in-plane w components stay free, x/y stay free
    assert not set(np.flatnonzero(on_left & (dm.comp < 2))) & set(fixed)
    # edge (0, 3) lies in the set; its in-plane orders carry z fixed too
    e = next(i for i, ed in enumerate(m.edges) if set(ed) == {0, 3})
    assert set(np.flatnonzero((dm.kind == TRI_EDGE) & (dm.entity == e) & (dm.comp == 2))) <= set(fixed)
    assert len(c.free()) == dm.n_dofs - len(fixed)


@pytest.mark.parametrize("kind,axes", [("sym_x", {0}), ("clamp", {0, 1, 2}),
                                       ("diaphragm_x", {1, 2}), ("xz", {0, 2})])
def test_constraint_kinds(kind, axes):
    dm = build_dof_map(plate(), 2)
    c = apply_symmetry(Constraints(dm.n_dofs), dm, [("left", kind)])
    fixed_u = c.fixed_array[~dm.convected[c.fixed_array]]
    assert set(dm.comp[fixed_u].tolist()) == axes
    assert c.rules == [("left", tuple(sorted(axes)))]


def test_unknown_constraint_kind_and_set():
    dm = build_dof_map(plate(), 2)
    with pytest.raises(DofError):
        apply_symmetry(Constraints(dm.n_dofs), dm, [("left", "hinge")])
    with pytest.raises(KeyError):
        apply_symmetry(Constraints(dm.n_dofs), dm, [("nowhere", "clamp")])


def test_curved_symmetry_fixes_oblique_frames_by_projection():
    prob = get_benchmark("SLR", n=2)
    dm = build_dof_map(prob.mesh, 3)
    c = apply_symmetry(Constraints(dm.n_dofs), dm, prob.bcs)
    assert 0 < len(c.fixed) < dm.n_dofs


def test_sparse_assembly_matches_dense():
    dm = build_dof_map(plate(), [2, 3, 2])
    rng = np.random.default_rng(0)
    blocks = [rng.standard_normal((len(d), len(d))) for d in dm.elem_dofs]
    vecs = [rng.standard_normal(len(d)) for d in dm.elem_dofs]
    K = SparsityPattern(dm.n_dofs, dm.elem_dofs).matrix(blocks).toarray()
    r, D = np.zeros(dm.n_dofs), np.zeros((dm.n_dofs, dm.n_dofs))
    for e in range(len(blocks)):
        assemble((r, D), e, vecs[e], blocks[e], dm)
    np.testing.assert_allclose(K, D, atol=1e-14)
    np.testing.assert_allclose(scatter_vector(dm.n_dofs, dm.elem_dofs, vecs), r, atol=1e-14)
    with pytest.raises(DofError):
        assemble((r, D), 0, vecs[0][:-1], None, dm)


def test_kind_codes():
    assert (NODE, TRI_EDGE, TRI, QUAD_EDGE, QUAD_FACE, VOLUME) == tuple(range(6))
