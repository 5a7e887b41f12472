import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial.transform import Rotation

from prismshell.kinematics import (
    I3, Material, convected_basis, deformation_gradient, first_pk, green_lagrange,
    local_to_global_pk, material_tangent, right_cauchy_green, svk_energy, svk_stress,
)

MAT = Material(210.0, 0.3)


def random_state(rng, scale=0.1):
    gu = scale * rng.standard_normal((3, 3))
    gv = scale * rng.standard_normal(3)
    gw = scale * rng.standard_normal((2, 3))
    G = I3 + 0.2 * rng.standard_normal((3, 3))
    return gu, gv, gw, G


seeds = st.integers(0, 2**31 - 1)


def test_material_lame_constants():
    m = Material(1000.0, 0.25)
    assert m.lame_lambda == pytest.approx(1000 * 0.25 / (1.25 * 0.5))
    assert m.lame_mu == pytest.approx(400.0)
    for bad in ((0.0, 0.3), (1.0, 0.5), (1.0, -1.0)):
        with pytest.raises(ValueError):
            Material(*bad)


def test_zero_state_vanishes():
    G = np.diag([2.0, 0.5, 0.1])
    s = deformation_gradient(np.zeros((3, 3)), np.zeros(3), np.zeros((2, 3)), G)
    np.testing.assert_array_equal(s.F, I3)
    E = green_lagrange(right_cauchy_green(s))
    assert np.abs(E).max() <= 1e-14
    P_local, P = first_pk(s, MAT, G)
    assert np.abs(P).max() <= 1e-14 and np.abs(P_local).max() <= 1e-14


@given(seeds)
def test_convected_duality(seed):
    gu, gv, gw, G = random_state(np.random.default_rng(seed))
    s = deformation_gradient(gu, gv, gw, G)
    np.testing.assert_allclose(s.g.T @ s.g_contra, I3, atol=1e-12)
    np.testing.assert_allclose(s.g_metric, s.g.T @ s.g, atol=1e-14)


@given(seeds)
def test_composition_of_the_deformation_gradient(seed):
    # F = MF (I + G_a (x) grad c^a): v moves along g_2, w along g_0, g_1
    gu, gv, gw, G = random_state(np.random.default_rng(seed))
    s = deformation_gradient(gu, gv, gw, G)
    expected = (I3 + gu) @ (I3 + np.outer(G[:, 0], gw[0]) + np.outer(G[:, 1], gw[1])
                            + np.outer(G[:, 2], gv))
    np.testing.assert_allclose(s.F, expected, atol=1e-14)
    np.testing.assert_allclose(s.F_local, np.linalg.solve(s.g, s.F @ G), atol=1e-12)


@settings(max_examples=50)
@given(seeds)
def test_objectivity_under_superposed_rotation(seed):
    rng = np.random.default_rng(seed)
    gu, gv, gw, G = random_state(rng)
    Q = Rotation.random(random_state=seed % 2**32).as_matrix()
    s = deformation_gradient(gu, gv, gw, G)
    # rotated motion: grad u' = Q (I + grad u) - I keeps the enrichment
    sr = deformation_gradient(Q @ (I3 + gu) - I3, gv, gw, G)
    np.testing.assert_allclose(sr.F, Q @ s.F, atol=1e-13)
    C, Cr = right_cauchy_green(s), right_cauchy_green(sr)
    np.testing.assert_allclose(Cr, C, atol=1e-10)
    E, Er = green_lagrange(C), green_lagrange(Cr)
    np.testing.assert_allclose(Er, E, atol=1e-10)
    np.testing.assert_allclose(svk_stress(Er, MAT), svk_stress(E, MAT), atol=1e-10 * MAT.young)
    np.testing.assert_allclose(sr.g_metric, s.g_metric, atol=1e-10)


def test_rigid_rotation_is_strain_free():
    Q = Rotation.from_rotvec([0.4, -1.1, 0.7]).as_matrix()
    s = deformation_gradient(Q - I3, np.zeros(3), np.zeros((2, 3)), I3)
    assert np.abs(green_lagrange(right_cauchy_green(s))).max() <= 1e-15
    assert np.abs(first_pk(s, MAT, I3)[1]).max() <= 1e-12


@given(seeds)
def test_mixed_components_share_invariants(seed):
    gu, gv, gw, G = random_state(np.random.default_rng(seed))
    s = deformation_gradient(gu, gv, gw, G)
    C = right_cauchy_green(s)
    Cm = right_cauchy_green(s, G)
    assert np.trace(Cm) == pytest.approx(np.trace(C), rel=1e-12)
    Sm = svk_stress(green_lagrange(Cm), MAT)
    np.testing.assert_allclose(G @ Sm @ np.linalg.inv(G), svk_stress(green_lagrange(C), MAT),
                               atol=1e-9)


@given(seeds)
def test_local_pk_round_trip(seed):
    gu, gv, gw, G = random_state(np.random.default_rng(seed))
    s = deformation_gradient(gu, gv, gw, G)
    P_local, P = first_pk(s, MAT, G)
    np.testing.assert_allclose(local_to_global_pk(P_local, s, G), P, atol=1e-10)


def test_stress_is_energy_derivative():
    rng = np.random.default_rng(2)
    E = 0.01 * rng.standard_normal((3, 3))
    E = 0.5 * (E + E.T)
    S = svk_stress(E, MAT)
    h = 1e-7
    for i in range(3):
        for j in range(3):
            d = np.zeros((3, 3))
            d[i, j] = h
            fd = (svk_energy(E + d, MAT) - svk_energy(E - d, MAT)) / (2 * h)
            assert fd == pytest.approx(S[i, j], rel=1e-6, abs=1e-9)


@given(seeds)
def test_material_tangent_matches_fd(seed):
    rng = np.random.default_rng(seed)
    F = I3 + 0.2 * rng.standard_normal((3, 3))

    def P_of(F):
        E = green_lagrange(F.T @ F)
        return F @ svk_stress(E, MAT)

    A = material_tangent(F, svk_stress(green_lagrange(F.T @ F), MAT), MAT)
    h = 1e-6
    for k in range(3):
        for L in range(3):
            d = np.zeros((3, 3))
            d[k, L] = h
            fd = (P_of(F + d) - P_of(F - d)) / (2 * h)
            np.testing.assert_allclose(A[:, 3 * k + L], fd.ravel(), rtol=1e-6, atol=1e-6 * MAT.young)
    np.testing.assert_allclose(A, A.T, atol=1e-9 * MAT.young)


def test_inadmissible_map_rejected():
    with pytest.raises(ValueError):
        convected_basis(np.diag([1.0, 1.0, -1.0]), I3)
