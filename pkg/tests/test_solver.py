import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st

from prismshell.benchmarks import get_benchmark
from prismshell.element import Load
from prismshell.model import ShellModel
from prismshell.solver import (
    ArcConfig, ArcLengthError, ConvergenceError, NewtonConfig, SingularSystemError, Trace,
    arc_length, embed, error_indicator, linear_solve, newton_solve, p_adapt, rigid_body_modes,
    solve_linear_problem,
)


def sap_model(p=2):
    prob = get_benchmark("SAP", n_r=1, n_theta=4)
    return prob, ShellModel(prob.mesh, prob.material, p, bcs=prob.bcs)


# --- linear algebra -------------------------------------------------------------

def test_linear_solve_identity_and_spd():
    b = np.arange(5.0)
    np.testing.assert_array_equal(linear_solve(sp.identity(5), b), b)
    rng = np.random.default_rng(1)
    A = rng.standard_normal((30, 30))
    K = A @ A.T + 30 * np.eye(30)
    x = linear_solve(sp.csr_matrix(K), b @ np.ones((5, 30)) / 5)
    np.testing.assert_allclose(K @ x, np.full(30, 2.0), atol=1e-10)


def test_badly_scaled_system():
    d = 10.0 ** np.arange(-6, 7)
    K = sp.diags(d) @ (sp.diags([-1, 2.5, -1], [-1, 0, 1], (13, 13))) @ sp.diags(d)
    x0 = np.linspace(1, 2, 13)
    b = K @ x0
    x = linear_solve(K, b)
    assert np.linalg.norm(K @ x - b) <= 1e-12 * np.linalg.norm(abs(K) @ np.abs(x) + np.abs(b))
    np.testing.assert_allclose(x, x0, rtol=1e-6)


def test_singular_system_names_mode():
    prob = get_benchmark("SLR", n=2)
    model = ShellModel(prob.mesh, prob.material, 2)  # no supports
    with pytest.raises(SingularSystemError, match="candidate null-space mode"):
        solve_linear_problem(model, prob.loads)
    with pytest.raises(SingularSystemError):
        linear_solve(sp.csr_matrix(np.ones((3, 3))), np.ones(3))


def test_rigid_modes_are_in_the_kernel():
    prob = get_benchmark("SLR", n=2)
    model = ShellModel(prob.mesh, prob.material, 3)
    _, K = model.tangent(np.zeros(model.n_dofs))
    scale = abs(K).max()
    for name, r in rigid_body_modes(model).items():
        assert np.abs(K @ r).max() <= 1e-8 * scale * np.abs(r).max(), name


# --- Newton ---------------------------------------------------------------------

def test_newton_small_load_reproduces_linear_solution():
    prob = get_benchmark("SLR", n=2)
    model = ShellModel(prob.mesh, prob.material, 3, bcs=prob.bcs)
    U, f = solve_linear_problem(model, prob.loads)
    s = 1e-6
    q, nlog = newton_solve(model, np.zeros(model.n_free), s * f[model.free],
                           NewtonConfig(rtol=1e-10, atol=1e-30))
    assert nlog.converged and nlog.iterations <= 2
    np.testing.assert_allclose(q, s * U[model.free], rtol=0, atol=1e-5 * s * np.abs(U).max())


def test_newton_quadratic_rate_and_symmetrized_agree():
    prob = get_benchmark("SLR", n=2)
    model = ShellModel(prob.mesh, prob.material, 3, bcs=prob.bcs)
    f = model.load_vector(prob.loads)[model.free]
    cfg = NewtonConfig(rtol=1e-14, atol=1e-30, line_search=False)
    q, nlog = newton_solve(model, np.zeros(model.n_free), f, cfg)
    r = np.array(nlog.residuals[-3:])
    assert math.log(r[2] / r[1]) / math.log(r[1] / r[0]) > 1.7
    qs, _ = newton_solve(model, np.zeros(model.n_free), f,
                         NewtonConfig(rtol=1e-10, atol=1e-30, symmetrize=True))
    assert np.linalg.norm(qs - q) <= 1e-8 * np.linalg.norm(q)


def test_newton_reports_non_convergence():
    prob, model = sap_model()
    f = 0.5 * model.load_vector(prob.loads)[model.free]
    with pytest.raises(ConvergenceError):
        newton_solve(model, np.zeros(model.n_free), f, NewtonConfig(max_iter=1))
    with pytest.raises(ValueError):
        NewtonConfig(rtol=0)


# --- arc length -----------------------------------------------------------------

def run_arc(model, prob, **kw):
    cfg = ArcConfig(**{"ds0": 1.0, "lam_target": 0.3, **kw})
    return arc_length(model, model.load_vector(prob.loads), cfg, prob.monitors, prob.target)


def test_arc_length_reaches_target_and_matches_newton():
    prob, model = sap_model()
    U, trace = run_arc(model, prob)
    assert trace.rows[-1][1] == pytest.approx(0.3, abs=1e-14)
    assert np.all(np.diff(trace.column("step")) > 0)
    f = 0.3 * model.load_vector(prob.loads)[model.free]
    q, _ = newton_solve(model, U[model.free], f)
    assert np.linalg.norm(q - U[model.free]) <= 1e-7 * np.linalg.norm(q)


def test_forced_failure_recovers():
    prob, model = sap_model()
    U0, t0 = run_arc(model, prob)
    U1, t1 = run_arc(model, prob, fail_at_steps=(2,))
    assert t1.rows[-1][1] == pytest.approx(0.3)
    name = prob.primary_monitor
    assert t1.monitored(name)[-1] == pytest.approx(t0.monitored(name)[-1], rel=1e-6)


def test_arc_length_gives_up():
    prob, model = sap_model()
    with pytest.raises(ArcLengthError) as exc:
        run_arc(model, prob, max_steps=1, ds0=0.01)
    assert len(exc.value.trace) >= 1


def test_trace_csv(tmp_path):
    prob, _ = sap_model()
    tr = Trace(prob.monitors, target=0.8)
    name = prob.primary_monitor
    tr.record(0, 0.0, {k: np.zeros(3) for k in prob.monitors}, 0)
    tr.record(1, 0.5, {k: np.array([1.0, 2.0, 3.0]) for k in prob.monitors}, 4)
    with pytest.raises(ValueError):
        tr.record(1, 0.6, {k: np.zeros(3) for k in prob.monitors}, 1)
    tr.write_csv(tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0].startswith("step,lambda,load,") and lines[0].endswith(",iters")
    assert f"{name}_dx" in lines[0]
    assert lines[2].split(",")[2] == "0.4"
    assert tr.column("load")[1] == 0.4


def test_arc_length_is_deterministic(tmp_path):
    prob, model = sap_model()
    _, a = run_arc(model, prob)
    _, b = run_arc(model, prob)
    a.write_csv(tmp_path / "a.csv")
    b.write_csv(tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


# --- indicator and adaptivity ------------------------------------------------------

def test_p_adapt_examples():
    np.testing.assert_array_equal(p_adapt([2, 2, 2, 2], [1.0, 3.0, 3.0, 0.5]), [2, 3, 3, 2])
    # ceil(5/3) = 2, tie broken by id
    np.testing.assert_array_equal(p_adapt([1] * 5, [1, 1, 1, 1, 1]), [2, 2, 1, 1, 1])
    np.testing.assert_array_equal(p_adapt([8, 7, 1], [5, 4, 0]), [8, 7, 1])
    with pytest.raises(ValueError):
        p_adapt([1, 2], [1.0])


@given(st.lists(st.tuples(st.integers(1, 8), st.floats(0, 1e3)), min_size=1, max_size=40))
def test_p_adapt_properties(pairs):
    orders = np.array([p for p, _ in pairs])
    ind = np.array([x for _, x in pairs])
    new = p_adapt(orders, ind)
    assert np.all((new - orders >= 0) & (new - orders <= 1))
    assert np.all(new <= 8)
    raised = np.flatnonzero(new > orders)
    assert len(raised) <= math.ceil(len(orders) / 3)
    k = math.ceil(len(orders) / 3)
    chosen = np.lexsort((np.arange(len(ind)), -ind))[:k]
    assert set(raised) <= set(chosen)


def test_indicators_positive_and_consistent():
    prob = get_benchmark("SLR", n=2)
    model = ShellModel(prob.mesh, prob.material, 2, bcs=prob.bcs)
    U, f = solve_linear_problem(model, prob.loads)
    eta = error_indicator(model, U, prob.loads)
    assert eta.shape == (prob.mesh.n_tris,) and np.all(eta >= 0)
    # the global indicator sums to the enrichment energy gain
    plus = ShellModel(prob.mesh, prob.material, 3, bcs=prob.bcs)
    Up, fp = solve_linear_problem(plus, prob.loads)
    gain = 0.5 * (fp @ Up - f @ U)
    # equal up to the quadrature difference between the two orders on curved geometry
    assert eta.sum() == pytest.approx(gain, rel=1e-3)
    local = error_indicator(model, U, prob.loads, method="local")
    assert np.all(local >= 0) and local.sum() > 0
    with pytest.raises(ValueError):
        error_indicator(model, U, prob.loads, method="bogus")


def test_embedding_preserves_the_field():
    prob = get_benchmark("SLR", n=2)
    model = ShellModel(prob.mesh, prob.material, [2, 3] * 4, bcs=prob.bcs)
    plus = ShellModel(prob.mesh, prob.material, [3, 4] * 4, bcs=prob.bcs)
    rng = np.random.default_rng(0)
    U = model.expand(1e-3 * rng.standard_normal(model.n_free))
    Up = embed(model, plus, U)
    pts = np.array([[0.2, 0.3, 0.1], [0.6, 0.1, 0.9]])
    for e in range(prob.mesh.n_tris):
        np.testing.assert_allclose(plus.displacement_at(Up, e, pts), model.displacement_at(U, e, pts),
                                   atol=1e-14)
