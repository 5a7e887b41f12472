import numpy as np
import pytest

from prismshell.benchmarks import (
    GENERATORS, LINEAR, NONLINEAR, TABLE1, BenchmarkError, get_benchmark,
)
from prismshell.model import ShellModel
from prismshell.solver import solve_linear_problem

# literal copy of the published input data table
EXPECTED = {
    "PC-L": dict(L=600, R=300, a=3, theta=None, E=3, nu=0.3, P=1, q=None),
    "SLR": dict(L=50, R=25, a=0.25, theta=40, E=4.32e8, nu=0.0, P=None, q=90),
    "SAP": dict(L=None, R=(6, 10), a=0.03, theta=None, E=21e6, nu=0.0, P=None, q=0.8),
    "HS": dict(L=None, R=10, a=0.04, theta=18, E=6.825e7, nu=0.3, P=400, q=None),
    "POC": dict(L=10.35, R=4.953, a=0.094, theta=None, E=10.5e6, nu=0.3125, P=40000, q=None),
    "PC": dict(L=200, R=100, a=1, theta=None, E=30e3, nu=0.3, P=12000, q=None),
}


def test_table_defaults_match_literal():
    assert TABLE1 == EXPECTED
    assert set(GENERATORS) == set(LINEAR) | set(NONLINEAR)


@pytest.mark.parametrize("name", list(GENERATORS))
def test_generators_build_valid_problems(name):
    prob = get_benchmark(name)
    assert prob.name == name
    m = prob.mesh
    assert m.n_tris > 0 and np.all(m.thickness > 0)
    np.testing.assert_allclose(np.linalg.norm(m.directors, axis=1), 1.0, atol=1e-12)
    for set_name, _ in prob.bcs:
        assert len(m.set_nodes(set_name)) > 0
    for mon in prob.monitors.values():
        assert 0 <= mon.node < m.n_nodes
    assert prob.primary_monitor in prob.monitors
    assert prob.nonlinear == (name in NONLINEAR)
    data = EXPECTED[name.replace("-H", "")]
    assert prob.material.young == data["E"] and prob.material.poisson == data["nu"]
    assert prob.target == (data["P"] if data["P"] is not None else data["q"])


def test_unknown_benchmark():
    with pytest.raises(BenchmarkError):
        get_benchmark("XYZ")
    assert get_benchmark("slr").name == "SLR"


def test_roof_geometry():
    prob = get_benchmark("SLR", n=3)
    X = prob.mesh.nodes
    r = np.hypot(X[:, 1], X[:, 2])
    np.testing.assert_allclose(r, 25.0, rtol=1e-12)
    assert X[:, 0].min() == 0 and X[:, 0].max() == pytest.approx(25.0)
    A = prob.mesh.nodes[prob.monitors["A"].node]
    np.testing.assert_allclose(A, [0, 25 * np.sin(np.radians(40)), 25 * np.cos(np.radians(40))],
                               atol=1e-12)


def test_perforated_roof_has_holes_of_given_radius():
    prob = get_benchmark("SLR-H")
    centres = np.array(prob.params["holes"])
    assert prob.params["hole_radius"] == 0.3 and len(centres) == 6
    X = prob.mesh.nodes
    dev = np.column_stack([X[:, 0], 25 * np.arctan2(X[:, 1], X[:, 2])])
    dist = np.min(np.linalg.norm(dev[:, None] - centres[None], axis=2), axis=1)
    assert dist.min() == pytest.approx(0.3, rel=1e-9)


def test_hemisphere_equator_options():
    pin = get_benchmark("HS")
    fixed = get_benchmark("HS", equator="fixed")
    assert ("pin", "z") in pin.bcs and ("equator", "z") in fixed.bcs
    with pytest.raises(BenchmarkError):
        get_benchmark("HS", equator="loose")
    # restraining the whole equator removes the inextensional mode
    u = {}
    for key, prob in (("pin", pin), ("fixed", fixed)):
        model = ShellModel(prob.mesh, prob.material, 3, bcs=prob.bcs)
        U, _ = solve_linear_problem(model, prob.loads)
        u[key] = model.node_displacement(U, prob.monitors["A"].node)[0]
    assert u["pin"] > 10 * u["fixed"] > 0


def test_data_override():
    prob = get_benchmark("SLR", data={"a": 0.5})
    np.testing.assert_allclose(prob.mesh.thickness, 0.5)
