import numpy as np
import pytest

from ellopt import optimality
from ellopt.improve import OscillationError, improve_control
from ellopt.mesh_fem import build_mesh
from ellopt.problems import make_problem


def test_single_label_is_returned_unchanged(mesh8):
    p = make_problem("laplace-ms", mesh8)
    u0 = p.constant_control(0)
    res = improve_control(p, u0)
    assert res.converged and res.rounds == 0
    np.testing.assert_array_equal(res.control, u0)


def test_cost_dominated_label_is_abandoned(mesh16):
    p = make_problem("two-phase", mesh16, {"beta": [0.0, 5.0], "beta_amp": 0.0})
    res = improve_control(p, p.constant_control(1))
    assert res.converged and res.rounds == 1
    assert np.all(res.control == 0)
    assert res.switches == [mesh16.n_elements]
    assert res.violation == 0.0


def test_ties_keep_incumbent(mesh16):
    # equal coefficients and a calibrated zero gap inside the region: nothing should move
    p = make_problem("region-free", mesh16, {"uniform_a": True})
    u0 = p.reference.copy()
    res = improve_control(p, u0)
    assert res.converged and res.rounds == 0
    np.testing.assert_array_equal(res.control, u0)


@pytest.fixture(scope="module")
def default_run():
    p = make_problem("two-phase", build_mesh(32))
    return p, improve_control(p, p.constant_control(0))


def test_default_two_phase_converges(default_run):
    p, res = default_run
    assert res.converged and res.reason == "fixed point"
    assert res.violation <= 1e-6
    assert 0 < res.control.sum() < p.mesh.n_elements  # genuinely two-phase


def test_costs_strictly_decrease(default_run):
    _, res = default_run
    assert len(res.costs) == res.rounds + 1
    assert np.all(np.diff(res.costs) < 0)


def test_fixed_point_is_stationary(default_run):
    p, res = default_run
    again = improve_control(p, res.control)
    assert again.converged and again.rounds == 0
    np.testing.assert_array_equal(again.control, res.control)


def test_cycle_detection(monkeypatch, mesh8):
    p = make_problem("two-phase", mesh8)

    def always_other(cells, ubar, v):
        ub = np.broadcast_to(np.asarray(ubar), (cells.n,))
        return np.where(ub == v, 0.0, -1.0)

    monkeypatch.setattr(optimality, "foc_gap", always_other)
    res = improve_control(p, p.constant_control(0), backtrack=False)
    assert not res.converged and res.reason.startswith("oscillation of period 2")
    assert res.cycle is not None and len(res.cycle) == 3
    np.testing.assert_array_equal(res.cycle[0], res.cycle[-1])
    with pytest.raises(OscillationError) as info:
        improve_control(p, p.constant_control(0), backtrack=False, raise_on_cycle=True)
    assert len(info.value.controls) == 3


def test_backtracking_refuses_ascent(monkeypatch, mesh8):
    p = make_problem("two-phase", mesh8)

    def always_other(cells, ubar, v):
        ub = np.broadcast_to(np.asarray(ubar), (cells.n,))
        return np.where(ub == v, 0.0, -1.0)

    monkeypatch.setattr(optimality, "foc_gap", always_other)
    res = improve_control(p, p.constant_control(0))
    assert np.all(np.diff(res.costs) < 0)
    assert res.cycle is None
