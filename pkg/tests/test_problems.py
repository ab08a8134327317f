import numpy as np
import pytest

from ellopt import optimality, semilinear
from ellopt.mesh_fem import build_mesh
from ellopt.problems import DEFAULTS, catalog, make_problem
from ellopt.tensor import NotSPDError

CATALOG_CASES = [
    ("laplace-ms", {}), ("laplace-ms", {"kappa": 3.0}), ("two-phase", {}),
    ("two-phase", {"A1_diag": [1.0, 2.0], "kappa": 2.0, "yd_amp": 1.0}),
    ("region-free", {}), ("rank-one-gap", {"w_angle": 0.7}),
]


def test_catalog_names():
    assert catalog() == ("laplace-ms", "rank-one-gap", "region-free", "two-phase")
    assert set(DEFAULTS) == set(catalog())


def test_unknown_problem(mesh8):
    with pytest.raises(KeyError):
        make_problem("three-phase", mesh8)


def test_unknown_parameter(mesh8):
    with pytest.raises(KeyError):
        make_problem("two-phase", mesh8, {"bb": 2.0})


def test_bad_source_shape(mesh8):
    with pytest.raises(ValueError):
        make_problem("two-phase", mesh8, {"g_shape": "square"})


def test_negative_reaction_rejected(mesh8):
    with pytest.raises(ValueError):
        make_problem("two-phase", mesh8, {"c": -1.0})


def test_indefinite_coefficient_rejected(mesh8):
    with pytest.raises(NotSPDError):
        make_problem("two-phase", mesh8, {"A1_diag": [1.0, -1.0]})


@pytest.mark.parametrize("name, params", CATALOG_CASES)
def test_derivatives_match_finite_differences(mesh8, rng, name, params):
    prob = make_problem(name, mesh8, params)
    h = 1e-5
    for v in range(prob.n_labels):
        u = prob.constant_control(v)
        y = rng.uniform(-1, 1, mesh8.n_elements)
        fd = (prob.f(u, y + h) - prob.f(u, y - h)) / (2 * h)
        np.testing.assert_allclose(prob.f_y(u, y), fd, rtol=1e-7, atol=1e-7)
        fd = (prob.f_y(u, y + h) - prob.f_y(u, y - h)) / (2 * h)
        np.testing.assert_allclose(prob.f_yy(u, y), fd, rtol=1e-6, atol=1e-6)
        fd = (prob.f0(u, y + h) - prob.f0(u, y - h)) / (2 * h)
        np.testing.assert_allclose(prob.f0_y(u, y), fd, rtol=1e-7, atol=1e-7)
        fd = (prob.f0_y(u, y + h) - prob.f0_y(u, y - h)) / (2 * h)
        np.testing.assert_allclose(prob.f0_yy(u, y), fd, rtol=1e-6, atol=1e-6)


@pytest.mark.parametrize("name, params", CATALOG_CASES)
def test_structural_assumptions(mesh8, name, params):
    prob = make_problem(name, mesh8, params)
    lo, hi = prob.ellipticity()
    assert 0 < lo <= hi
    y = np.linspace(-3, 3, mesh8.n_elements)
    for v in range(prob.n_labels):
        assert np.all(prob.f_y(prob.constant_control(v), y) <= 0)


def test_check_control(two_phase16):
    p = two_phase16
    with pytest.raises(ValueError):
        p.check_control(np.zeros(3))
    with pytest.raises(ValueError):
        p.check_control(np.full(p.n_elements, 2))
    with pytest.raises(ValueError):
        p.check_control(np.full(p.n_elements, 0.5))
    assert p.check_control(np.zeros(p.n_elements)).dtype == np.int64


def test_two_phase_structure(mesh8):
    p = make_problem("two-phase", mesh8, {"b": 2.5, "beta_amp": 0.0, "beta": [0.0, 0.3]})
    np.testing.assert_allclose(p.A(p.constant_control(1)), np.broadcast_to(2.5 * np.eye(2), (128, 2, 2)))
    np.testing.assert_allclose(p.beta[1], 0.3)
    q = make_problem("two-phase", mesh8, {"beta_amp": 1.0, "beta": [0.0, 0.0]})
    np.testing.assert_allclose(q.beta[1], np.cos(2 * np.pi * mesh8.centroids[:, 0]))


def test_region_free_calibration(region_free16):
    p = region_free16
    ub = p.reference
    y = semilinear.solve_state(p, ub)
    cells = optimality.cell_data(p, y, semilinear.solve_adjoint(p, ub, y))
    gap = optimality.foc_gap(cells, ub, p.constant_control(1))
    assert np.abs(gap[p.region]).max() < 1e-12
    np.testing.assert_allclose(gap[~p.region], 1.0, atol=1e-12)


def test_region_free_independence_mask(mesh8):
    p = make_problem("region-free", mesh8, {"uniform_a": True})
    assert p.coefficient_independent_of_control().all()
    q = make_problem("region-free", mesh8)
    np.testing.assert_array_equal(q.coefficient_independent_of_control(), q.region)


def test_rank_one_difference(mesh8):
    p = make_problem("rank-one-gap", mesh8, {"w_angle": 0.3, "sigma": 2.0})
    d = p.coeff[1] - p.coeff[0]
    assert np.all(np.linalg.matrix_rank(d) == 1)
    w = np.array([np.cos(0.3), np.sin(0.3)])
    np.testing.assert_allclose(d[0], 2.0 * np.outer(w, w), atol=1e-15)
