from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ellopt import homogenization as hom
from ellopt.mesh_fem import build_mesh
from ellopt.tensor import NotSPDError, arithmetic_mean, harmonic_mean, random_spd


def lam(**kw):
    base = dict(B=np.eye(2), C=4 * np.eye(2), alpha=0.5, mu=(1, 0))
    base.update(kw)
    return hom.Laminate(**base)


class TestLaminate:
    @pytest.mark.parametrize("mu, expected", [
        ((1, 0), (Fraction(1), Fraction(0))),
        (("1/2", "-3/4"), (Fraction(1, 2), Fraction(-3, 4))),
        (((1, 3), 2), (Fraction(1, 3), Fraction(2))),
        ((Fraction(2, 5), 0), (Fraction(2, 5), Fraction(0))),
    ])
    def test_rational_directions(self, mu, expected):
        assert lam(mu=mu).mu == expected

    @pytest.mark.parametrize("kw, exc", [
        ({"mu": (0.3, 1)}, TypeError),
        ({"mu": (0, 0)}, ValueError),
        ({"mu": ((1, 0), 1)}, ValueError),
        ({"alpha": 0.0}, ValueError),
        ({"alpha": 1.0}, ValueError),
        ({"B": np.diag([1.0, -1.0])}, NotSPDError),
        ({"C": np.eye(3)}, ValueError),
    ])
    def test_rejects(self, kw, exc):
        with pytest.raises(exc):
            lam(**kw)

    def test_regions_must_partition(self):
        m = np.array([True, False, True])
        with pytest.raises(ValueError):
            lam(regions=[(m, (1, 0)), (m, (0, 1))])
        ok = lam(regions=[(m, (1, 0)), (~m, (0, 2))])
        np.testing.assert_array_equal(ok.directions(3), [[1, 0], [0, 2], [1, 0]])
        assert ok.max_direction_norm() == 2.0


class TestField:
    @pytest.mark.parametrize("mu", [(1, 0), (0, 1), (1, 1), (2, -1)])
    @pytest.mark.parametrize("alpha", [0.25, 0.5])
    def test_volume_fraction(self, mu, alpha):
        mesh = build_mesh(64)
        field = hom.laminate_field(lam(alpha=alpha, mu=mu), mesh, 0.25)
        frac = mesh.areas @ np.all(field == np.eye(2), axis=(1, 2))
        assert frac == pytest.approx(alpha, abs=0.02)

    def test_stripes_frozen(self):
        mesh = build_mesh(4)
        field = hom.laminate_field(lam(mu=(1, 0)), mesh, 0.5)
        is_b = np.all(field == np.eye(2), axis=(1, 2))
        expected = (mesh.centroids[:, 0] / 0.5) % 1.0 < 0.5
        np.testing.assert_array_equal(is_b, expected)
        assert is_b.sum() == 16

    def test_bad_eps(self, mesh8):
        with pytest.raises(ValueError):
            hom.laminate_field(lam(), mesh8, 0.0)


class TestHLimit:
    def test_frozen_diag(self):
        # across the layers: harmonic mean 1.6; along: arithmetic mean 2.5
        np.testing.assert_allclose(hom.hlimit_matrix(np.eye(2), 4 * np.eye(2), 0.5, (1, 0)),
                                   np.diag([1.6, 2.5]), atol=1e-15)

    def test_matches_means(self):
        b, c = np.diag([1.0, 3.0]), np.diag([5.0, 2.0])
        g = hom.hlimit_matrix(b, c, 0.3, (0, 1))
        assert g[1, 1] == pytest.approx(harmonic_mean([[3.0]], [[2.0]], 0.3)[0, 0], abs=1e-12)
        assert g[0, 0] == pytest.approx(arithmetic_mean(1.0, 5.0, 0.3), abs=1e-12)

    def test_scale_free(self, rng):
        b, c = random_spd(rng, 2), random_spd(rng, 2)
        np.testing.assert_allclose(hom.hlimit_matrix(b, c, 0.4, (1, 2)),
                                   hom.hlimit_matrix(b, c, 0.4, (3, 6)), atol=1e-13)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**31), st.floats(0.01, 0.99), st.integers(-5, 5), st.integers(1, 5))
    def test_between_harmonic_and_arithmetic(self, seed, a, p, q):
        rng = np.random.default_rng(seed)
        b, c = random_spd(rng, 2), random_spd(rng, 2)
        g = hom.hlimit_matrix(b, c, a, (p, q))
        arith = a * b + (1 - a) * c
        harm = np.linalg.inv(a * np.linalg.inv(b) + (1 - a) * np.linalg.inv(c))
        assert np.linalg.eigvalsh(arith - g).min() >= -1e-10
        assert np.linalg.eigvalsh(g - harm).min() >= -1e-10

    def test_per_region(self, mesh8):
        m = mesh8.centroids[:, 0] < 0.5
        lm = lam(regions=[(m, (1, 0)), (~m, (0, 1))])
        g = hom.hlimit_laminate(lm, mesh8.n_elements)
        np.testing.assert_allclose(g[m][0], np.diag([1.6, 2.5]))
        np.testing.assert_allclose(g[~m][0], np.diag([2.5, 1.6]))


class TestSweep:
    def test_gate(self):
        mesh = build_mesh(32)
        with pytest.raises(ValueError, match="under-resolved"):
            hom.epsilon_sweep(lam(), mesh, np.ones(mesh.n_elements), [0.5, 0.2])
        with pytest.raises(ValueError, match="under-resolved"):
            hom.epsilon_sweep(lam(mu=(2, 0)), mesh, np.ones(mesh.n_elements), [0.4])
        hom.epsilon_sweep(lam(mu=(2, 0)), mesh, np.ones(mesh.n_elements), [0.5])  # exactly 8 per period
        with pytest.raises(ValueError, match="decreasing"):
            hom.epsilon_sweep(lam(), mesh, np.ones(mesh.n_elements), [0.25, 0.5])

    def test_converges(self):
        mesh = build_mesh(64)
        rows = hom.epsilon_sweep(lam(), mesh, np.ones(mesh.n_elements), [0.5, 0.25, 0.125])
        l2 = [r.l2 for r in rows]
        assert l2[0] > l2[1] > l2[2]
        assert all(r.b_fraction == pytest.approx(0.5) for r in rows)
        threaded = hom.epsilon_sweep(lam(), mesh, np.ones(mesh.n_elements), [0.5, 0.25, 0.125], threads=3)
        assert [r.l2 for r in threaded] == l2


class TestDecimal:
    @pytest.mark.parametrize("nu, alpha, n, expected", [
        ((1,), 0.5, 100, 0.5),
        ((1, 0), 0.3, 100, 0.3),
        ((2, 3), 0.25, 400, 0.25),
        ((1, -1, 2), 0.5, 100, 0.5),
    ])
    def test_exact_cases(self, nu, alpha, n, expected):
        assert hom.decimal_measure(nu, alpha, n) == pytest.approx(expected, abs=1e-12)

    @pytest.mark.parametrize("nu, alpha, n", [
        ((0, 0), 0.5, 100), ((1.5, 1), 0.5, 100), ((1, 1), 0.0, 100), ((1, 1), 1.0, 100),
        ((1, 1), 0.5, 99), ((1, 1, 1, 1), 0.5, 100), ([[1, 1]], 0.5, 100),
    ])
    def test_rejects(self, nu, alpha, n):
        with pytest.raises(ValueError):
            hom.decimal_measure(nu, alpha, n)

    def test_first_order_convergence(self):
        nu, alpha = (3, 7), 0.3
        errs = [abs(hom.decimal_measure(nu, alpha, n) - alpha) for n in (101, 203, 407)]
        assert max(errs) <= 10.0 / 101
        assert all(e <= 10.0 / n for e, n in zip(errs, (101, 203, 407)))

    def test_backends_agree(self, backend):
        assert hom.decimal_measure((3, -5), 0.37, 500) == hom.decimal_measure((3, -5), 0.37, 500)


class TestCorrector:
    def test_frozen(self):
        corr = hom.corrector_1d(np.eye(2), 4 * np.eye(2), 0.5, (1.0, 0.0))
        np.testing.assert_allclose(corr.X, [1.6, 0.0])
        np.testing.assert_allclose(corr.slope_B, [0.6, 0.0])
        np.testing.assert_allclose(corr.slope_C, [-0.6, 0.0])

    def test_equal_phases(self, rng):
        b = random_spd(rng, 2)
        corr = hom.corrector_1d(b, b, 0.3, (0.6, 0.8))
        np.testing.assert_allclose(corr.slope_B, 0.0, atol=1e-14)
        np.testing.assert_allclose(corr.slope_C, 0.0, atol=1e-14)

    def test_requires_unit(self):
        with pytest.raises(ValueError):
            hom.corrector_1d(np.eye(2), np.eye(2), 0.5, (1.0, 1.0))

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**31), st.floats(0.01, 0.99), st.floats(0, 2 * np.pi))
    def test_closure_and_reconstruction(self, seed, a, th):
        rng = np.random.default_rng(seed)
        b, c = random_spd(rng, 2), random_spd(rng, 2)
        m = np.array([np.cos(th), np.sin(th)])
        corr = hom.corrector_1d(b, c, a, m)
        assert np.abs(corr.closure(a)).max() <= 1e-12
        np.testing.assert_allclose(hom.reconstruct_hlimit(b, c, a, m, corr),
                                   hom.hlimit_matrix(b, c, a, m), atol=1e-11)
