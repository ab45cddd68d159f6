import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fixpp.domain import CovariateField, PointPattern, Window
from fixpp.errors import ValidationError
from fixpp.intensity import LinearPredictor
from fixpp.metrics import (MetricReport, area_count, area_count_curve, area_count_integral,
                           auc_2afc, auc_optimal, contour_volume_curve, exact_pc,
                           shuffled_auc_correction)
from fixpp.simulate import make_rng, sample_conditional_n


def pixel(values, window=None):
    return CovariateField(np.asarray(values, dtype=float), window or Window.unit(), "pixel")


def two_level(n=10):
    v = np.full((n, n), 0.25)
    v[n - 2:, :] = 4.0
    return pixel(v)


def sample_cells(density, n, rng):
    """Exact draws from a piecewise-constant pixel density."""
    grid, v = density.cells()
    cells = rng.choice(v.size, size=n, p=v / v.sum())
    iy, ix = np.divmod(cells, grid.nx)
    u = rng.random((n, 2))
    w = density.window
    xy = np.column_stack([w.x_min + (ix + u[:, 0]) * grid.dx, w.y_min + (iy + u[:, 1]) * grid.dy])
    return PointPattern(xy, w)


def brute_auc(f, c):
    d = f[:, None] - c[None, :]
    return np.mean((d > 0) + 0.5 * (d == 0))


class TestVolumeCurve:
    def test_uniform(self):
        curve = contour_volume_curve(pixel(np.ones((8, 8))))
        np.testing.assert_allclose(curve.volume, curve.alpha, atol=1 / 64)

    def test_concentrated(self):
        v = np.zeros((5, 5))
        v[2, 3] = 25.0
        alpha = np.array([0.01, 0.3, 0.99])
        curve = contour_volume_curve(pixel(v), ladder=alpha)
        # within one cell: the level set is a fraction alpha of that cell
        assert np.all((curve.volume > 0) & (curve.volume <= 1 / 25))
        np.testing.assert_allclose(curve.volume, alpha / 25, rtol=1e-12)

    def test_two_level(self):
        curve = contour_volume_curve(two_level(), ladder=[0.8])
        np.testing.assert_allclose(curve.volume, [0.2], rtol=1e-12)

    def test_two_level_integral(self):
        np.testing.assert_allclose(contour_volume_curve(two_level()).integral(), 0.2, rtol=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 10**6), n=st.integers(2, 12))
    def test_shape_and_exact_auc_identity(self, seed, n):
        r = np.random.default_rng(seed)
        v = r.gamma(0.5, size=(n, n))
        v[r.random((n, n)) < 0.2] = 0.0
        if v.sum() == 0:
            v[0, 0] = 1.0
        dens = pixel(v / v.mean())
        curve = contour_volume_curve(dens)
        assert curve.volume[0] == 0.0 and curve.volume[-1] == 1.0
        assert np.all(np.diff(curve.volume) >= -1e-15)
        np.testing.assert_allclose(auc_optimal(dens), 1 - curve.integral(), atol=1e-12)

    def test_renormalizes(self):
        with pytest.warns(RuntimeWarning, match="renormaliz"):
            curve = contour_volume_curve(pixel(3 * np.ones((4, 4))), ladder=[0.5])
        np.testing.assert_allclose(curve.volume, [0.5])

    def test_zero_density(self):
        with pytest.raises(ValidationError):
            contour_volume_curve(pixel(np.zeros((3, 3))))

    def test_csv(self):
        text = contour_volume_curve(two_level(), ladder=[0, 0.5, 1]).to_csv()
        assert text.splitlines()[0] == "alpha,volume"
        assert len(text.splitlines()) == 4


class TestAuc:
    def test_constant_map(self, unit, rng):
        m = CovariateField.constant(2.0, unit)
        f, c = PointPattern(rng.random((50, 2)), unit), PointPattern(rng.random((70, 2)), unit)
        assert auc_2afc(m, f, c) == 0.5

    def test_separated(self, unit, rng):
        m = CovariateField.from_function(lambda x, y: x, unit, 3, 3)
        f = PointPattern(np.column_stack([0.6 + 0.4 * rng.random(30), rng.random(30)]), unit)
        c = PointPattern(np.column_stack([0.5 * rng.random(40), rng.random(40)]), unit)
        assert auc_2afc(m, f, c) == 1.0

    def test_empty(self, unit):
        m = CovariateField.constant(1.0, unit)
        with pytest.raises(ValidationError):
            auc_2afc(m, PointPattern([], unit), PointPattern([[0.5, 0.5]], unit))

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 10**6))
    def test_brute_force_and_monotone_invariance(self, seed):
        w = Window(0.0, 1.0, 0.0, 1.0)
        r = np.random.default_rng(seed)
        vals = np.round(r.normal(size=(4, 4)), 1)  # plateaus produce ties
        m = CovariateField(vals, w, "pixel")
        f = PointPattern(r.random((r.integers(1, 40), 2)), w)
        c = PointPattern(r.random((r.integers(1, 40), 2)), w)
        a = auc_2afc(m, f, c)
        np.testing.assert_allclose(a, brute_auc(m(f.xy), m(c.xy)), rtol=1e-14)
        mono = CovariateField(np.exp(3 * vals) + 7, w, "pixel")
        # a strictly increasing map of m preserves every pairwise comparison
        np.testing.assert_allclose(
            brute_auc(np.exp(3 * m(f.xy)), np.exp(3 * m(c.xy))), a, rtol=1e-14)
        assert 0 <= auc_2afc(mono, f, c) <= 1

    def test_chance(self, unit):
        rng = make_rng(3)
        m = CovariateField(rng.random((16, 16)), unit)
        f = PointPattern(rng.random((3000, 2)), unit)
        c = PointPattern(rng.random((3000, 2)), unit)
        assert abs(auc_2afc(m, f, c) - 0.5) < 4 * np.sqrt(1 / (12 * 3000) * 2)

    def test_auc_equals_one_minus_volume(self):
        lam = two_level(10)
        rng = make_rng(4)
        f = sample_cells(lam, 10_000, rng)
        c = PointPattern(rng.random((10_000, 2)), lam.window)
        assert abs(auc_2afc(lam, f, c) - (1 - contour_volume_curve(lam).integral())) < 0.01


class TestAucOptimal:
    def test_uniform_uniform(self):
        assert auc_optimal(pixel(np.ones((6, 6)))) == pytest.approx(0.5)

    def test_uniform_lambda_nonuniform_phi(self, rng):
        lam = pixel(np.ones((6, 6)))
        phi = pixel(rng.uniform(0.2, 2.0, size=(6, 6)))
        assert auc_optimal(lam, phi) > 0.5
        np.testing.assert_allclose(auc_optimal(lam, phi), exact_pc(1 / phi.values, lam, phi))

    def test_two_level_closed_form(self):
        # P(lambda(s1) > lambda(s2)) + 1/2 P(tie) with s1 ~ lambda, s2 uniform
        expected = 0.8 * 0.8 + 0.5 * (0.8 * 0.2 + 0.2 * 0.8)
        np.testing.assert_allclose(auc_optimal(two_level()), expected, rtol=1e-12)
        np.testing.assert_allclose(expected, 1 - 0.2)

    def test_phi_zero_where_lambda_positive(self):
        phi = np.ones((3, 3))
        phi[1, 1] = 0.0
        with pytest.raises(ValidationError):
            auc_optimal(pixel(np.ones((3, 3))), pixel(phi))

    def test_optimality_spot_check(self):
        rng = make_rng(8)
        lam = pixel(rng.gamma(2.0, size=(8, 8)))
        phi = pixel(rng.gamma(3.0, size=(8, 8)))
        best = auc_optimal(lam, phi)
        for _ in range(50):
            m = lam.values / phi.values * np.exp(0.3 * rng.normal(size=(8, 8)))
            assert exact_pc(m, lam, phi) <= best + 1e-12


class TestShuffledCorrection:
    def test_uniform_phi_preserves_auc(self, unit, rng):
        m = CovariateField(rng.uniform(0.1, 1.0, size=(8, 8)), unit)
        phi = CovariateField.constant(2.0, unit)
        corrected = shuffled_auc_correction(m, phi)
        nodes = m.nodes()
        f = PointPattern(nodes[rng.integers(0, 64, 200)], unit)
        c = PointPattern(nodes[rng.integers(0, 64, 200)], unit)
        np.testing.assert_allclose(corrected.values, np.log(m.values) - np.log(2.0))
        assert auc_2afc(corrected, f, c) == pytest.approx(auc_2afc(m, f, c), abs=1e-12)

    def test_m_equals_phi(self, unit, rng):
        phi = CovariateField(rng.uniform(0.5, 2.0, size=(5, 5)), unit)
        corrected = shuffled_auc_correction(phi, phi)
        np.testing.assert_allclose(corrected.values, 0.0, atol=1e-15)
        f, c = PointPattern(rng.random((50, 2)), unit), PointPattern(rng.random((50, 2)), unit)
        assert auc_2afc(corrected, f, c) == pytest.approx(0.5, abs=0.02)

    def test_nonpositive_phi(self, unit):
        with pytest.raises(ValidationError):
            shuffled_auc_correction(CovariateField.constant(1.0, unit),
                                    CovariateField([[1.0, 0.0], [1.0, 1.0]], unit))

    def test_eps_floor(self, unit):
        m = CovariateField([[0.0, 1.0], [2.0, 4.0]], unit)
        out = shuffled_auc_correction(m, CovariateField.constant(1.0, unit))
        np.testing.assert_allclose(out.values[0, 0], np.log(4e-12))

    def test_center_bias_inflation(self, unit):
        rng = make_rng(12)
        center = lambda x, y: np.exp(-((x - 0.5) ** 2 + (y - 0.5) ** 2) / (2 * 0.15**2))
        phi = CovariateField.from_function(lambda x, y: 0.05 + center(x, y), unit, 33, 33)
        m = CovariateField.from_function(lambda x, y: 1.05 - center(x, y), unit, 33, 33)
        lam = CovariateField(m.values * phi.values, unit)
        f = sample_conditional_n(LinearPredictor.from_field(lam.map(np.log)), 4000, rng)
        c = sample_conditional_n(LinearPredictor.from_field(phi.map(np.log)), 4000, rng)
        raw = auc_2afc(m, f, c)
        corrected = auc_2afc(shuffled_auc_correction(m, phi), f, c)
        assert corrected > raw


class TestAreaCount:
    def test_constant_chance(self, unit):
        rng = make_rng(2)
        m = CovariateField.constant(1.0, unit, 20, 20)
        f = PointPattern(rng.random((5000, 2)), unit)
        for q in (0.1, 0.2, 0.5):
            assert abs(area_count(m, f, q) - q) < 4 * np.sqrt(q * (1 - q) / 5000)

    def test_all_inside(self):
        m = two_level()
        f = PointPattern(np.column_stack([np.linspace(0, 1, 50), np.full(50, 0.9)]), m.window)
        assert area_count(m, f, 0.2) == 1.0

    def test_two_level(self):
        rng = make_rng(5)
        lam = two_level()
        f = sample_cells(lam, 5000, rng)
        assert abs(area_count(lam, f, 0.2) - 0.8) < 0.02

    @pytest.mark.parametrize("q", [0.0, 1.0, -0.1])
    def test_q_range(self, unit, q):
        with pytest.raises(ValidationError):
            area_count(CovariateField.constant(1.0, unit), PointPattern([[0.5, 0.5]], unit), q)

    def test_empty(self, unit):
        with pytest.raises(ValidationError):
            area_count_integral(CovariateField.constant(1.0, unit), PointPattern([], unit))

    def test_curve_monotone(self, unit, rng):
        m = CovariateField(rng.random((9, 9)), unit, "pixel")
        q, ac = area_count_curve(m, PointPattern(rng.random((100, 2)), unit))
        assert ac[0] == 0 and ac[-1] == 1 and np.all(np.diff(ac) >= 0)


class TestAreaCountIntegral:
    def test_constant_map(self, unit, rng):
        m = CovariateField.constant(3.0, unit, 10, 10)
        f = PointPattern(rng.random((4000, 2)), unit)
        assert abs(area_count_integral(m, f) - 0.5) < 0.02

    def test_point_mass_limit(self, unit):
        f = PointPattern([[0.31, 0.47]] * 20, unit)
        vals = []
        for n in (4, 16, 64):
            m = CovariateField.from_function(
                lambda x, y: -np.hypot(x - 0.31, y - 0.47), unit, n, n, "pixel")
            vals.append(area_count_integral(m, f))
        assert vals[0] < vals[1] < vals[2]
        assert vals[2] > 0.99

    def test_matches_auc(self):
        rng = make_rng(6)
        lam = CovariateField.from_function(
            lambda x, y: np.exp(2 * np.sin(4 * x) * np.cos(3 * y)), Window.unit(), 32, 32, "pixel")
        f = sample_conditional_n(LinearPredictor.from_field(lam.map(np.log)), 10_000, rng)
        c = PointPattern(rng.random((10_000, 2)), lam.window)
        assert abs(area_count_integral(lam, f) - auc_2afc(lam, f, c)) < 0.01


class TestMetricReport:
    def test_json(self):
        r = MetricReport(0.75, {0.2: 0.5}, 0.74, 0.26, n_fixations=10, n_controls=20)
        d = json.loads(r.to_json())
        assert d["auc"] == 0.75 and d["area_counts"] == {"0.2": 0.5}
        assert d["one_minus_volume_integral"] == pytest.approx(0.74)
        assert "auc_shuffled" not in d
