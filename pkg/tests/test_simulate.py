import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from fixpp.domain import CovariateField, Grid, Partition, Rect, Window, minmax_scale
from fixpp.errors import NumericError, ValidationError
from fixpp.glm import ModelSpec, Term, fit_mle
from fixpp.intensity import LinearPredictor
from fixpp.simulate import (CoefficientDistribution, fit_coefficient_kde, make_rng,
                            replicate_dataset, sample_conditional_n, sample_homogeneous,
                            sample_predictive, sample_thinning, silverman_bandwidth)


def bump(window, cx=0.5, cy=0.5, s=0.1, n=41):
    return minmax_scale(CovariateField.from_function(
        lambda x, y: np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2 * s * s)), window, n, n))


def chi2_uniform_pvalue(pattern, k=4):
    counts = Partition.regular(pattern.window, k).counts(pattern.xy)
    return stats.chisquare(counts).pvalue


class TestRng:
    def test_reproducible(self):
        a = make_rng(42, 3).random(5)
        b = make_rng(42, 3).random(5)
        np.testing.assert_array_equal(a, b)

    def test_streams_differ(self):
        assert not np.array_equal(make_rng(42, 0).random(5), make_rng(42, 1).random(5))

    def test_seed_range(self):
        make_rng(2**64 - 1)
        with pytest.raises(ValidationError):
            make_rng(-1)
        with pytest.raises(ValidationError):
            make_rng(2**64)


class TestHomogeneous:
    def test_zero_rate(self, unit, rng):
        assert all(len(sample_homogeneous(unit, 0.0, rng)) == 0 for _ in range(20))

    def test_count_moments(self):
        w = Window(0, 5, 0, 2)
        rng = make_rng(1)
        n = np.array([len(sample_homogeneous(w, 5.0, rng)) for _ in range(2000)])
        se = np.sqrt(50 / 2000)
        assert abs(n.mean() - 50) < 4 * se

    def test_halves_uncorrelated(self, unit):
        rng = make_rng(2)
        left = Rect(0, 0.5, 0, 1, closed_right=False)
        counts = []
        for _ in range(2000):
            p = sample_homogeneous(unit, 40.0, rng)
            nl = int(np.count_nonzero(left(p.xy))) if len(p) else 0
            counts.append((nl, len(p) - nl))
        c = np.array(counts)
        assert abs(np.corrcoef(c[:, 0], c[:, 1])[0, 1]) < 0.05

    def test_negative_rate(self, unit, rng):
        with pytest.raises(ValidationError):
            sample_homogeneous(unit, -1.0, rng)


class TestThinning:
    def test_constant_matches_homogeneous(self, unit):
        eta = LinearPredictor.constant(unit, np.log(30.0))
        a = sample_thinning(eta, make_rng(5))
        b = sample_homogeneous(unit, 30.0, make_rng(5))
        np.testing.assert_array_equal(a.xy, b.xy)

    def test_region_law(self, unit):
        eta = LinearPredictor(unit, np.log(60.0), [(1.5, bump(unit, s=0.25))])
        region = Rect(0.2, 0.6, 0.3, 0.8)
        expect = eta.integral_exp(region)
        rng = make_rng(8)
        counts = np.array([int(np.count_nonzero(region(p.xy))) if len(p) else 0
                           for p in (sample_thinning(eta, rng) for _ in range(2000))])
        se = np.sqrt(expect / 2000)
        assert abs(counts.mean() - expect) < 4 * se

    def test_step_ratio(self, unit):
        vals = np.where(np.arange(100) < 50, np.log(10.0), 0.0)[None, :].repeat(2, axis=0)
        # pixel-registered step with a sharp edge at x = 0.5
        f = CovariateField(vals, unit, "pixel")
        eta = LinearPredictor.from_field(f, np.log(20.0))
        rng = make_rng(9)
        left = right = 0
        for _ in range(300):
            p = sample_thinning(eta, rng)
            if len(p):
                left += int(np.count_nonzero(p.x < 0.495))
                right += int(np.count_nonzero(p.x > 0.505))
        np.testing.assert_allclose(left / right, 10.0, rtol=0.1)

    def test_nonfinite_bound(self, unit):
        eta = LinearPredictor.constant(unit, 800.0)
        with pytest.raises(NumericError):
            sample_thinning(eta, make_rng(0))


class TestConditionalN:
    def test_zero(self, unit, rng):
        assert len(sample_conditional_n(LinearPredictor.constant(unit, 0.0), 0, rng)) == 0

    def test_exact_count(self, unit, rng):
        eta = LinearPredictor(unit, 0.0, [(5.0, bump(unit))])
        assert len(sample_conditional_n(eta, 1234, rng)) == 1234

    def test_uniformity(self, unit):
        p = sample_conditional_n(LinearPredictor.constant(unit, 1.3), 10_000, make_rng(10))
        assert chi2_uniform_pvalue(p) > 0.001

    @settings(max_examples=20, deadline=None)
    @given(c=st.floats(-50, 50), seed=st.integers(0, 2**32 - 1))
    def test_shift_invariance_bit_exact(self, c, seed):
        w = Window(0.0, 1.0, 0.0, 1.0)
        eta = LinearPredictor(w, 0.4, [(3.0, bump(w, 0.3, 0.6, 0.2, 17))])
        a = sample_conditional_n(eta, 300, make_rng(seed))
        b = sample_conditional_n(eta.shifted(c), 300, make_rng(seed))
        assert a.xy.tobytes() == b.xy.tobytes()

    def test_exchangeable_statistics(self, unit):
        p = sample_conditional_n(LinearPredictor(unit, 0.0, [(2.0, bump(unit))]), 200, make_rng(4))
        perm = make_rng(5).permutation(200)
        q = p.with_points(p.xy[perm])
        np.testing.assert_allclose(np.sort(p.x), np.sort(q.x))
        np.testing.assert_allclose(p.xy.mean(axis=0), q.xy.mean(axis=0), rtol=1e-14)

    def test_negative_n(self, unit, rng):
        with pytest.raises(ValidationError):
            sample_conditional_n(LinearPredictor.constant(unit, 0.0), -1, rng)


class TestKDE:
    def test_too_few(self):
        with pytest.raises(ValidationError):
            fit_coefficient_kde([1.0])

    def test_degenerate_support(self, rng):
        with pytest.warns(RuntimeWarning):
            kde = fit_coefficient_kde([2.0, 2.0, 2.0])
        draws = kde.sample(rng, 1000)
        assert np.all(np.abs(draws - 2.0) < 10 * kde.bandwidth)

    def test_density_integrates(self, rng):
        kde = fit_coefficient_kde(rng.normal(1.0, 0.5, size=40))
        total, _ = integrate.quad(kde.pdf, -10, 12, limit=200)
        np.testing.assert_allclose(total, 1.0, atol=1e-3)

    def test_mean_identity(self):
        est = make_rng(3).gamma(2.0, 1.0, size=25)
        kde = fit_coefficient_kde(est)
        draws = kde.sample(make_rng(4), 10_000)
        se = np.sqrt(np.var(est) + kde.bandwidth**2) / 100
        assert abs(draws.mean() - est.mean()) < 4 * se

    def test_silverman(self):
        v = np.array([0.0, 1.0, 2.0, 3.0, 10.0])
        sd = np.std(v, ddof=1)
        iqr = 3.0 - 1.0
        np.testing.assert_allclose(silverman_bandwidth(v), 0.9 * min(sd, iqr / 1.34) * 5 ** -0.2)

    def test_override(self):
        assert fit_coefficient_kde([1.0, 2.0], bandwidth=0.3).bandwidth == 0.3
        with pytest.raises(ValidationError):
            fit_coefficient_kde([1.0, 2.0], bandwidth=0.0)


class TestPredictive:
    def test_zero_beta_uniform(self, unit):
        p = sample_predictive(bump(unit), CoefficientDistribution.point_mass(0.0), 8000, make_rng(1))
        assert chi2_uniform_pvalue(p) > 0.001

    def test_point_mass_equals_conditional(self, unit):
        m = bump(unit)
        a = sample_predictive(m, CoefficientDistribution.point_mass(2.5), 500, make_rng(3))
        b = sample_conditional_n(LinearPredictor(unit, 0.0, [(2.5, m)]), 500, make_rng(3))
        assert a.xy.tobytes() == b.xy.tobytes()

    def test_large_beta_concentrates(self, unit):
        m = bump(unit, s=0.08)
        p = sample_predictive(m, CoefficientDistribution.point_mass(12.0), 2000, make_rng(2))
        # top contour m >= 0.5 holds nearly all the mass of exp(12 m)
        g = Grid(unit, 200)
        dens = np.exp(12.0 * m(g.nodes))
        expected = dens[m(g.nodes) >= 0.5].sum() / dens.sum()
        inside = np.mean(m(p.xy) >= 0.5)
        assert expected > 0.95
        assert inside > expected - 4 * np.sqrt(expected * (1 - expected) / 2000)

    def test_bias_avoids_borders(self, unit):
        g = CovariateField.from_function(
            lambda x, y: 2.0 * np.exp(-((x - 0.5) ** 2 + (y - 0.5) ** 2) / (2 * 0.2**2)), unit, 33, 33)
        kde = fit_coefficient_kde([0.0, 3.0, 6.0])
        rng = make_rng(6)
        pooled = []
        for k in range(20):
            m = bump(unit, *rng.uniform(0.1, 0.9, size=2), s=0.12)
            pooled.append(sample_predictive(m, kde, 200, rng, bias=g).xy)
        xy = np.vstack(pooled)
        border = np.mean((xy.min(axis=1) < 0.1) | (xy.max(axis=1) > 0.9))
        assert border < 1 - 0.8**2

    def test_n_positive(self, unit, rng):
        with pytest.raises(ValidationError):
            sample_predictive(bump(unit), CoefficientDistribution.point_mass(1.0), 0, rng)


class TestReplicate:
    def _fit(self, unit):
        m = bump(unit, s=0.2)
        rng = make_rng(12)
        pats = [sample_conditional_n(LinearPredictor(unit, 0.0, [(2.0, m)]), 150, rng, f"p{i}")
                for i in range(3)]
        spec = ModelSpec([Term("alpha", intercept=True), Term("beta", "m", scope="shared")])
        return fit_mle(spec, pats, {"m": m}), pats, {"m": m}

    def test_single_pattern(self, unit):
        fit, pats, covs = self._fit(unit)
        one = fit_mle(fit.spec, pats[:1], covs)
        rep = replicate_dataset(one, pats[:1], covs, make_rng(4))[0]
        ref = sample_conditional_n(one.predictor(pats[0], covs), len(pats[0]), make_rng(4))
        assert rep.xy.tobytes() == ref.xy.tobytes()

    def test_determinism(self, unit):
        fit, pats, covs = self._fit(unit)
        a = replicate_dataset(fit, pats, covs, make_rng(1, 0))
        b = replicate_dataset(fit, pats, covs, make_rng(1, 0))
        c = replicate_dataset(fit, pats, covs, make_rng(1, 1))
        assert all(x.xy.tobytes() == y.xy.tobytes() for x, y in zip(a, b))
        assert any(x.xy.tobytes() != y.xy.tobytes() for x, y in zip(a, c))
        assert [len(x) for x in a] == [len(p) for p in pats]
        assert [x.group_id for x in a] == [p.group_id for p in pats]

    def test_no_bias_fit_has_flat_margins(self, unit):
        rng = make_rng(21)
        center = CovariateField.from_function(
            lambda x, y: 2.0 * np.exp(-((x - 0.5) ** 2 + (y - 0.5) ** 2) / (2 * 0.15**2)), unit, 33, 33)
        maps, pats = {}, []
        for i in range(8):
            m = bump(unit, *rng.uniform(0.15, 0.85, size=2), s=0.12)
            maps[f"p{i}"] = m
            eta = LinearPredictor(unit, 0.0, [(1.0, m), (1.0, center)])
            pats.append(sample_conditional_n(eta, 400, rng, f"p{i}"))
        spec = ModelSpec([Term("alpha", intercept=True), Term("beta", "m", scope="shared")])
        fit = fit_mle(spec, pats, {"m": maps})
        rep = replicate_dataset(fit, pats, {"m": maps}, rng)
        central = lambda xy: np.mean(np.abs(xy[:, 0] - 0.5) < 0.2)
        data_c = central(np.vstack([p.xy for p in pats]))
        rep_c = central(np.vstack([p.xy for p in rep]))
        assert data_c > rep_c + 0.05
