import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from sklearn.base import clone

from spinsqueeze import (
    ConditionalEstimator,
    DegenerateInputError,
    InvalidArgumentError,
    QuadraticNoiseRegressor,
    chi_estimator,
    conditional_variance,
    entanglement_witness,
    quadratic_noise_fit,
    squeezing_report,
    wineland_xi2,
)
from spinsqueeze.estimators import db, db_inv, variance_estimate

samples = arrays(np.float64, st.integers(5, 60), elements=st.floats(-1e3, 1e3))


class TestChi:
    def test_identical_streams(self, rng):
        x = rng.normal(size=100)
        assert chi_estimator(x, x) == pytest.approx(1.0)

    def test_independent_streams(self, rng):
        n = 20000
        assert abs(chi_estimator(rng.normal(size=n), rng.normal(size=n))) < 3 / math.sqrt(n)

    def test_half_gain(self, rng):
        n = 40000
        x = rng.normal(size=n)
        y = 0.5 * x + rng.normal(size=n)
        assert chi_estimator(x, y) == pytest.approx(0.5, abs=3 / math.sqrt(n))

    @pytest.mark.parametrize("x, y", [([1.0, 2.0], [1.0, 2.0]), ([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])])
    def test_degenerate(self, x, y):
        with pytest.raises(DegenerateInputError):
            chi_estimator(x, y)

    def test_length_mismatch(self):
        with pytest.raises(DegenerateInputError):
            chi_estimator([1.0, 2.0, 3.0], [1.0, 2.0])

    @given(samples, st.floats(-1e4, 1e4))
    def test_offset_invariance(self, x, c):
        assume(np.var(x) > 1e-3)
        y = np.roll(x, 1) + 0.3 * x
        assert chi_estimator(x + c, y + c) == pytest.approx(chi_estimator(x, y), rel=1e-6, abs=1e-9)


class TestConditionalVariance:
    def test_identical_streams(self, rng):
        x = rng.normal(size=100)
        assert conditional_variance(x, x).value == pytest.approx(0.0, abs=1e-12)

    def test_independent_streams(self, rng):
        n = 20000
        est = conditional_variance(rng.normal(0, 2, n), rng.normal(0, 2, n))
        assert abs(est.value - 4.0) < 3 * est.stderr

    def test_not_clamped(self, rng):
        x = rng.normal(size=50)
        assert conditional_variance(x, x, var_readout=1.0).value < 0

    def test_negative_readout_rejected(self, rng):
        with pytest.raises(InvalidArgumentError):
            conditional_variance(rng.normal(size=10), rng.normal(size=10), -1.0)

    @settings(max_examples=60)
    @given(samples, st.floats(0, 10))
    def test_correlation_identity(self, x, ro):
        assume(np.var(x) > 1e-3)
        y = np.sin(x) * 40 + 0.7 * x
        assume(np.var(y) > 1e-3)
        rho = np.corrcoef(x, y)[0, 1]
        expect = np.var(y, ddof=1) * (1 - rho**2) - ro
        assert conditional_variance(x, y, ro).value == pytest.approx(expect, rel=1e-9, abs=1e-9 * np.var(y))


class TestEstimatorApi:
    def test_fit_predict(self, rng):
        x = rng.normal(0, 10, 500)
        y = 3.0 + 0.5 * x + rng.normal(0, 1, 500)
        est = ConditionalEstimator(var_readout=0.2).fit(x, y)
        assert est.chi_ == pytest.approx(0.5, abs=0.02)
        assert est.predict([0.0])[0] == pytest.approx(est.intercept_)
        assert est.var_conditional_ == pytest.approx(conditional_variance(x, y, 0.2).value)
        assert est.get_params() == {"var_readout": 0.2}
        assert clone(est).get_params() == {"var_readout": 0.2}

    def test_regressor_matches_function(self):
        tx = np.array([1e4, 5e4, 1e5, 3e5])
        var = 0.44 * tx + 0.01 * tx**2 / 1e5
        model = QuadraticNoiseRegressor(tx_unit=1e5).fit(tx, var)
        assert model.coef_ == pytest.approx([0.44, 0.01], rel=1e-9)
        assert model.predict(tx) == pytest.approx(var, rel=1e-12)
        assert model.score(tx, var) == pytest.approx(1.0)


class TestQuadraticFit:
    def test_projection_line(self):
        tx = [1e4, 1e5, 3e5]
        fit = quadratic_noise_fit(tx, [0.5 * t for t in tx])
        assert fit.a1 == pytest.approx(0.5, rel=1e-12)
        assert fit.a2 == pytest.approx(0.0, abs=1e-15)

    def test_planted_coefficients(self):
        tx = np.array([1e4, 1e5, 3e5])
        fit = quadratic_noise_fit(tx, 0.44 * tx + 0.01 * tx**2)
        assert fit.a1 == pytest.approx(0.44, abs=1e-9)
        assert fit.a2 == pytest.approx(0.01, abs=1e-9)

    def test_weighted_errors_scale(self):
        tx = np.array([1e4, 1e5, 2e5, 3e5])
        var = 0.5 * tx
        f1 = quadratic_noise_fit(tx, var, np.full(4, 100.0))
        f2 = quadratic_noise_fit(tx, var, np.full(4, 200.0))
        assert f2.a1_err == pytest.approx(2 * f1.a1_err)

    def test_unit_rescaling(self):
        tx = np.array([2e4, 1e5, 3e5])
        var = 0.5 * tx + 0.02 * tx**2 / 1e5
        fit = quadratic_noise_fit(tx, var, tx_unit=1e5)
        assert (fit.a1, fit.a2) == pytest.approx((0.5, 0.02), rel=1e-9)
        assert fit.predict(tx) == pytest.approx(var)

    @pytest.mark.parametrize(
        "tx, var",
        [([1e4, 1e5], [1.0, 2.0]), ([1e4, 1e4, 1e5], [1.0, 1.0, 2.0]), ([-1e4, 1e5, 2e5], [1.0, 2.0, 3.0])],
    )
    def test_degenerate(self, tx, var):
        with pytest.raises(DegenerateInputError):
            quadratic_noise_fit(tx, var)

    @settings(max_examples=50)
    @given(st.floats(-1, 1), st.floats(-0.1, 0.1), st.lists(st.floats(1e3, 1e6), min_size=3, max_size=12, unique=True))
    def test_exact_on_model_family(self, a1, a2, tx):
        tx = np.array(tx)
        assume(np.ptp(tx) > 1e2)
        fit = quadratic_noise_fit(tx, a1 * tx + a2 * tx**2 / 1e5, tx_unit=1e5)
        assert fit.a1 == pytest.approx(a1, abs=1e-6)
        assert fit.a2 == pytest.approx(a2, abs=1e-6)


class TestWineland:
    def test_reference_value(self):
        xi2 = wineland_xi2(10**-0.32, 1.0, 0.876)
        assert xi2 == pytest.approx(0.624, abs=1e-3)
        assert db(xi2) == pytest.approx(-2.0, abs=0.1)

    def test_css_boundary(self):
        assert wineland_xi2(3.0, 3.0, 1.0) == 1.0

    def test_vanishing_contrast(self):
        assert wineland_xi2(1.0, 2.0, 1e-6) > 1e10

    @pytest.mark.parametrize("args", [(0.0, 1.0, 0.5), (1.0, -1.0, 0.5), (1.0, 1.0, 0.0), (1.0, 1.0, 1.2)])
    def test_invalid(self, args):
        with pytest.raises(InvalidArgumentError):
            wineland_xi2(*args)

    @given(st.floats(0.01, 10), st.floats(0.01, 10), st.floats(0.05, 1.0), st.floats(0.05, 1.0))
    def test_monotone(self, v1, v2, c1, c2):
        lo, hi = sorted((v1, v2))
        assert wineland_xi2(lo, 1.0, c1) <= wineland_xi2(hi, 1.0, c1)
        clo, chi = sorted((c1, c2))
        assert wineland_xi2(v1, 1.0, chi) <= wineland_xi2(v1, 1.0, clo)


class TestWitness:
    def test_measured_values(self):
        assert entanglement_witness(-3.2, 0.876)

    def test_css(self):
        assert not entanglement_witness(0.0, 1.0)

    def test_low_contrast(self):
        assert not entanglement_witness(-3.2, 0.5)


class TestDb:
    def test_values(self):
        assert db(1.0) == 0.0
        assert db(0.479) == pytest.approx(-3.20, abs=5e-3)

    @pytest.mark.parametrize("bad", [0.0, -1.0])
    def test_invalid(self, bad):
        with pytest.raises(InvalidArgumentError):
            db(bad)

    @given(st.floats(1e-6, 1e6))
    def test_roundtrip(self, x):
        assert db_inv(db(x)) == pytest.approx(x, rel=1e-12)


class TestVarianceEstimate:
    def test_gaussian_error(self, rng):
        x = rng.normal(size=101)
        est = variance_estimate(x)
        assert est.stderr == pytest.approx(est.value * math.sqrt(2 / 100))

    def test_bootstrap_needs_seed(self, rng):
        with pytest.raises(InvalidArgumentError):
            variance_estimate(rng.normal(size=50), "bootstrap")

    def test_bootstrap_deterministic(self, rng):
        x = rng.normal(size=500)
        a = variance_estimate(x, "bootstrap", random_state=3)
        assert a == variance_estimate(x, "bootstrap", random_state=3)
        assert a.stderr == pytest.approx(variance_estimate(x).stderr, rel=0.3)


class TestReport:
    def test_strongly_correlated(self, rng):
        x = rng.normal(0, 100, 2000)
        y = x + rng.normal(0, 30, 2000)
        r = squeezing_report(x, y, 0.0, 2 * 100**2, 0.9)
        assert r.var_conditional <= r.var_phi2
        assert r.entanglement_witness
        assert r.noise_reduction_db < 0

    def test_deterministic(self, rng):
        x = rng.normal(size=300)
        y = x + rng.normal(size=300)
        assert squeezing_report(x, y, 0.1, 2.0, 0.9) == squeezing_report(x.copy(), y.copy(), 0.1, 2.0, 0.9)
