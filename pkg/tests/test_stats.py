"""Sharpe ratio, Student-t distribution functions and Welch's t-test."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from hpsmp.stats import (critical_value, p_value, sharpe, t_cdf, t_quantile, t_sf, t_test,
                         welch_df)


class TestSharpe:
    def test_examples(self):
        assert sharpe([0.01, -0.01]) == 0.0
        assert sharpe([0.02, 0.04, 0.00]) == pytest.approx(1.0, rel=1e-12)

    def test_undefined(self):
        assert sharpe([0.01, 0.01, 0.01]) is None
        assert sharpe([0.01]) is None

    def test_risk_free(self):
        assert sharpe([0.03, 0.05, 0.01], risk_free=0.01) == pytest.approx(1.0, rel=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(-1, 1), min_size=2, max_size=20), st.floats(0.01, 100))
    def test_scale_invariance(self, r, k):
        base = sharpe(r)
        if base is None or np.std(r) < 1e-6:
            return
        assert sharpe([k * x for x in r]) == pytest.approx(base, rel=1e-9, abs=1e-12)


class TestDistribution:
    @pytest.mark.parametrize("t, df", [(0.3, 3), (1.5, 14), (-2.0, 7.5), (3.0526, 14), (4.0, 30)])
    def test_cdf_matches_quadrature(self, t, df):
        assert t_cdf(t, df) == pytest.approx(oracles.t_cdf_quadrature(t, df), abs=1e-10)

    @settings(max_examples=60, deadline=None)
    @given(st.floats(-20, 20), st.floats(0.5, 200))
    def test_cdf_sf_complement_and_symmetry(self, t, df):
        assert t_cdf(t, df) + t_sf(t, df) == pytest.approx(1.0, abs=1e-14)
        assert t_cdf(-t, df) == pytest.approx(t_sf(t, df), abs=1e-14)

    @settings(max_examples=60, deadline=None)
    @given(st.floats(0.001, 0.999), st.floats(1, 100))
    def test_quantile_inverts_cdf(self, q, df):
        assert t_cdf(t_quantile(q, df), df) == pytest.approx(q, abs=1e-12)

    def test_critical_value_at_fourteen_df(self):
        assert critical_value(0.05, 14) == pytest.approx(2.145, abs=1e-3)
        assert critical_value(0.05, 14) == pytest.approx(oracles.t_quantile_bisect(0.975, 14), abs=1e-6)
        assert critical_value(0.05, 14, two_sided=False) == pytest.approx(1.761, abs=1e-3)

    def test_quantile_domain(self):
        with pytest.raises(ValueError):
            t_quantile(1.0, 5)


class TestTTest:
    def test_reference_pair_is_one_sided_at_fourteen_df(self):
        # t = 3.0526 at df 14 gives p = 0.004303 as a one-sided upper tail
        assert p_value(3.0526, 14, "greater") == pytest.approx(0.004303, abs=5e-6)
        assert p_value(3.0526, 14, "greater") == pytest.approx(
            1 - oracles.t_cdf_quadrature(3.0526, 14), abs=1e-10)
        assert p_value(3.0526, 14) == pytest.approx(2 * 0.004303, abs=1e-5)

    def test_identical_series(self):
        r = t_test([0.01, 0.03, -0.02, 0.05], [0.01, 0.03, -0.02, 0.05])
        assert r.t_value == 0.0 and r.p_value == pytest.approx(1.0) and not r.reject_at_95

    def test_zero_variance_undefined(self):
        r = t_test([0.01, 0.01], [0.01, 0.01])
        assert not r.defined and r.p_value is None and not r.reject_at_95

    def test_alternatives(self):
        a, b = [0.05, 0.06, 0.07, 0.04, 0.05], [0.0, 0.01, -0.01, 0.02, 0.0]
        two, gt, lt = (t_test(a, b, alt) for alt in ("two-sided", "greater", "less"))
        assert gt.p_value == pytest.approx(two.p_value / 2, rel=1e-12)
        assert gt.p_value + lt.p_value == pytest.approx(1.0, abs=1e-14)
        assert two.reject_at_95
        with pytest.raises(ValueError):
            t_test(a, b, "sideways")

    def test_welch_oracle(self):
        rng = np.random.default_rng(0)
        a, b = rng.normal(0.1, 1, 12), rng.normal(0.0, 2, 9)
        va, vb = a.var(ddof=1), b.var(ddof=1)
        t = (a.mean() - b.mean()) / np.sqrt(va / 12 + vb / 9)
        df = (va / 12 + vb / 9) ** 2 / ((va / 12) ** 2 / 11 + (vb / 9) ** 2 / 8)
        r = t_test(a, b)
        assert r.t_value == pytest.approx(t, rel=1e-12) and r.df == pytest.approx(df, rel=1e-12)
        assert welch_df(va, 12, vb, 9) == pytest.approx(df, rel=1e-12)
        assert r.p_value == pytest.approx(2 * (1 - oracles.t_cdf_quadrature(abs(t), df)), abs=1e-9)

    def test_too_few_samples(self):
        with pytest.raises(ValueError):
            t_test([1.0], [1.0, 2.0])
