import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from scipy import special
from scipy import stats as sps

from asisim.stats import betainc, cohens_d_from_eta, f_sf, one_way_anova


@pytest.mark.parametrize("a,b,x", [(0.5, 0.5, 0.3), (1, 1, 0.42), (2.5, 7.0, 0.1), (1098.5, 1.0, 0.97),
                                   (346.5, 3.0, 0.5), (30, 40, 0.9), (1e-3, 2, 0.5)])
def test_betainc_matches_reference(a, b, x):
    assert betainc(a, b, x) == pytest.approx(special.betainc(a, b, x), rel=1e-10, abs=1e-14)


def test_betainc_closed_forms():
    # I_x(1, 1) = x and I_x(a, 1) = x^a
    for x in np.linspace(0.01, 0.99, 9):
        assert betainc(1, 1, x) == pytest.approx(x, abs=1e-14)
        assert betainc(3.5, 1, x) == pytest.approx(x**3.5, rel=1e-12)
    assert betainc(2, 3, 0.0) == 0.0 and betainc(2, 3, 1.0) == 1.0


@pytest.mark.parametrize("F,d1,d2", [(27.796, 2, 2197), (3.1, 6, 693), (0.2, 14, 1485), (1.0, 1, 1),
                                     (4.0, 2, 4), (150.0, 2, 2197), (0.01, 5, 50)])
def test_f_tail_matches_reference(F, d1, d2):
    assert f_sf(F, d1, d2) == pytest.approx(sps.f.sf(F, d1, d2), rel=1e-10, abs=1e-300)


def test_f_tail_closed_form():
    # F(2, 2k) has survival (1 + F/k)^-k
    for F in (0.3, 1.0, 5.0):
        assert f_sf(F, 2, 8) == pytest.approx((1 + F / 4) ** -4, rel=1e-12)
    assert f_sf(0.0, 3, 9) == 1.0 and f_sf(math.inf, 3, 9) == 0.0


def test_two_groups_equal_squared_t():
    a = [12.1, 14.3, 9.8, 11.0, 13.7, 10.4, 12.9]
    b = [15.2, 13.9, 16.8, 14.1, 17.3, 15.5]
    t = sps.ttest_ind(a, b, equal_var=True)
    r = one_way_anova([a, b])
    assert r.F == pytest.approx(t.statistic**2, rel=1e-12)
    assert r.p == pytest.approx(t.pvalue, rel=1e-9)
    assert (r.df_between, r.df_within) == (1, 11)


def test_against_scipy_f_oneway():
    rng = np.random.default_rng(0)
    groups = [rng.normal(m, 2, n) for m, n in ((0, 30), (0.5, 25), (1.2, 40), (0.3, 33))]
    r = one_way_anova(groups)
    ref = sps.f_oneway(*groups)
    assert r.F == pytest.approx(ref.statistic, rel=1e-12)
    assert r.p == pytest.approx(ref.pvalue, rel=1e-9)


@pytest.mark.parametrize("eta,d", [(0.139, 0.804), (0.025, 0.320)])
def test_reported_effect_size_pairs(eta, d):
    assert round(cohens_d_from_eta(eta), 3) == d


def test_degenerate_inputs():
    r = one_way_anova([[1.0, 1.0], [2.0, 2.0]])
    assert r.degenerate and r.p == 0.0 and r.F == math.inf
    r = one_way_anova([[3.0, 3.0, 3.0], [3.0, 3.0]])
    assert r.degenerate and math.isnan(r.F)
    with pytest.raises(ValueError, match="2 groups"):
        one_way_anova([[1.0, 2.0]])
    with pytest.raises(ValueError, match="2 samples"):
        one_way_anova([[1.0, 2.0], [3.0]])
    with pytest.raises(ValueError):
        cohens_d_from_eta(1.0)


def test_equal_mean_groups_have_uniform_p():
    rng = np.random.default_rng(1)
    ps = [one_way_anova([rng.normal(size=20) for _ in range(3)]).p for _ in range(400)]
    assert sps.kstest(ps, "uniform").pvalue > 0.001


samples = st.lists(st.floats(-100, 100, allow_nan=False), min_size=2, max_size=15)


def _spread(groups):
    x = np.concatenate([np.asarray(g) for g in groups])
    return sum(np.var(g) * len(g) for g in groups) > 1e-6 * max(1.0, np.abs(x).max()) ** 2


@settings(max_examples=80, deadline=None)
@given(st.lists(samples, min_size=2, max_size=5), st.floats(1e-3, 1e3))
def test_scale_invariance(groups, c):
    assume(_spread(groups))
    r = one_way_anova(groups)
    s = one_way_anova([[c * x for x in g] for g in groups])
    assert s.F == pytest.approx(r.F, rel=1e-7, abs=1e-9)
    assert s.p == pytest.approx(r.p, rel=1e-6, abs=1e-12)
    assert s.eta_p_sq == pytest.approx(r.eta_p_sq, rel=1e-7, abs=1e-12)
    assert s.d == pytest.approx(r.d, rel=1e-7, abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(samples, st.integers(2, 6))
def test_identical_copies_give_null(group, k):
    assume(np.var(group) > 1e-6)
    r = one_way_anova([list(group)] * k)
    assert r.F == pytest.approx(0.0, abs=1e-12)
    assert r.p == pytest.approx(1.0, abs=1e-9)
    assert r.d == pytest.approx(0.0, abs=1e-5)


@settings(max_examples=60, deadline=None)
@given(samples, samples, st.floats(0.1, 50))
def test_eta_grows_with_between_spread(a, b, shift):
    """Shifting one group away from the other raises SS_between with SS_within fixed."""
    assume(_spread([a, b]))
    ma, mb = np.mean(a), np.mean(b)
    sign = 1.0 if mb >= ma else -1.0
    r1 = one_way_anova([a, b])
    r2 = one_way_anova([a, [x + sign * shift for x in b]])
    assert r2.ss_within == pytest.approx(r1.ss_within, rel=1e-9, abs=1e-9)
    assert r2.eta_p_sq > r1.eta_p_sq


@given(st.floats(0, 0.99), st.floats(0, 0.99))
def test_d_monotone(e1, e2):
    assume(e1 < e2)
    assert cohens_d_from_eta(e1) < cohens_d_from_eta(e2)
    assert cohens_d_from_eta(0.0) == 0.0


@settings(max_examples=50, deadline=None)
@given(st.lists(samples, min_size=2, max_size=5))
def test_result_ranges(groups):
    assume(_spread(groups))
    r = one_way_anova(groups)
    assert r.F >= 0 and 0 <= r.p <= 1 and 0 <= r.eta_p_sq < 1 and r.d >= 0
