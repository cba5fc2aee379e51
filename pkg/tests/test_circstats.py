import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import trapezoid

from labelrefine.circstats import (
    KAPPA_MAX,
    TWO_PI,
    WATSON_CRITICAL_001,
    CircularStatsError,
    bessel_i0,
    bessel_ratio,
    circular_cut,
    circular_dip,
    dip_test,
    estimate_kappa,
    mean_resultant,
    rao_critical_value,
    rao_spacing_statistic,
    rao_spacing_test,
    von_mises_cdf,
    von_mises_pdf,
    watson_u2,
    watson_u2_test,
    watson_u2_von_mises_test,
)

angles = st.floats(0, TWO_PI, exclude_max=True, allow_nan=False)


def i0_series(x, terms=400):
    # sum_m (x/2)^{2m} / (m!)^2, accumulated in log space
    logs = [2 * m * math.log(x / 2) - 2 * math.lgamma(m + 1) for m in range(terms)] if x > 0 else [0.0]
    top = max(logs)
    return math.exp(top) * sum(math.exp(v - top) for v in logs)


# ---------------------------------------------------------------- descriptive


def test_mean_resultant_simple():
    mu, r = mean_resultant([0.0, math.pi / 2])
    assert mu == pytest.approx(math.pi / 4)
    assert r == pytest.approx(math.sqrt(2) / 2)


def test_mean_resultant_balanced_is_undefined():
    mu, r = mean_resultant([0.0, math.pi])
    assert math.isnan(mu) and r == 0.0


# ---------------------------------------------------------------- Bessel / von Mises


@pytest.mark.parametrize("x", [0.0, 1e-6, 0.5, 1.0, 3.7, 10.0, 50.0, 200.0])
def test_i0_against_power_series(x):
    assert bessel_i0(x) == pytest.approx(i0_series(x), rel=1e-12)


def test_i0_known_value():
    # tabulated: I0(1) = 1.2660658777520082
    assert bessel_i0(1.0) == pytest.approx(1.2660658777520082, rel=1e-15)


def test_i0_domain():
    with pytest.raises(CircularStatsError):
        bessel_i0(-1.0)
    with pytest.raises(CircularStatsError):
        bessel_i0(KAPPA_MAX + 1)
    assert math.isfinite(bessel_i0(KAPPA_MAX))


@pytest.mark.parametrize("kappa", [0.0, 0.3, 2.0, 20.0, 300.0, KAPPA_MAX])
@pytest.mark.parametrize("mu", [0.0, 1.0, 6.0])
def test_pdf_integrates_to_one(mu, kappa):
    grid = np.linspace(0, TWO_PI, 400_001)
    f = von_mises_pdf(grid, mu, kappa)
    assert np.all(np.isfinite(f)) and np.all(f >= 0)
    assert trapezoid(f, grid) == pytest.approx(1.0, abs=1e-9)


def test_pdf_definition_moderate_kappa():
    theta, mu, kappa = 1.3, 0.4, 2.5
    direct = math.exp(kappa * math.cos(theta - mu)) / (TWO_PI * i0_series(kappa))
    assert von_mises_pdf(theta, mu, kappa) == pytest.approx(direct, rel=1e-12)


@pytest.mark.parametrize("mu, kappa", [(0.0, 1.0), (2.0, 5.0), (5.5, 40.0), (3.0, 0.0)])
def test_cdf_against_dense_quadrature(mu, kappa):
    grid = np.linspace(0, TWO_PI, 2_000_001)
    f = von_mises_pdf(grid, mu, kappa)
    cum = np.concatenate([[0.0], np.cumsum((f[1:] + f[:-1]) / 2 * np.diff(grid))])
    q = np.array([0.0, 0.7, 1.9, 3.14, 4.0, 6.2, TWO_PI])
    expect = np.interp(q, grid, cum)
    assert von_mises_cdf(q, mu, kappa) == pytest.approx(expect, abs=1e-9)


def test_cdf_monotone_and_bounded():
    q = np.sort(np.random.default_rng(0).uniform(0, TWO_PI, 200))
    c = von_mises_cdf(q, 1.0, 3.0)
    assert np.all(np.diff(c) >= 0) and 0 <= c[0] and c[-1] <= 1
    assert von_mises_cdf(TWO_PI, 1.0, 3.0) == pytest.approx(1.0, abs=1e-10)


@settings(max_examples=100, deadline=None)
@given(st.floats(1e-4, 0.9995))
def test_kappa_estimate_inverts_ratio(r):
    k = estimate_kappa(r)
    if k < KAPPA_MAX:
        assert float(bessel_ratio(k)) == pytest.approx(r, abs=1e-9)


def test_kappa_estimate_edges():
    assert estimate_kappa(0.0) == 0.0
    assert estimate_kappa(1.0) == KAPPA_MAX


# ---------------------------------------------------------------- Rao


def rao_direct(a):
    """Textbook form: sum over spacings, no vectorisation."""
    d = sorted(math.degrees(x) for x in a)
    n = len(d)
    total = 0.0
    for i in range(n):
        t = (d[i + 1] - d[i]) if i < n - 1 else (360.0 - d[-1] + d[0])
        total += abs(t - 360.0 / n)
    return total / 2


def test_rao_even_spacing_is_zero():
    a = np.arange(12) * TWO_PI / 12
    assert rao_spacing_statistic(a) == pytest.approx(0.0, abs=1e-9)


def test_rao_all_equal_is_maximal():
    n = 10
    assert rao_spacing_statistic([1.0] * n) == pytest.approx(360 * (1 - 1 / n), abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(st.lists(angles, min_size=2, max_size=50), angles)
def test_rao_direct_and_rotation(a, shift):
    u = rao_spacing_statistic(a)
    assert u == pytest.approx(rao_direct(a), abs=1e-9)
    assert rao_spacing_statistic(np.asarray(a) + shift) == pytest.approx(u, abs=1e-7)
    assert 0 <= u <= 360 * (1 - 1 / len(a)) + 1e-9


@pytest.mark.parametrize("n", [4, 12, 100])
def test_rao_null_mean(n):
    # E[U] = 360 (1 - 1/n)^n under uniformity
    from labelrefine.circstats import _rao_null_sorted

    null = _rao_null_sorted(n, 100_000, 20170101)
    assert null.mean() == pytest.approx(360 * (1 - 1 / n) ** n, rel=2e-3)


def test_rao_critical_value_n100():
    # published table: 152.5 at n = 100, alpha = 0.01
    assert rao_critical_value(100) == pytest.approx(152.5, abs=1.0)


def test_rao_decisions():
    rng = np.random.default_rng(3)
    clustered = np.concatenate([rng.vonmises(1.0, 8, 60), rng.vonmises(4.0, 8, 60)])
    assert rao_spacing_test(clustered).reject_null
    rejections = sum(rao_spacing_test(rng.uniform(0, TWO_PI, 80)).reject_null for _ in range(100))
    assert rejections <= 5


def test_rao_small_n():
    with pytest.raises(CircularStatsError):
        rao_spacing_test([0.1, 0.2, 0.3])
    with pytest.raises(CircularStatsError):
        rao_spacing_test(np.arange(10), alpha=0.0)


# ---------------------------------------------------------------- dip


def test_circular_cut_starts_after_largest_gap():
    a = [6.0, 6.2, 0.1, 0.3, 3.0]
    cut = circular_cut(a)
    assert cut[0] == 0.0
    assert np.all(np.diff(cut) >= 0)
    # largest gap is 3.0 -> 6.0 (width 3.0), so 6.0 comes first
    assert cut == pytest.approx([0.0, 0.2, 2 * math.pi - 6.0 + 0.1, 2 * math.pi - 6.0 + 0.3, 2 * math.pi - 3.0])


@settings(max_examples=50, deadline=None)
@given(st.lists(angles, min_size=4, max_size=40, unique=True), angles)
def test_circular_dip_rotation_invariant(a, shift):
    d = circular_dip(a)
    assert circular_dip(np.asarray(a) + shift) == pytest.approx(d, abs=1e-7)


def test_dip_decisions():
    rng = np.random.default_rng(7)
    uni = rng.vonmises(2.0, 4.0, 150)
    bi = np.concatenate([rng.vonmises(1.0, 10, 100), rng.vonmises(4.0, 10, 100)])
    r_uni, r_bi = dip_test(uni), dip_test(bi)
    assert not r_uni.reject_null and r_uni.p_value > 0.01
    assert r_bi.reject_null and r_bi.p_value < 0.01
    assert r_bi.critical_value is None


def test_dip_false_rejection_rate():
    rng = np.random.default_rng(11)
    hits = sum(dip_test(rng.vonmises(0.0, 2.0, 100)).reject_null for _ in range(100))
    assert hits <= 4


def test_dip_constant_sample():
    r = dip_test([1.0] * 10)
    assert r.statistic == 0.0 and r.p_value == 1.0 and not r.reject_null


# ---------------------------------------------------------------- Watson


def watson_integral(u, grid_size=200_001):
    """n * int_0^1 (F_n(x) - x - c)^2 dx with c the mean discrepancy."""
    u = np.sort(np.asarray(u))
    x = np.linspace(0, 1, grid_size)
    d = np.searchsorted(u, x, side="right") / u.size - x
    c = trapezoid(d, x)
    return u.size * trapezoid((d - c) ** 2, x)


def test_watson_perfect_fit_n4():
    assert watson_u2([1 / 8, 3 / 8, 5 / 8, 7 / 8]) == pytest.approx(1 / 48, abs=1e-15)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.001, 0.999), min_size=4, max_size=30))
def test_watson_formula_matches_integral(u):
    assert watson_u2(u) == pytest.approx(watson_integral(u), abs=2e-4)


def test_watson_shift_invariance():
    u = np.random.default_rng(0).uniform(size=50)
    assert watson_u2(np.mod(u + 0.37, 1)) == pytest.approx(watson_u2(u), abs=1e-12)


def test_watson_decisions():
    rng = np.random.default_rng(5)
    x = np.mod(rng.vonmises(1.0, 5.0, 200), TWO_PI)
    ok = watson_u2_von_mises_test(x, 1.0, 5.0)
    bad = watson_u2_von_mises_test(x, 2.5, 5.0)
    assert ok.critical_value == WATSON_CRITICAL_001 and not ok.reject_null
    assert bad.reject_null


def test_watson_alpha_needs_bootstrap():
    x = np.random.default_rng(0).uniform(0, TWO_PI, 30)
    with pytest.raises(CircularStatsError):
        watson_u2_test(x, lambda t: t / TWO_PI, alpha=0.05)
    res = watson_u2_von_mises_test(x, 0.0, 0.5, alpha=0.05, bootstrap=True, n_boot=100)
    assert res.critical_value > 0 and 0 < res.p_value <= 1


def test_watson_bootstrap_critical_value_near_table():
    # with estimated parameters the 1% point is below the 0.141 simple-hypothesis value
    x = np.mod(np.random.default_rng(1).vonmises(0.5, 3.0, 100), TWO_PI)
    mu, r = mean_resultant(x)
    res = watson_u2_von_mises_test(x, mu, estimate_kappa(r), bootstrap=True, n_boot=400)
    assert 0.05 < res.critical_value < WATSON_CRITICAL_001 + 0.02
