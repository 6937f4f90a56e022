import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fiberlink import NoiseSpec, adev, gen_power_law, mdev, sinusoid_fm_adev, tau_grid
from fiberlink.stability import StabilityCurve, loglog_slope, predicted_deviation

from conftest import make_series


def brute_adev(y, valid, m):
    """Overlapping Allan deviation from block averages, skipping any term with a bad sample."""
    n = len(y)
    acc = []
    for i in range(n - 2 * m + 1):
        if not all(valid[i : i + 2 * m]):
            continue
        a = math.fsum(y[i : i + m]) / m
        b = math.fsum(y[i + m : i + 2 * m]) / m
        acc.append((b - a) ** 2)
    return math.sqrt(0.5 * math.fsum(acc) / len(acc)) if acc else None


def brute_mdev(y, valid, m):
    """Modified Allan deviation: average of m adjacent first differences of m-sample means."""
    n = len(y)
    acc = []
    for j in range(n - 3 * m + 2):
        if not all(valid[j : j + 3 * m - 1]):
            continue
        diffs = []
        for i in range(j, j + m):
            a = math.fsum(y[i : i + m]) / m
            b = math.fsum(y[i + m : i + 2 * m]) / m
            diffs.append(b - a)
        acc.append((math.fsum(diffs) / m) ** 2)
    return math.sqrt(0.5 * math.fsum(acc) / len(acc)) if acc else None


def nonoverlapping_adev(y, m):
    k = len(y) // m
    means = y[: k * m].reshape(k, m).mean(axis=1)
    return math.sqrt(0.5 * np.mean(np.diff(means) ** 2))


def white_fm(sigma1, n, seed):
    return make_series(np.random.default_rng(seed).normal(0.0, sigma1, n))


# --------------------------------------------------------------- examples

def test_alternating_sequence():
    a = 3e-16
    c = adev(make_series(a * (-1.0) ** np.arange(101)), [1.0])
    assert c.values[0] == pytest.approx(a * math.sqrt(2), rel=1e-12)
    assert c.counts[0] == 100


def test_constant_is_zero():
    s = make_series(np.full(500, 7.3e-17))
    for fn in (adev, mdev):
        c = fn(s, [1.0, 2.0, 10.0, 100.0])
        np.testing.assert_allclose(c.values, 0.0, atol=1e-30)


def test_default_grid_is_125():
    np.testing.assert_array_equal(tau_grid(3000, 1.0), [1, 2, 5, 10, 20, 50, 100, 200, 500, 1000])
    np.testing.assert_array_equal(tau_grid(100, 2.0), [2, 4, 10, 20, 40])
    c = adev(white_fm(1e-15, 3000, 1))
    np.testing.assert_array_equal(c.taus, tau_grid(3000))


def test_counts():
    c = adev(make_series(np.zeros(20)), [1.0, 3.0])
    assert c.counts.tolist() == [19, 15]
    c = mdev(make_series(np.zeros(20)), [1.0, 3.0])
    assert c.counts.tolist() == [19, 13]


def test_tau_must_be_multiple_of_gate():
    s = make_series(np.zeros(20), gate=2.0)
    with pytest.raises(ValueError):
        adev(s, [3.0])
    with pytest.raises(ValueError):
        adev(s, [4.0, 2.0])


def test_tau_without_terms_is_omitted_with_warning():
    s = make_series(np.zeros(10))
    with pytest.warns(UserWarning):
        c = adev(s, [1.0, 5.0, 6.0])
    assert c.taus.tolist() == [1.0, 5.0]
    y = np.zeros(30)
    valid = np.ones(30, bool)
    valid[::5] = False
    with pytest.warns(UserWarning):
        c = adev(make_series(y, valid), [1.0, 3.0])
    assert c.taus.tolist() == [1.0]


@pytest.mark.parametrize("fm", [1 / 86400, 1 / 3600])
def test_sinusoidal_fm_closed_form(fm):
    n = int(8 / fm)
    t = np.arange(n)
    y0 = 1e-17
    s = make_series(y0 * np.sin(2 * np.pi * fm * t))
    taus = np.unique(np.round(np.linspace(0.05, 0.9, 12) / fm))
    got = adev(s, taus).values
    ref = sinusoid_fm_adev(y0, fm, taus)
    np.testing.assert_allclose(got, ref, rtol=0.02)


def test_sinusoid_fm_adev_special_points():
    assert sinusoid_fm_adev(1.0, 1e-3, 500.0) == pytest.approx(2 / math.pi)
    assert sinusoid_fm_adev(1.0, 1e-3, 1000.0) == pytest.approx(0.0, abs=1e-15)
    assert sinusoid_fm_adev(1.07e-17, 1 / 86400, 20000.0) == pytest.approx(6.5e-18, rel=0.01)
    with pytest.raises(ValueError):
        sinusoid_fm_adev(1.0, 0.0, 1.0)


def test_white_fm_mdev_over_adev_ratio():
    s = gen_power_law(NoiseSpec({0: 2e-30}, seed=5), 400_000)
    taus = [64.0, 128.0, 256.0]
    r = mdev(s, taus).values / adev(s, taus).values
    np.testing.assert_allclose(r, math.sqrt(0.5), rtol=0.1)


def test_white_pm_mdev_slope():
    s = gen_power_law(NoiseSpec({2: 1e-31}, seed=6), 200_000)
    c = mdev(s, tau_grid(300))
    assert loglog_slope(c, 1, 100) == pytest.approx(-1.5, abs=0.1)


def test_overlapping_matches_nonoverlapping_brute():
    # pooled over 20 fixed-seed records: at tau = N/10 a single record has
    # only nine non-overlapping differences, too few for a 20 % comparison
    n = 20_000
    taus = [1.0, 10.0, 100.0, 1000.0, 2000.0]
    over = np.zeros(len(taus))
    naive = np.zeros(len(taus))
    for seed in range(20):
        s = white_fm(1e-15, n, seed)
        over += adev(s, taus).values ** 2
        naive += np.array([nonoverlapping_adev(s.y, int(t)) ** 2 for t in taus])
    ratio = np.sqrt(over / naive)
    assert np.all((ratio >= 0.8) & (ratio <= 1.2)), ratio


def test_mdev_equals_adev_at_m1():
    s = white_fm(1e-15, 1000, 2)
    assert mdev(s, [1.0]).values[0] == pytest.approx(adev(s, [1.0]).values[0], rel=1e-12)


# ---------------------------------------------------------- predicted values

def test_predicted_white_fm():
    h0 = 2e-30
    taus = [1.0, 10.0, 100.0]
    np.testing.assert_allclose(predicted_deviation(lambda f: h0 + 0 * f, taus), np.sqrt(h0 / (2 * np.array(taus))),
                               rtol=1e-3)


def test_predicted_white_pm_closed_form():
    # m = 1: 2 int_0^1/2 h2 f^2 sin^2(pi f) df = h2 (1/24 + 1/(4 pi^2))
    h2 = 1e-30
    v = predicted_deviation(lambda f: h2 * f**2, [1.0])[0]
    assert v**2 == pytest.approx(h2 * (1 / 24 + 1 / (4 * math.pi**2)), rel=1e-6)


def test_predicted_matches_simulation():
    spec = NoiseSpec({2: 7.9e-31, 0: 1e-31, -1: 1e-33}, seed=3)
    s = gen_power_law(spec, 300_000)
    taus = [1.0, 10.0, 100.0, 1000.0]
    for kind, fn in (("adev", adev), ("mdev", mdev)):
        ratio = fn(s, taus).values / predicted_deviation(spec.psd, taus, kind=kind)
        np.testing.assert_allclose(ratio, 1.0, rtol=0.15)


def test_loglog_slope_needs_two_points():
    c = StabilityCurve([1.0], [1.0], [1])
    with pytest.raises(ValueError):
        loglog_slope(c)


def test_curve_invariants():
    with pytest.raises(ValueError):
        StabilityCurve([2.0, 1.0], [1.0, 1.0], [1, 1])
    with pytest.raises(ValueError):
        StabilityCurve([1.0], [1.0, 2.0], [1])
    c = StabilityCurve([1.0, 2.0], [3.0, 4.0], [5, 6])
    assert c.at(2.0) == 4.0
    with pytest.raises(KeyError):
        c.at(3.0)


# --------------------------------------------------------------- properties

series_st = st.integers(8, 60).flatmap(
    lambda n: st.tuples(
        arrays(np.float64, n, elements=st.floats(-1e-14, 1e-14, allow_nan=False)),
        arrays(bool, n, elements=st.sampled_from([True, True, True, False])),
    )
)


@settings(max_examples=60, deadline=None)
@given(series_st, st.integers(1, 3))
def test_matches_brute_force_with_gaps(yv, m):
    y, valid = yv
    s = make_series(y, valid)
    for fn, brute in ((adev, brute_adev), (mdev, brute_mdev)):
        ref = brute(y, valid, m)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            c = fn(s, [float(m)])
        if ref is None:
            assert len(c) == 0
        else:
            assert c.values[0] == pytest.approx(ref, rel=1e-9, abs=1e-28)


# subnormal results cannot be scaled exactly, so stay in the normal range
NORMAL_RANGE = st.floats(-1e-14, 1e-14, allow_nan=False).filter(lambda v: v == 0 or abs(v) > 1e-250)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.integers(12, 80), elements=NORMAL_RANGE),
       st.sampled_from([2.0, 0.5, -1.0, -4.0, 1024.0]))
def test_scaling_by_power_of_two_is_exact(y, c):
    s = make_series(y)
    sc = make_series(c * y)
    taus = [1.0, 2.0, 3.0]
    for fn in (adev, mdev):
        np.testing.assert_array_equal(fn(sc, taus).values, abs(c) * fn(s, taus).values)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.integers(12, 80), elements=NORMAL_RANGE),
       st.floats(-1e3, 1e3).filter(lambda c: abs(c) > 1e-3))
def test_scaling_by_any_constant(y, c):
    s = make_series(y)
    sc = make_series(c * y)
    taus = [1.0, 2.0, 3.0]
    for fn in (adev, mdev):
        np.testing.assert_allclose(fn(sc, taus).values, abs(c) * fn(s, taus).values, rtol=1e-12, atol=1e-40)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.integers(12, 80), elements=st.floats(-1e-14, 1e-14, allow_nan=False)))
def test_time_reversal(y):
    taus = [1.0, 2.0, 4.0]
    a = adev(make_series(y), taus).values
    b = adev(make_series(y[::-1]), taus).values
    np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-30)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.integers(20, 80), elements=st.floats(-1e-14, 1e-14, allow_nan=False)),
       st.integers(0, 2**32 - 1))
def test_gaps_only_remove_terms(y, seed):
    """Terms that survive a gap keep their value; only the count changes."""
    from fiberlink.stability import _allan_terms, _prepare

    valid = np.random.default_rng(seed).random(y.size) > 0.1
    full = make_series(y)
    gapped = make_series(y, valid)
    for m in (1, 2, 3):
        x, bad, scale_full = _prepare(full)
        d_full = _allan_terms(x, bad, m)[0] * scale_full
        x, bad, scale_gap = _prepare(gapped)
        d_gap, ok = _allan_terms(x, bad, m)
        np.testing.assert_allclose(d_gap[ok] * scale_gap, d_full[ok], rtol=1e-9, atol=1e-28)
        assert np.count_nonzero(ok) <= d_full.size
