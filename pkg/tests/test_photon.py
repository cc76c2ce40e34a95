from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from srfdielectric.photon import (
    HBAR,
    PowerPoint,
    SweepSeries,
    avg_photon_number,
    dbm_to_watts,
    fit_saturation,
    power_split_from_budget,
    power_trend,
    saturation_curve,
    temperature_trend,
    transmitted_power,
    watts_to_dbm,
)


def test_dbm_conversions():
    assert dbm_to_watts(0.0) == pytest.approx(1e-3, rel=1e-15)
    assert dbm_to_watts(-52.0) == pytest.approx(6.30957e-9, rel=1e-5)
    assert isinstance(dbm_to_watts(-52.0), float)
    with pytest.raises(ValueError):
        watts_to_dbm(0.0)


@settings(max_examples=300, deadline=None)
@given(st.floats(1e-20, 1e3))
def test_dbm_round_trip(x):
    assert dbm_to_watts(watts_to_dbm(x)) == pytest.approx(x, rel=1e-12)


def test_sweep_range_monotone():
    dbm = np.arange(-92.0, -51.0, 1.0)
    w = dbm_to_watts(dbm)
    assert np.all(np.diff(w) > 0)
    assert w[0] == pytest.approx(6.30957e-13, rel=1e-5)


def test_transmitted_power():
    assert transmitted_power(1e-9) == 1e-9
    assert transmitted_power(1e-9, 4e-10, 1e-10) == pytest.approx(5e-10, rel=1e-15)
    with pytest.raises(ValueError, match="inconsistent"):
        transmitted_power(1e-9, 1.1e-9, 0.0)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 1e-3), st.floats(0, 1.0), st.floats(0, 1.0))
def test_transmitted_never_exceeds_input(p_in, a, b):
    p_r, p_loss = a * p_in * 0.5, b * p_in * 0.5
    assert 0 <= transmitted_power(p_in, p_r, p_loss) <= p_in


def test_power_point():
    pt = PowerPoint(-60.0, 1e-10, 2e-10)
    assert pt.p_transmitted_w == pytest.approx(1e-9 - 3e-10, rel=1e-12)


def test_budget_split_cross_check():
    p_t, p_loss = power_split_from_budget(1e-9, 2e-10, 5e4, 1e5)
    assert p_t + p_loss == pytest.approx(8e-10, rel=1e-15)
    assert p_loss == pytest.approx(p_t * 1e5 / 5e4, rel=1e-14)


def test_photon_number_example():
    omega = 2 * math.pi * 7.6e9
    expected = 1e-13 * 1e6 / (1.054571817e-34 * omega**2)
    assert HBAR == 1.054571817e-34
    n = avg_photon_number(1e-13, 1e6, 7.6e9)
    assert n == pytest.approx(expected, rel=1e-15)
    assert n == pytest.approx(4.16e5, rel=2e-3)


@settings(max_examples=300, deadline=None)
@given(st.floats(1e-20, 1e-3), st.floats(1e2, 1e9), st.floats(1e8, 2e10), st.floats(0.1, 10.0))
def test_photon_number_scaling(p_t, q, f, k):
    n = avg_photon_number(p_t, q, f)
    assert avg_photon_number(k * p_t, q, f) == pytest.approx(k * n, rel=1e-12)
    assert avg_photon_number(p_t, k * q, f) == pytest.approx(k * n, rel=1e-12)
    assert avg_photon_number(p_t, q, k * f) == pytest.approx(n / k**2, rel=1e-12)


def test_photon_number_rejects_nonpositive():
    with pytest.raises(ValueError):
        avg_photon_number(0.0, 1e6, 7e9)


def test_temperature_trend_constant():
    t = temperature_trend(SweepSeries([0.05, 0.1, 0.2, 0.3], [6e4] * 4))
    assert t.slope == pytest.approx(0.0, abs=1e-9)
    assert t.weak_dependence


def test_temperature_trend_doubling():
    t = temperature_trend(SweepSeries([0.05, 0.2, 0.35, 0.5], [5e4, 6.6e4, 8.3e4, 1e5]))
    assert not t.weak_dependence


def test_temperature_trend_small_variation_with_noise():
    rng = np.random.default_rng(1)
    x = np.linspace(0.05, 0.5, 10)
    q = 6e4 * (1 + 0.05 * (x - x[0]) / np.ptp(x)) + rng.normal(0, 300, x.size)
    t = temperature_trend(SweepSeries(x, q, np.full(x.size, 300.0)))
    assert t.weak_dependence
    assert t.total_variation == pytest.approx(3e3, rel=0.3)


def test_temperature_trend_errors():
    with pytest.raises(ValueError, match="3 points"):
        temperature_trend(SweepSeries([0.1, 0.2], [1.0, 1.0]))
    with pytest.raises(ValueError, match="increasing"):
        SweepSeries([0.1, 0.1, 0.2], [1.0, 1.0, 1.0])


def test_power_trend_monotone_and_constant():
    n = np.logspace(2, 8, 7)
    assert power_trend(SweepSeries(n, np.linspace(1e4, 5e4, 7)), fit=False).monotonicity == 1.0
    const = power_trend(SweepSeries(n, np.full(7, 3e4)))
    assert const.monotonicity == 0.0
    assert const.saturation.l_tls == pytest.approx(0.0, abs=1e-12)
    assert isinstance(const.saturation.n_c, float)
    with pytest.raises(ValueError, match="4 points"):
        power_trend(SweepSeries(n[:3], [1.0, 2.0, 3.0]))


def test_saturation_recovery_example():
    n = np.logspace(-1, 7, 12)
    q = 1.0 / saturation_curve(n, 1e-5, 1e3, 5e-6)
    fit = power_trend(SweepSeries(n, q)).saturation
    assert fit.l_tls == pytest.approx(1e-5, rel=0.01)
    assert fit.n_c == pytest.approx(1e3, rel=0.01)
    assert fit.l_0 == pytest.approx(5e-6, rel=0.01)


@pytest.mark.parametrize("ratio", [0.1, 1.0, 10.0, 100.0])
@pytest.mark.parametrize("log_nc", [-1.0, 1.0, 3.0, 5.0])
def test_saturation_recovery_grid(ratio, log_nc):
    n_c = 10.0**log_nc
    l_0 = 1e-6
    n = n_c * np.logspace(-3, 3, 15)
    fit = fit_saturation(n, 1.0 / saturation_curve(n, ratio * l_0, n_c, l_0))
    assert fit.l_tls == pytest.approx(ratio * l_0, rel=0.01)
    assert fit.n_c == pytest.approx(n_c, rel=0.01)
    assert fit.l_0 == pytest.approx(l_0, rel=0.01)
    assert fit.converged


def test_sweep_csv():
    s = SweepSeries.from_csv("temperature_K,q_d,q_d_unc\n0.05,6e4,8e3\n0.1,6.1e4,8e3\n0.2,6.2e4,8e3\n")
    assert s.abscissa_name == "temperature_K"
    assert s.q_d.tolist() == [6e4, 6.1e4, 6.2e4]
    assert s.q_d_unc.tolist() == [8e3] * 3
    with pytest.raises(ValueError, match="line 3"):
        SweepSeries.from_csv("n,q_d\n1,2\nx,3\n")
