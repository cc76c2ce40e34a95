from __future__ import annotations

import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from srfdielectric.extraction import (
    ExtractionError,
    LossTangent,
    ModeSpec,
    PermittivityShift,
    PermittivityTensor,
    delta_eps_from_shifts,
    effective_loss_tangent,
    eps_at_condition,
    frequency_shifts,
    loss_tangent_te,
    loss_tangent_tm,
    mixed_mode_q,
    permittivity_resolution,
)

TE = ModeSpec("TE01", "TE", 7.3827e9, -40.603e6, 0.0, 0.923, 0.0)
TM = ModeSpec("TM01", "TM", 7.7293e9, 0.0, -64.637e6, 0.0, 0.463)
HOM = ModeSpec("HOM", "HOM", 9.6e9, -30e6, -20e6, 0.5, 0.3)


def test_shifts_invert_to_table_change():
    d = delta_eps_from_shifts({"TE01": -182.7135e6, "TM01": -129.274e6}, [TE, TM])
    assert d.d_eps_perp == pytest.approx(4.5, rel=1e-12)
    assert d.d_eps_par == pytest.approx(2.0, rel=1e-12)
    rounded = delta_eps_from_shifts({"TE01": -182.71e6, "TM01": -129.27e6}, [TE, TM])
    assert (round(rounded.d_eps_perp, 2), round(rounded.d_eps_par, 2)) == (4.5, 2.0)


def test_zero_shifts():
    d = delta_eps_from_shifts({"TE01": 0.0, "TM01": 0.0}, [TE, TM])
    assert (d.d_eps_perp, d.d_eps_par) == (0.0, 0.0)


def test_three_modes_match_exact_solve():
    shifts = frequency_shifts(4.5, 2.0, [TE, TM, HOM])
    two = delta_eps_from_shifts(shifts, [TE, TM])
    three = delta_eps_from_shifts(shifts, [TE, TM, HOM])
    assert three.d_eps_perp == pytest.approx(two.d_eps_perp, rel=1e-12)
    assert three.d_eps_par == pytest.approx(two.d_eps_par, rel=1e-12)
    assert three.residual_norm < 1e-6


def test_ill_conditioned_rejected():
    a = ModeSpec("a", "HOM", 7e9, -40e6, -20e6, 0.1, 0.1)
    b = ModeSpec("b", "HOM", 8e9, -40e6, -20e6 * (1 + 1e-10), 0.1, 0.1)
    with pytest.raises(ExtractionError, match="ill-conditioned"):
        delta_eps_from_shifts({"a": 1.0, "b": 1.0}, [a, b])
    with pytest.raises(ExtractionError, match="singular"):
        delta_eps_from_shifts({"TE01": 1.0, "x": 1.0}, [TE, ModeSpec("x", "TE", 7e9, -1e6, 0, 0.5, 0)])
    with pytest.raises(ExtractionError, match="two modes"):
        delta_eps_from_shifts({"TE01": 1.0}, [TE])
    with pytest.raises(ExtractionError, match="TM01"):
        delta_eps_from_shifts({"TE01": 1.0}, [TE, TM])


@settings(max_examples=200, deadline=None)
@given(st.floats(-20, 20), st.floats(-20, 20), st.floats(1e6, 1e8), st.floats(1e6, 1e8),
       st.floats(-0.5, 0.5), st.floats(-0.5, 0.5))
def test_linear_solve_closure(d_perp, d_par, s1, s2, x1, x2):
    a = ModeSpec("a", "HOM", 7e9, -s1, -s1 * x1, 0.4, 0.4)
    b = ModeSpec("b", "HOM", 8e9, -s2 * x2, -s2, 0.4, 0.4)
    d = delta_eps_from_shifts(frequency_shifts(d_perp, d_par, [a, b]), [a, b])
    scale = max(abs(d_perp), abs(d_par), 1e-3)
    assert abs(d.d_eps_perp - d_perp) <= 1e-12 * scale * d.condition_number
    assert abs(d.d_eps_par - d_par) <= 1e-12 * scale * d.condition_number


def test_eps_at_condition():
    ref = PermittivityTensor(42.5, 26.0)
    assert eps_at_condition(ref, (4.5, 2.0)) == PermittivityTensor(47.0, 28.0)
    assert eps_at_condition(ref, PermittivityShift(0.0, 0.0)) == ref
    with pytest.raises(ExtractionError, match="nonphysical"):
        eps_at_condition(ref, (-42.0, 0.0))
    assert np.array_equal(ref.as_matrix(), np.diag([42.5, 42.5, 26.0]))
    assert ref.as_tuple() == (42.5, 42.5, 26.0)


def test_loss_tangents_table_values():
    # the quoted Q_d values are rounded, so agreement is to their precision
    assert loss_tangent_te(62_626.6, 0.923) == pytest.approx(1.73e-5, rel=5e-5)
    assert loss_tangent_tm(168_735, 0.463) == pytest.approx(1.28e-5, rel=5e-5)
    assert loss_tangent_te(1 / (0.923 * 1.73e-5), 0.923) == pytest.approx(1.73e-5, rel=1e-15)
    assert loss_tangent_tm(1 / (0.463 * 1.28e-5), 0.463) == pytest.approx(1.28e-5, rel=1e-15)


def test_loss_tangent_simple_cases():
    assert loss_tangent_te(1e5, 1.0) == pytest.approx(1e-5)
    assert loss_tangent_te(2e5, 0.5) == pytest.approx(loss_tangent_te(1e5, 0.5) / 2)
    assert loss_tangent_tm(2e5, 0.5) == pytest.approx(1e-5)
    assert loss_tangent_tm(1e5, 1.0) == pytest.approx(1e-5)
    with pytest.raises(ExtractionError):
        loss_tangent_te(1e5, 0.0)
    with pytest.raises(ExtractionError):
        loss_tangent_tm(-1.0, 0.5)


def test_sanity_bounds_warn_only():
    with pytest.warns(UserWarning, match="tan_perp"):
        assert loss_tangent_te(10.0, 1.0) == 0.1
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        loss_tangent_te(10.0, 1.0, bounds=None)


def test_mixed_mode_example_and_reductions():
    tan = LossTangent(1.73e-5, 1.28e-5)
    q = mixed_mode_q(tan, 0.5, 0.3)
    assert 1 / q == pytest.approx(1.249e-5, rel=1e-12)
    assert q == pytest.approx(80_064, abs=1)
    assert loss_tangent_te(mixed_mode_q(tan, 0.923, 0.0), 0.923) == pytest.approx(1.73e-5, rel=1e-14)
    assert loss_tangent_tm(mixed_mode_q(tan, 0.0, 0.463), 0.463) == pytest.approx(1.28e-5, rel=1e-14)


def test_effective_tangent():
    tan = LossTangent(1.73e-5, 1.28e-5)
    eff = effective_loss_tangent(mixed_mode_q(tan, 0.5, 0.3), 0.5, 0.3)
    assert 1.28e-5 < eff < 1.73e-5
    assert eff == pytest.approx((0.5 * 1.73e-5 + 0.3 * 1.28e-5) / 0.8, rel=1e-14)
    assert effective_loss_tangent(5e4, 0.7, 0.0) == loss_tangent_te(5e4, 0.7)
    with pytest.raises(ExtractionError):
        effective_loss_tangent(5e4, 0.0, 0.0)


@settings(max_examples=300, deadline=None)
@given(st.floats(1e-8, 1e-2), st.floats(1e-6, 1.0))
def test_te_round_trip(tau, p):
    q = mixed_mode_q(LossTangent(tau, 0.0), p, 0.0)
    assert loss_tangent_te(q, p, None) == pytest.approx(tau, rel=1e-14)


@settings(max_examples=300, deadline=None)
@given(st.floats(1e-8, 1e-2), st.floats(1e-8, 1e-2), st.floats(1e-3, 0.5), st.floats(1e-3, 0.5))
def test_betweenness(t1, t2, p1, p2):
    if abs(t1 - t2) <= 1e-9 * max(t1, t2):
        return
    eff = effective_loss_tangent(mixed_mode_q(LossTangent(t1, t2), p1, p2), p1, p2)
    assert min(t1, t2) < eff < max(t1, t2)


@settings(max_examples=100, deadline=None)
@given(st.floats(1e-8, 1e-2), st.floats(0.0, 0.5), st.floats(1e-3, 0.5))
def test_isotropic_tangent(tau, p1, p2):
    eff = effective_loss_tangent(mixed_mode_q(LossTangent(tau, tau), p1, p2), p1, p2)
    assert eff == pytest.approx(tau, rel=1e-14)


def test_resolution_bound():
    assert permittivity_resolution(0.4e6, [-40.603e6, -64.637e6]) <= 0.01


def test_mode_spec_invariants():
    with pytest.raises(ExtractionError, match="p_par"):
        ModeSpec("x", "TE", 7e9, p_perp=0.5, p_par=0.1)
    with pytest.raises(ExtractionError, match="p_perp"):
        ModeSpec("x", "TM", 7e9, p_perp=0.1, p_par=0.5)
    with pytest.raises(ExtractionError, match="exceeds 1"):
        ModeSpec("x", "HOM", 7e9, p_perp=0.7, p_par=0.5)
    with pytest.raises(ExtractionError, match="kind"):
        ModeSpec("x", "TEM", 7e9)
    assert ModeSpec("x", "te", 7e9, p_perp=0.5).kind == "TE"
    with pytest.raises(ExtractionError):
        LossTangent(-1e-5, 1e-5)
