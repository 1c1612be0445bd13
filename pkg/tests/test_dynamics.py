import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lvkahan import (
    QuadraticField,
    build_system,
    cumulative_sums,
    exact_flow,
    exact_v_flow,
    f_of_t,
    kahan_iterates_closed,
    kahan_step_closed,
    kahan_step_generic,
    liouville_set,
    rk4_step,
    step_to_time,
    superintegrable_set,
    trajectory,
    vector_field,
)
from lvkahan.dynamics import flow_time, iterate_condition, kahan_v_step
from lvkahan.errors import BlowupError, DimensionMismatch, MapPoleError, OutOfRange, SingularSystem

from conftest import patterns, rel, states, system_and_state

P11 = build_system((1, 1))
T15 = 0.5 * math.log(1.5)


def test_f_of_t_examples():
    assert f_of_t(2.0, 0.0) == 0.0
    assert f_of_t(2.0, T15) == pytest.approx(0.1, rel=1e-15)
    assert f_of_t(0.0, 3.0) == 1.5
    ft = flow_time(2.0, T15)
    assert ft.f_value == f_of_t(2.0, T15) and ft.h0 == 2.0


def test_f_of_t_matches_exponential_form_and_is_continuous():
    for h0 in (-3.0, -0.5, 0.7, 4.0):
        for t in (-1.0, 0.3, 2.0):
            e = math.exp(h0 * t)
            assert f_of_t(h0, t) == pytest.approx((e - 1) / ((e + 1) * h0), rel=1e-13)
    for t in (0.1, 1.0, 5.0):
        assert f_of_t(1e-12, t) == pytest.approx(t / 2, rel=1e-10)


def test_step_to_time_examples():
    assert step_to_time(2.0, 0.1) == pytest.approx(T15, rel=1e-15)
    assert step_to_time(0.0, 0.25) == 0.5
    with pytest.raises(OutOfRange):
        step_to_time(2.0, 0.6)


@settings(max_examples=100, deadline=None)
@given(st.floats(-5, 5), st.floats(-0.19, 0.19))
def test_step_to_time_round_trip(h0, eps):
    t = step_to_time(h0, eps)
    assert f_of_t(h0, t) == pytest.approx(eps, rel=1e-12, abs=1e-15)


def test_exact_flow_examples():
    x0 = np.array([1.0, 1.0])
    assert np.array_equal(exact_flow(P11, x0, 0.0), x0)
    np.testing.assert_allclose(exact_flow(P11, x0, T15), [1.2, 0.8], rtol=1e-15)
    p = build_system((1, -1))
    for t in (0.0, 0.5, 3.0):
        np.testing.assert_allclose(exact_flow(p, x0, t), [1 / (1 + t)] * 2, rtol=1e-15)
        x = exact_flow(p, x0, t)
        assert vector_field(p, x)[0] == pytest.approx(-x[0] * x[1], rel=1e-15)


def test_exact_flow_blowup_reports_critical_time():
    # v_1 = -1 with h0 = 1: 1 + v_1 (e^t - 1) vanishes at t = ln 2
    p = build_system((-1, 2))
    exact_flow(p, [1.0, 1.0], 0.69)
    with pytest.raises(BlowupError) as exc:
        exact_flow(p, [1.0, 1.0], 0.7)
    assert exc.value.index == 1
    assert exc.value.critical_time == pytest.approx(math.log(2), rel=1e-15)
    # h0 = 0: 1 + v t = 0 at t = -1 / v
    with pytest.raises(BlowupError) as exc:
        exact_flow(build_system((1, -1)), [1.0, 1.0], -1.5)
    assert exc.value.critical_time == -1.0


def test_exact_v_flow_examples():
    assert exact_v_flow(2.0, 0.0, 10.0) == 0.0
    assert exact_v_flow(2.0, 2.0, 3.7) == pytest.approx(2.0, rel=1e-15)
    assert exact_v_flow(2.0, 1.0, T15) == pytest.approx(1.2, rel=1e-15)
    assert exact_v_flow(0.0, 2.0, 1.5) == pytest.approx(1 / (1.5 + 0.5), rel=1e-15)
    with pytest.raises(BlowupError):
        exact_v_flow(1.0, -1.0, 1.0)


@pytest.mark.parametrize("n", range(1, 7))
def test_v_flow_matches_cumulative_sums_of_flow(n):
    for a in list(patterns(n))[::2]:
        p = build_system(a)
        for x0 in states(n, 40 + n, 3):
            for t in (-0.2, 0.1, 0.4):
                try:
                    x = exact_flow(p, x0, t)
                except BlowupError:
                    continue
                h0 = cumulative_sums(p, x0).h
                v0 = cumulative_sums(p, x0).v
                v = cumulative_sums(p, x).v
                for i in range(1, n + 1):
                    ref = exact_v_flow(h0, v0[i], t)
                    assert abs(v[i] - ref) <= 1e-10 * (1 + abs(ref))


@pytest.mark.parametrize("n", range(1, 7))
def test_flow_satisfies_ode_and_semigroup(n):
    for a in patterns(n):
        p = build_system(a)
        for x0 in states(n, 50 + n, 2):
            for t in (0.05, 0.2):
                try:
                    x = exact_flow(p, x0, t)
                    dt = 1e-5
                    deriv = (exact_flow(p, x0, t + dt) - exact_flow(p, x0, t - dt)) / (2 * dt)
                    for s in (-0.1, 0.15):
                        two = exact_flow(p, exact_flow(p, x0, s), t)
                        one = exact_flow(p, x0, s + t)
                        assert rel(two, one) <= 1e-11, a
                except BlowupError:
                    continue
                ref = vector_field(p, x)
                assert np.max(np.abs(deriv - ref)) <= 1e-6 * (1 + np.max(np.abs(ref))), a


def test_exact_flow_preserves_h():
    p = build_system((1.0, -2.0, 0.5))
    for x0 in states(3, 1, 20):
        x = exact_flow(p, x0, 0.3)
        assert np.dot(p.a, x) == pytest.approx(np.dot(p.a, x0), rel=1e-12)


def test_kahan_closed_examples():
    x = np.ones(2)
    y = kahan_step_closed(P11, x, 0.1)
    np.testing.assert_allclose(y, [1.2, 0.8], rtol=1e-15)
    assert y.sum() == pytest.approx(2.0, rel=1e-15)
    np.testing.assert_array_equal(kahan_step_closed(P11, [0.3, 1.7], 0.0), [0.3, 1.7])
    for eps in (0.05, 0.3):
        np.testing.assert_allclose(kahan_step_closed(build_system((1, -1)), x, eps),
                                   [1 / (1 + 2 * eps)] * 2, rtol=1e-15)


def test_kahan_closed_pole():
    # 1 - eps H + 2 eps v_0 = 1 - eps H vanishes at eps = 1 / H
    with pytest.raises(MapPoleError) as exc:
        kahan_step_closed(P11, [1.0, 1.0], 0.5)
    assert exc.value.index == 0


@settings(max_examples=200, deadline=None)
@given(system_and_state(), st.sampled_from((-0.1, 0.01, 0.05, 0.1)))
def test_kahan_preserves_h_and_v_update(case, eps):
    a, x = case
    p = build_system(a)
    y = kahan_step_closed(p, x, eps)
    h = np.dot(p.a, x)
    assert abs(np.dot(p.a, y) - h) <= 1e-14 * (abs(h) + np.abs(p.a * x).sum()) * 10
    np.testing.assert_allclose(cumulative_sums(p, y).v, kahan_v_step(p, x, eps),
                               rtol=1e-12, atol=1e-12 * np.abs(p.a * x).sum())


def test_kahan_inverse_is_negative_step():
    p = build_system((1.0, 2.0, -3.0, 0.5))
    for x in states(4, 3, 10):
        y = kahan_step_closed(p, x, 0.05)
        assert rel(kahan_step_closed(p, y, -0.05), x) <= 1e-12


def test_generic_kahan_hand_example():
    fld = QuadraticField.from_params(P11)
    x = np.ones(2)
    M = np.eye(2) - 0.2 * fld.linear_part(x)
    np.testing.assert_allclose(M, [[0.9, -0.1], [0.1, 1.1]], rtol=1e-15)
    np.testing.assert_allclose(kahan_step_generic(fld, x, 0.2), [1.2, 0.8], rtol=1e-15)
    np.testing.assert_array_equal(kahan_step_generic(fld, [0.4, 2.0], 0.0), [0.4, 2.0])
    np.testing.assert_array_equal(kahan_step_generic(QuadraticField.zero(3), [1.0, 2.0, 3.0], 5.0),
                                  [1.0, 2.0, 3.0])


def test_generic_kahan_errors():
    fld = QuadraticField.from_params(P11)
    with pytest.raises(DimensionMismatch):
        kahan_step_generic(fld, np.ones(3), 0.1)
    # x' = x^2 gives (1 - h x) x~ = x, singular at h = 1 / x
    with pytest.raises(SingularSystem):
        kahan_step_generic(QuadraticField([[[1.0]]]), [2.0], 0.5)
    with pytest.raises(ValueError):
        QuadraticField(np.arange(8.0).reshape(2, 2, 2))


def test_quadratic_field_polarization():
    p = build_system((1.0, -2.0, 0.0, 3.0))
    fld = QuadraticField.from_params(p)
    rng = np.random.default_rng(0)
    x, y = rng.uniform(0.5, 2, (2, 4))
    np.testing.assert_allclose(fld(x), vector_field(p, x), rtol=1e-14)
    np.testing.assert_allclose(fld.polarization(x, y), fld.polarization(y, x), rtol=1e-14)
    np.testing.assert_allclose(fld.polarization(x, x), fld(x), rtol=1e-14)


@pytest.mark.parametrize("n", range(1, 7))
def test_generic_equals_closed_with_doubled_step(n):
    for a in patterns(n):
        p = build_system(a)
        fld = QuadraticField.from_params(p)
        for x in states(n, 60 + n, 5):
            for eps in (0.01, 0.05, 0.1):
                assert rel(kahan_step_generic(fld, x, 2 * eps), kahan_step_closed(p, x, eps)) <= 1e-11
                # using h = eps instead would be a different map
                if n > 1 and np.any(vector_field(p, x) != 0):
                    assert rel(kahan_step_generic(fld, x, eps), kahan_step_closed(p, x, eps)) > 1e-8


@pytest.mark.parametrize("n", range(1, 7))
def test_time_advance(n):
    for a in patterns(n):
        p = build_system(a)
        for x in states(n, 70 + n, 5):
            h0 = cumulative_sums(p, x).h
            for eps in (0.01, 0.05, 0.1):
                if abs(eps * h0) >= 1:
                    continue
                assert rel(kahan_step_closed(p, x, eps), exact_flow(p, x, step_to_time(h0, eps))) <= 1e-11


def test_time_advance_zero_energy():
    p = build_system((1.0, -1.0, 2.0, -1.0))
    x = np.array([1.0, 1.5, 0.75, 1.0])
    assert np.dot(p.a, x) == 0.0
    np.testing.assert_allclose(kahan_step_closed(p, x, 0.1), exact_flow(p, x, 0.2), rtol=1e-11)


def test_iterates_examples():
    x0 = np.ones(2)
    np.testing.assert_array_equal(kahan_iterates_closed(P11, x0, 0.1, 0), x0)
    y = kahan_iterates_closed(P11, x0, 0.1, 2)
    np.testing.assert_allclose(y, [9 / 6.5, 9 / 14.625], rtol=1e-12)
    np.testing.assert_allclose(y, kahan_step_closed(P11, kahan_step_closed(P11, x0, 0.1), 0.1), rtol=1e-12)
    p = build_system((1, -1))
    np.testing.assert_allclose(kahan_iterates_closed(p, x0, 0.25, 2), [0.5, 0.5], rtol=1e-12)
    with pytest.raises(OutOfRange):
        kahan_iterates_closed(P11, x0, 0.1, -1)
    with pytest.raises(OutOfRange):
        kahan_iterates_closed(P11, x0, 0.5, 3)


@pytest.mark.parametrize("n", range(1, 7))
def test_iterates_equal_composition(n):
    for a in list(patterns(n))[::2]:
        p = build_system(a)
        for x0 in states(n, 80 + n, 3):
            for eps in (0.01, 0.05):
                y = np.array(x0)
                for m in range(1, 65):
                    if iterate_condition(p, x0, eps, m) > 20:
                        break
                    y = kahan_step_closed(p, y, eps)
                    assert rel(kahan_iterates_closed(p, x0, eps, m), y) <= 1e-10, (a, m)


def test_rk4_examples():
    np.testing.assert_array_equal(rk4_step(QuadraticField.zero(2), [1.0, 2.0], 0.3), [1.0, 2.0])
    np.testing.assert_array_equal(rk4_step(build_system((3.0,)), [2.0], 0.3), [2.0])
    x = np.ones(2)
    np.testing.assert_allclose(rk4_step(P11, x, 0.01), exact_flow(P11, x, 0.01), rtol=1e-10)


def test_rk4_global_order_four():
    p = build_system((1.0, 2.0, -3.0, 1.0))
    x0 = np.array([1.0, 0.8, 0.6, 1.2])
    T = 1.0
    errs = []
    for h in (1e-2, 5e-3, 2.5e-3):
        x = x0
        for _ in range(round(T / h)):
            x = rk4_step(p, x, h)
        errs.append(rel(x, exact_flow(p, x0, T)))
    for e1, e2 in zip(errs, errs[1:]):
        assert 8 <= e1 / e2 <= 32


def test_trajectory_examples():
    rec = trajectory("kahan", P11, [1.0, 1.0], 0.1, 0)
    assert rec.states.shape == (1, 2) and rec.complete
    H = liouville_set(P11)
    rec = trajectory("kahan", P11, [1.0, 1.0], 0.1, 2, H)
    np.testing.assert_allclose(rec.states[-1], kahan_iterates_closed(P11, [1.0, 1.0], 0.1, 2), rtol=1e-14)
    assert rec.values.shape == (3, 1) and rec.names == ["H"]
    np.testing.assert_allclose(rec.times, [0.0, T15, 2 * T15], rtol=1e-15)


def test_trajectory_flow_matches_kahan_at_matched_time():
    p = build_system((1.0, 2.0, 0.0, 3.0))
    x0 = np.array([1.0, 0.7, 1.3, 0.9])
    h0 = cumulative_sums(p, x0).h
    k = trajectory("kahan", p, x0, 0.05, 20)
    f = trajectory("flow", p, x0, step_to_time(h0, 0.05), 20)
    assert k.complete and f.complete
    assert rel(k.states, f.states) <= 1e-11


def test_trajectory_records_blowup():
    p = build_system((-1, 2))
    rec = trajectory("flow", p, [1.0, 1.0], 0.1, 20)
    assert not rec.complete
    assert rec.event["type"] == "BlowupError" and rec.event["step"] == 7
    assert rec.event["critical_time"] == pytest.approx(math.log(2), rel=1e-15)
    assert len(rec.states) == 7


def test_trajectory_kahan_conserves_integrals():
    p = build_system((1.0, 1.0, 0.0, 2.0, 1.0))
    x0 = states(5, 4, 1)[0]
    rec = trajectory("kahan", p, x0, 0.05, 200, liouville_set(p) + superintegrable_set(p))
    assert rec.complete
    assert max(rec.drift.values()) <= 1e-9


def test_trajectory_errors():
    with pytest.raises(ValueError):
        trajectory("euler", P11, [1.0, 1.0], 0.1, 3)
    with pytest.raises(OutOfRange):
        trajectory("kahan", P11, [1.0, 1.0], 0.1, -1)
