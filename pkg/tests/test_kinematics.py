import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from passsight.kinematics import (
    G_ACCEL,
    AccelModel,
    DivergenceError,
    ModelKind,
    VehicleParams,
    acceleration,
    constant_closed_form,
    crossover_speed,
    distance_at,
    driving_force,
    integrate_profile,
    max_overtaking_speed,
    resistant_force,
)

PARAMS = VehicleParams()
CAP_100 = 105 / 3.6


def test_constant_law():
    assert acceleration(AccelModel(), 17.0, 0.0) == pytest.approx(2.4)
    assert acceleration(AccelModel(), 5.0, 0.05) == pytest.approx(2.0076)


def test_ldm_reaches_zero_at_v_e():
    assert acceleration(AccelModel(kind="ldm"), 41.85, 0.0) == pytest.approx(0.0, abs=1e-12)


def test_dynamic_at_30_mps():
    assert driving_force(PARAMS, 30.0) == pytest.approx(5511.45, abs=0.01)
    assert resistant_force(PARAMS, 30.0, 0.0) == pytest.approx(524.3, abs=0.1)
    assert acceleration(AccelModel(kind="dynamic"), 30.0, 0.0) == pytest.approx(1.735, abs=2e-3)


def test_driving_force_limits():
    slip = PARAMS.m_t * G_ACCEL * PARAMS.mu
    assert driving_force(PARAMS, 0.0) == slip
    assert driving_force(PARAMS, 1e-6) == slip
    vc = crossover_speed(PARAMS)
    assert PARAMS.eta * PARAMS.beta * PARAMS.P / vc == pytest.approx(slip)
    assert slip / PARAMS.m == pytest.approx(8.0, abs=0.01)


def test_resistant_force_examples():
    assert resistant_force(PARAMS, 0.0, 0.0) == pytest.approx(G_ACCEL * 2300 * 5.98e-12)
    assert resistant_force(PARAMS, 0.0, 0.10) == pytest.approx(2256.3, abs=0.1)


def test_negative_speed_is_rejected():
    with pytest.raises(ValueError):
        acceleration(AccelModel(), -1.0, 0.0)


def test_lambda_bounds():
    with pytest.raises(ValueError):
        AccelModel(lam=0.0)
    with pytest.raises(ValueError):
        AccelModel(lam=1.2)


def test_max_overtaking_speed():
    assert max_overtaking_speed(100) == pytest.approx(29.1667, abs=1e-4)
    assert max_overtaking_speed(60) * 3.6 == pytest.approx(63.0)
    assert max_overtaking_speed(120) == max_overtaking_speed(100)


def test_zero_acceleration_is_uniform_motion():
    model = AccelModel(a_const=G_ACCEL * 0.05)
    states = integrate_profile(model, 20.0, None, 0.05, 0.1, lambda s: s.t >= 3.0 - 1e-9)
    assert all(s.v == pytest.approx(20.0) for s in states)
    assert states[-1].s == pytest.approx(60.0)


def _s_at_5(dt):
    states = integrate_profile(AccelModel(), 20.0, CAP_100, 0.0, dt, lambda s: s.t >= 5.0 - 1e-9)
    return states[-1].s


def test_euler_matches_closed_form_and_converges_first_order():
    exact = constant_closed_form(20.0, 2.4, CAP_100, 5.0)
    assert exact == pytest.approx(128.33, abs=0.01)
    e1, e2 = abs(_s_at_5(0.02) - exact), abs(_s_at_5(0.01) - exact)
    assert e2 / exact < 1e-3
    assert e2 < e1


def test_closed_form_pieces():
    assert constant_closed_form(20.0, 2.4, CAP_100, 0.0) == 0.0
    assert constant_closed_form(20.0, 2.4, CAP_100, 2.0) == pytest.approx(44.8)
    with pytest.raises(ValueError):
        constant_closed_form(20.0, 0.0, CAP_100, 1.0)


def test_divergence_error():
    with pytest.raises(DivergenceError):
        integrate_profile(AccelModel(), 1.0, None, 0.0, 0.1, lambda s: False, max_steps=10)


def test_distance_at_interpolates():
    states = integrate_profile(AccelModel(), 10.0, None, 0.0, 0.5, lambda s: s.t >= 2.0)
    assert distance_at(states, 0.25) == pytest.approx(2.5)
    with pytest.raises(ValueError):
        distance_at(states, 10.0)


speeds = st.floats(0.0, 45.0)
grades = st.floats(-0.15, 0.15)
kinds = st.sampled_from(list(ModelKind))


@given(kinds, speeds, speeds, grades)
def test_acceleration_is_non_increasing_in_speed(kind, v1, v2, G):
    lo, hi = sorted((v1, v2))
    m = AccelModel(kind=kind)
    assert acceleration(m, hi, G) <= acceleration(m, lo, G) + 1e-12


@given(kinds, speeds, grades, st.floats(0.05, 1.0), st.floats(0.05, 1.0))
def test_acceleration_is_linear_in_lambda(kind, v, G, l1, l2):
    a1 = acceleration(AccelModel(kind=kind, lam=l1), v, G)
    a2 = acceleration(AccelModel(kind=kind, lam=l2), v, G)
    assert a1 == pytest.approx(l1 / l2 * a2, rel=1e-9, abs=1e-12)


@given(kinds, st.floats(1.0, 28.0), st.floats(-0.05, 0.05))
def test_profile_respects_cap_and_moves_forward(kind, v0, G):
    states = integrate_profile(AccelModel(kind=kind), v0, CAP_100, G, 0.05, lambda s: s.t >= 10.0)
    assert all(s.v <= CAP_100 for s in states)
    assert all(b.s > a.s for a, b in zip(states, states[1:]) if a.v > 0)


@given(kinds, st.floats(5.0, 25.0), st.floats(0.3, 1.0), st.floats(0.0, 0.5), st.floats(20.0, 300.0))
def test_larger_lambda_reaches_distance_no_later(kind, v0, lam, extra, dist):
    lam2 = min(1.0, lam + extra)

    def t_to(l):
        states = integrate_profile(AccelModel(kind=kind, lam=l), v0, CAP_100, 0.0, 0.05,
                                   lambda s: s.s >= dist)
        return states[-1].t

    assert t_to(lam2) <= t_to(lam) + 1e-9


def test_vehicle_params_validation():
    with pytest.raises(ValueError):
        VehicleParams(m_t=3000.0)
    with pytest.raises(ValueError):
        VehicleParams(P=0.0)
    assert math.isfinite(crossover_speed(PARAMS))
