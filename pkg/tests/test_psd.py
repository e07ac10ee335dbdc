from dataclasses import replace

import oracle
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from passsight.kinematics import AccelModel, ModelKind
from passsight.psd import (
    LeadTooFast,
    NoConvergence,
    OvertakeContext,
    QueueGapInfeasible,
    SafetyParams,
    SecondLead,
    Variant,
    opposing_speed,
    predict_pnr,
    predict_variant,
    queue_gap_ok,
    required_sight_distance,
    rest_of_maneuver,
    static_lengths,
    with_safety,
)

RUNNING = OvertakeContext(v0=20.0, v_oen=20.0)
CONST = AccelModel()


def test_static_lengths():
    assert static_lengths(RUNNING) == (20.0, 20.0, 50.0)
    assert static_lengths(OvertakeContext(0.0, 0.0))[2] == 10.0
    a = static_lengths(OvertakeContext(20.0, 10.0))
    b = static_lengths(OvertakeContext(20.0, 20.0))
    assert b[0] + b[1] == 2 * (a[0] + a[1])


def test_opposing_speed():
    assert opposing_speed(100) == pytest.approx(34.528, abs=1e-3)
    assert opposing_speed(100) * 3.6 == pytest.approx(124.3, abs=0.5)
    assert opposing_speed(60) * 3.6 == pytest.approx(95.3, abs=0.05)
    assert opposing_speed(70) < opposing_speed(80)


def test_running_example():
    res = required_sight_distance(RUNNING, CONST)
    assert res.t_pnr == pytest.approx(4.637, abs=0.01)
    assert res.t_rest == pytest.approx(2.727, abs=0.01)
    assert res.v_end == pytest.approx(29.1667, abs=1e-4)
    assert res.d_rest == pytest.approx(79.545, abs=0.1)
    assert res.L_sm == pytest.approx(95.542, abs=0.01)
    assert res.d_opp == pytest.approx(94.168, abs=0.2)
    assert res.d_s_min == pytest.approx(269.3, abs=0.5)
    assert res.d_tot == pytest.approx(res.L_tot + 20.0 * res.t_total)


def test_pnr_at_cap_is_uniform_relative_motion():
    cap = 105 / 3.6
    ctx = OvertakeContext(v0=cap, v_oen=20.0)
    assert predict_pnr(ctx, CONST).t_pnr == pytest.approx(25.0 / (cap - 20.0), abs=0.011)


def test_lead_too_fast():
    with pytest.raises(LeadTooFast):
        predict_pnr(OvertakeContext(20.0, 105 / 3.6 - 0.4), CONST)
    # the unlimited variant has no cap and hence no headroom check
    predict_variant(OvertakeContext(20.0, 105 / 3.6 - 0.4), CONST, Variant.NO_LIMITS)


def test_no_convergence_uphill():
    ctx = OvertakeContext(v0=20.0, v_oen=20.0, G=0.15)
    with pytest.raises(NoConvergence):
        predict_pnr(ctx, AccelModel(a_const=1.0))


def test_no_second_lead_means_no_braking():
    _, v_end = rest_of_maneuver(RUNNING, CONST)
    assert v_end == pytest.approx(105 / 3.6)


def test_second_lead_beyond_sensor_range_is_ignored():
    far = OvertakeContext(20.0, 20.0, second_lead=SecondLead(300.0))
    assert not far.queue_active
    assert required_sight_distance(far, CONST) == required_sight_distance(RUNNING, CONST)


def test_queue_braking_ends_at_lead_speed():
    ctx = OvertakeContext(20.0, 20.0, second_lead=SecondLead(120.0))
    res = required_sight_distance(ctx, CONST)
    assert res.v_end == 20.0
    ref = oracle.two_vehicle("constant", 20.0, 20.0, queue=True)
    assert res.t_rest == pytest.approx(ref.t_rest, rel=5e-3)
    assert res.d_s_min == pytest.approx(ref.d_s_min, rel=5e-3)


def test_queue_gap_infeasible():
    with pytest.raises(QueueGapInfeasible):
        required_sight_distance(OvertakeContext(20.0, 20.0, second_lead=SecondLead(44.0)), CONST)
    # enough room for the gaps as long as braking starts right after the PNR
    res = required_sight_distance(OvertakeContext(20.0, 20.0, second_lead=SecondLead(46.0)), CONST)
    assert res.v_end == 20.0


def test_queue_gap_ok_examples():
    assert not queue_gap_ok(44.0, 5.0, 20.0, 1.0)
    assert queue_gap_ok(45.0, 5.0, 20.0, 1.0)
    assert queue_gap_ok(5.0, 5.0, 0.0, 1.0)
    assert not queue_gap_ok(4.9, 5.0, 0.0, 1.0)


def test_degenerate_no_traffic():
    ctx = OvertakeContext(20.0, 20.0, opp_speed_limit=100.0, safety=SafetyParams(Lsm_s=0.0))
    res = required_sight_distance(ctx, CONST)
    assert res.d_s_min == pytest.approx(res.d_rest + res.d_opp)


def test_variants_differ_as_expected():
    as_mod = predict_variant(RUNNING, CONST, Variant.AS_MODELED)
    lam1 = predict_variant(RUNNING, CONST, Variant.LAMBDA_ONE)
    free = predict_variant(RUNNING, CONST, Variant.NO_LIMITS)
    assert lam1.t_pnr < as_mod.t_pnr
    assert free.t_pnr <= lam1.t_pnr
    assert free.v_end > 105 / 3.6


def test_safety_params_validation():
    with pytest.raises(ValueError):
        SafetyParams(decel=2.61)
    with pytest.raises(ValueError):
        SafetyParams(L1_s=3.0).check_user_bounds()
    SafetyParams(L1_s=2.0, Lsm_s=1.5).check_user_bounds()
    with pytest.raises(ValueError):
        SecondLead(0.0)
    with pytest.raises(ValueError):
        OvertakeContext(-1.0, 20.0)


@pytest.mark.parametrize("kind", ["constant", "ldm", "dynamic"])
def test_running_example_matches_oracle(kind):
    res = required_sight_distance(RUNNING, AccelModel(kind=kind))
    ref = oracle.two_vehicle(kind, 20.0, 20.0)
    assert res.t_pnr == pytest.approx(ref.t_pnr, rel=5e-3)
    assert res.t_rest == pytest.approx(ref.t_rest, rel=5e-3)
    assert res.d_s_min == pytest.approx(ref.d_s_min, rel=5e-3)


contexts = st.builds(
    OvertakeContext,
    v0=st.floats(12.0, 26.0),
    v_oen=st.floats(12.0, 26.0),
    L_oing=st.floats(3.5, 6.0),
    L_oen=st.floats(3.5, 12.0),
    G=st.floats(-0.05, 0.05),
    speed_limit=st.just(100.0),
    opp_speed_limit=st.floats(60.0, 100.0),
)
kinds = st.sampled_from(list(ModelKind))


def _dsm(ctx, kind, lam=0.8):
    return required_sight_distance(ctx, AccelModel(kind=kind, lam=lam)).d_s_min


@given(contexts, kinds)
def test_decomposition_is_exact(ctx, kind):
    res = required_sight_distance(ctx, AccelModel(kind=kind))
    assert res.d_s_min - res.d_rest - res.L_sm - res.d_opp == pytest.approx(0.0, abs=1e-9)
    assert min(res.t_pnr, res.t_rest, res.d_rest, res.L_sm, res.d_opp, res.L_tot, res.d_tot) >= 0


@settings(deadline=None)
@given(contexts, kinds, st.floats(0.0, 2.0))
def test_d_s_min_increases_with_lead_speed(ctx, kind, dv):
    faster = OvertakeContext(ctx.v0, min(ctx.v_oen + dv, 105 / 3.6 - 0.6), ctx.L_oing, ctx.L_oen,
                             ctx.G, ctx.speed_limit, ctx.opp_speed_limit)
    assume(faster.v_oen >= ctx.v_oen)
    assert _dsm(faster, kind) >= _dsm(ctx, kind) - 1e-6


@settings(deadline=None)
@given(contexts, kinds, st.sampled_from(["L_oen", "L_oing", "opp_speed_limit"]), st.floats(0.0, 3.0))
def test_d_s_min_increases_with_lengths_and_opposing_limit(ctx, kind, name, delta):
    bigger = replace(ctx, **{name: min(getattr(ctx, name) + delta, 100.0 if name == "opp_speed_limit" else 99)})
    assert _dsm(bigger, kind) >= _dsm(ctx, kind) - 1e-6


@settings(deadline=None)
@given(contexts, kinds, st.sampled_from(["L2_s", "Lsm_s"]), st.floats(0.0, 1.0))
def test_d_s_min_increases_with_safety_gaps(ctx, kind, name, delta):
    base = getattr(ctx.safety, name)
    assert _dsm(with_safety(ctx, **{name: base + delta}), kind) >= _dsm(ctx, kind) - 1e-6


@settings(deadline=None)
@given(contexts, kinds, st.floats(0.3, 1.0), st.floats(0.0, 0.5))
def test_d_s_min_does_not_increase_with_lambda(ctx, kind, lam, extra):
    lam2 = min(1.0, lam + extra)
    assert _dsm(ctx, kind, lam2) <= _dsm(ctx, kind, lam) + 1e-6


@given(st.floats(0.0, 500.0), st.floats(1.0, 10.0), st.floats(0.0, 40.0), st.floats(0.0, 2.0))
def test_queue_gap_threshold_is_inclusive(_, L_oing, v_oen, L2_s):
    threshold = L_oing + 2 * L2_s * v_oen
    assert queue_gap_ok(threshold, L_oing, v_oen, L2_s)
