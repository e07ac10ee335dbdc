import statistics

import pytest

from passsight.logschema import DriveLogRecord, LeadObs
from passsight.simulator import (
    AgentSpec,
    DriverPolicy,
    EgoSpec,
    Scenario,
    Trigger,
    concat_logs,
    detect_pnr_events,
    relative_pnr_error,
    run,
    scenario_from_files,
    straight_route,
    synthetic_overtakes,
)

ROUTE = straight_route(2000.0, 0.0, 100.0)


def _scenario(policy, duration=20.0, oncoming=()):
    return Scenario(ROUTE.route_id, EgoSpec(100.0, 20.0, 5.0, policy),
                    leads=(AgentSpec(125.0, 20.0, 5.0, "lead0"),), oncoming=oncoming, duration=duration)


def test_no_trigger_means_steady_following():
    res = run(_scenario(DriverPolicy()), ROUTE)
    assert len(res.records) == int(20.0 / 0.02) + 1
    assert not any(r.on_opposite_lane for r in res.records)
    assert detect_pnr_events(res.records) == []
    gaps = [r.leads[0].distance for r in res.records]
    assert max(gaps) - min(gaps) < 1e-9


def test_runs_are_deterministic():
    pol = DriverPolicy(trigger=Trigger.SCRIPTED, start_times=(1.0,))
    assert run(_scenario(pol), ROUTE).records == run(_scenario(pol), ROUTE).records


def test_agents_move_by_v_dt():
    pol = DriverPolicy(trigger=Trigger.SCRIPTED, start_times=(1.0,))
    recs = run(_scenario(pol), ROUTE).records
    for a, b in zip(recs, recs[1:]):
        assert b.ego_s - a.ego_s == pytest.approx(a.ego_speed * 0.02, abs=1e-9)


def test_full_throttle_constant_driver_matches_unlimited_prediction():
    pol = DriverPolicy(model="constant", lam=1.0, trigger=Trigger.SCRIPTED, start_times=(1.0,))
    ev = detect_pnr_events(run(_scenario(pol), ROUTE).records)
    assert len(ev) == 1
    pred = ev[0].predictions[("constant", "no_limits")]
    assert abs(pred - ev[0].duration) <= 2 * 0.02


def test_as_modeled_driver_matches_as_modeled_prediction():
    pol = DriverPolicy(model="ldm", lam=0.8, obey_cap=True, trigger=Trigger.SCRIPTED, start_times=(1.0,))
    ev = detect_pnr_events(run(_scenario(pol), ROUTE).records)
    err = relative_pnr_error(ev, "ldm", "as_modeled")
    assert abs(err[0]) < 0.02


def test_abort_before_alignment_yields_no_event():
    pol = DriverPolicy(trigger=Trigger.SCRIPTED, start_times=(1.0,), abort_times=(2.0,))
    recs = run(_scenario(pol), ROUTE).records
    assert any(r.on_opposite_lane for r in recs)
    assert detect_pnr_events(recs) == []


def test_two_sequential_overtakes():
    pol = DriverPolicy(trigger=Trigger.SCRIPTED, start_times=(1.0, 15.0))
    scn = Scenario(ROUTE.route_id, EgoSpec(100.0, 20.0, 5.0, pol),
                   leads=(AgentSpec(125.0, 20.0, 5.0, "a"), AgentSpec(300.0, 20.0, 5.0, "b")), duration=30.0)
    ev = detect_pnr_events(run(scn, ROUTE).records)
    assert [e.lead_id for e in ev] == ["a", "b"]
    assert ev[0].t_pnr_measured < ev[1].t_start


def test_leaving_the_route_ends_early():
    scn = Scenario(ROUTE.route_id, EgoSpec(1900.0, 30.0), duration=10.0)
    res = run(scn, ROUTE)
    assert res.ended_early and "left the route" in res.reason


def test_predictions_are_logged_every_second():
    recs = run(_scenario(DriverPolicy(), duration=3.0), ROUTE).records
    ticks = [r for r in recs if r.assistant_tick]
    assert [r.t for r in ticks] == pytest.approx([0.0, 1.0, 2.0, 3.0])
    assert set(ticks[0].models) == {"constant", "ldm", "dynamic"}
    assert ticks[0].models["constant"].d_s_min == pytest.approx(269.25, abs=0.1)


def test_warning_clear_trigger_fires_with_a_table(hill_curve, hill_curve_table):
    route, _ = hill_curve
    pol = DriverPolicy(trigger=Trigger.ON_WARNING_CLEAR)
    scn = Scenario(route.route_id, EgoSpec(0.0, 20.0, 5.0, pol),
                   leads=(AgentSpec(25.0, 20.0, 5.0, "lead0"), AgentSpec(1500.0, 20.0, 5.0, "lead1")),
                   duration=80.0)
    recs = run(scn, route, hill_curve_table).records
    ev = detect_pnr_events(recs)
    assert ev
    start = next(r for r in recs if r.t == ev[0].t_start)
    prior = [r for r in recs if r.assistant_tick and r.t < start.t]
    assert prior[-1].warning is False


def test_scenario_validation():
    with pytest.raises(ValueError):
        Scenario("r", EgoSpec(0.0, 20.0), dt=0.03)
    with pytest.raises(ValueError):
        DriverPolicy(lam=0.0)
    with pytest.raises(ValueError):
        run(Scenario("r", EgoSpec(5000.0, 20.0)), ROUTE)


def test_scenario_from_files(tmp_path):
    agents = tmp_path / "agents.csv"
    agents.write_text("role,id,s0,speed,length\nego,e,100,20,5\nlead,a,125,20,5\noncoming,o,900,25,4.5\n")
    scn = scenario_from_files({"trigger": "scripted", "start_times": "1 5", "duration": "12"}, agents, ROUTE)
    assert scn.ego.policy.start_times == (1.0, 5.0)
    assert scn.oncoming[0].speed == 25.0 and scn.duration == 12.0
    agents.write_text("role,id,s0,speed,length\nlead,a,125,20,5\n")
    with pytest.raises(ValueError, match="ego"):
        scenario_from_files({}, agents, ROUTE)


def test_concat_logs_shifts_time_and_ids():
    a = run(_scenario(DriverPolicy(), duration=1.0), ROUTE)
    both = concat_logs([a, a])
    assert both[len(a.records)].t == pytest.approx(a.records[-1].t + 0.02)
    assert {r.leads[0].id for r in both} == {"r0_lead0", "r1_lead0"}


def test_median_error_ordering_small_batch():
    errs = {v: [] for v in ("no_limits", "lambda_one", "as_modeled")}
    for scn, route in synthetic_overtakes("dynamic", 6, seed=3):
        ev = detect_pnr_events(run(scn, route).records)
        for v in errs:
            errs[v] += relative_pnr_error(ev, "dynamic", v)
    med = {v: statistics.median(e) for v, e in errs.items()}
    assert abs(med["no_limits"]) < 0.02
    assert med["no_limits"] < med["lambda_one"] <= med["as_modeled"]


def test_detect_events_on_handmade_log():
    def rec(t, d, opp):
        return DriveLogRecord(t, 0.0, 20.0, opp, 0.0, 100.0, leads=(LeadObs("x", d, 5.0, 18.0),))

    log = [rec(0.0, 25.0, False), rec(1.0, 20.0, True), rec(2.0, 5.0, True), rec(3.0, -1.0, True),
           rec(4.0, -30.0, False)]
    ev = detect_pnr_events(log)
    assert len(ev) == 1 and ev[0].t_start == 1.0 and ev[0].t_pnr_measured == 3.0
