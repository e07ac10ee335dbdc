"""Closed-loop kinematic overtaking scenarios.

Agents are points with lengths moving along one route; ``s`` always denotes a
vehicle's center. Leads drive at constant speed in the ego lane, oncoming
vehicles drive against the route direction. The ego car follows its lead at a
time headway, pulls out on a trigger, accelerates with its own driver model,
and reeves in once it is ``reeve_gap_s`` seconds ahead of the lead.

Every simulated second the assistant predictions of all three acceleration
models are logged; the warning shown to the driver comes from one of them.
Positions advance by explicit Euler exactly like the prediction engine:
``s += v*dt`` then ``v += a(v)*dt``.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .assistant import AssistantConfig, assess
from .kinematics import AccelModel, ModelKind, acceleration, max_overtaking_speed
from .logschema import (
    MAX_LEADS,
    MODEL_NAMES,
    DriveLogRecord,
    Geometry,
    LeadObs,
    ModelValues,
    OncomingObs,
    context_from_record,
    snapshot_from_record,
)
from .psd import (
    DEFAULT_DT,
    ManeuverError,
    SafetyParams,
    Variant,
    opposing_speed,
    predict_variant,
    required_sight_distance,
    static_lengths,
)
from .road import RoadRoute, route_from_polyline, station_at
from .visibility import VisibilityTable, available_sight

SIM_DT = 0.02
ASSISTANT_PERIOD = 1.0


class Trigger(str, enum.Enum):
    NONE = "none"
    SCRIPTED = "scripted"
    ON_WARNING_CLEAR = "on_warning_clear"


class Phase(str, enum.Enum):
    FOLLOW = "follow"
    OVERTAKE = "overtake"
    ABORT = "abort"
    CRUISE = "cruise"


@dataclass(frozen=True)
class DriverPolicy:
    model: ModelKind = ModelKind.CONSTANT
    lam: float = 1.0
    obey_cap: bool = False
    # explicit speed ceiling in m/s for the overtake, overrides the posted cap
    v_max: float | None = None
    follow_gap_s: float = 1.0
    reeve_gap_s: float = 1.0
    trigger: Trigger = Trigger.NONE
    start_times: tuple[float, ...] = ()
    abort_times: tuple[float, ...] = ()
    brake: float = 3.3
    # proportional gains of the car-following controller
    k_gap: float = 0.3
    k_speed: float = 0.8

    def __post_init__(self):
        object.__setattr__(self, "model", ModelKind(self.model))
        object.__setattr__(self, "trigger", Trigger(self.trigger))
        if not 0 < self.lam <= 1:
            raise ValueError("lam must lie in (0, 1]")

    def accel_model(self) -> AccelModel:
        return AccelModel(kind=ModelKind(self.model), lam=self.lam)


@dataclass(frozen=True)
class EgoSpec:
    s0: float
    v0: float
    length: float = 5.0
    policy: DriverPolicy = field(default_factory=DriverPolicy)


@dataclass(frozen=True)
class AgentSpec:
    s0: float
    speed: float
    length: float = 5.0
    id: str = ""


@dataclass(frozen=True)
class Scenario:
    route_id: str
    ego: EgoSpec
    leads: tuple[AgentSpec, ...] = ()
    oncoming: tuple[AgentSpec, ...] = ()
    duration: float = 30.0
    dt: float = SIM_DT
    warning_model: ModelKind = ModelKind.CONSTANT
    log_predictions: bool = True
    safety: SafetyParams = field(default_factory=SafetyParams)

    def __post_init__(self):
        object.__setattr__(self, "warning_model", ModelKind(self.warning_model))
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.duration > 0:
            raise ValueError("duration must be positive")
        per = ASSISTANT_PERIOD / self.dt
        if abs(per - round(per)) > 1e-9:
            raise ValueError("dt must divide the assistant period")

    def check_against(self, route: RoadRoute) -> None:
        for name, s in [("ego", self.ego.s0)] + [(f"lead {a.id}", a.s0) for a in self.leads]:
            if not 0 <= s <= route.total_length:
                raise ValueError(f"{name} starts at s={s} outside the route")


@dataclass
class SimResult:
    records: list[DriveLogRecord]
    ended_early: bool = False
    reason: str = ""


def _lead_ids(scn: Scenario) -> list[str]:
    return [a.id or f"lead{i}" for i, a in enumerate(scn.leads)]


def run(scenario: Scenario, route: RoadRoute, table: VisibilityTable | None = None) -> SimResult:
    """Fixed-step simulation producing one record per step.

    Without a visibility table the predictions are still logged but no
    warning is computed, and ``on_warning_clear`` never fires.
    """
    scn = scenario
    scn.check_against(route)
    pol = scn.ego.policy
    driver = pol.accel_model()
    dt = scn.dt
    n_steps = int(round(scn.duration / dt))
    per_tick = int(round(ASSISTANT_PERIOD / dt))
    ids = _lead_ids(scn)
    lead_s = np.array([a.s0 for a in scn.leads], dtype=float)
    lead_v = np.array([a.speed for a in scn.leads], dtype=float)
    lead_len = np.array([a.length for a in scn.leads], dtype=float)
    onc_s = np.array([a.s0 for a in scn.oncoming], dtype=float)
    onc_v = np.array([a.speed for a in scn.oncoming], dtype=float)
    onc_len = np.array([a.length for a in scn.oncoming], dtype=float)
    ego_s, ego_v, L = scn.ego.s0, scn.ego.v0, scn.ego.length
    phase = Phase.FOLLOW
    target: int | None = None  # lead index being overtaken
    starts = sorted(pol.start_times)
    aborts = sorted(pol.abort_times)
    warn_cfg = AssistantConfig(safety=scn.safety, model=AccelModel(kind=scn.warning_model))
    last_warning_clear = False
    records: list[DriveLogRecord] = []

    for k in range(n_steps + 1):
        t = k * dt
        if not 0 <= ego_s <= route.total_length:
            return SimResult(records, True, f"ego left the route at t={t:.2f}")
        st = station_at(route, ego_s)
        ahead = [i for i in range(len(lead_s)) if lead_s[i] - ego_s >= 0]
        nearest = min(ahead, key=lambda i: lead_s[i]) if ahead else None

        # driver decisions at this instant
        if phase is Phase.FOLLOW and nearest is not None:
            fire = False
            if pol.trigger is Trigger.SCRIPTED and starts and t >= starts[0] - 1e-9:
                starts.pop(0)
                fire = True
            elif pol.trigger is Trigger.ON_WARNING_CLEAR and last_warning_clear:
                fire = True
            if fire:
                phase, target = Phase.OVERTAKE, nearest
                last_warning_clear = False
        if phase is Phase.OVERTAKE and aborts and t >= aborts[0] - 1e-9:
            aborts.pop(0)
            if lead_s[target] > ego_s:  # only before the centers align
                phase = Phase.ABORT
        if phase is Phase.OVERTAKE:
            rear_gap = (ego_s - 0.5 * L) - (lead_s[target] + 0.5 * lead_len[target])
            if rear_gap >= pol.reeve_gap_s * lead_v[target]:
                phase, target = Phase.CRUISE, None
        if phase is Phase.ABORT:
            front_gap = (lead_s[target] - 0.5 * lead_len[target]) - (ego_s + 0.5 * L)
            if front_gap >= pol.follow_gap_s * lead_v[target] * 0.5:
                phase, target = Phase.FOLLOW, None
        if phase is Phase.CRUISE and nearest is not None:
            gap = (lead_s[nearest] - 0.5 * lead_len[nearest]) - (ego_s + 0.5 * L)
            if gap <= 2 * pol.follow_gap_s * max(lead_v[nearest], 1.0):
                phase = Phase.FOLLOW
        on_opp = phase in (Phase.OVERTAKE, Phase.ABORT)

        rec = _record(t, ego_s, ego_v, L, on_opp, st, route, ids, lead_s, lead_v, lead_len,
                      onc_s, onc_v, onc_len)
        if k % per_tick == 0:
            rec, clear = _assistant_step(rec, scn, route, table, warn_cfg)
            last_warning_clear = clear and _oncoming_clear(rec, table, ego_s)
        records.append(rec)
        if k == n_steps:
            break

        # accelerations
        cap = _driver_cap(pol, st.speed_limit)
        if phase is Phase.OVERTAKE:
            a = acceleration(driver, ego_v, st.grade)
        elif phase is Phase.ABORT:
            a = -pol.brake
        elif phase is Phase.FOLLOW and nearest is not None:
            gap = (lead_s[nearest] - 0.5 * lead_len[nearest]) - (ego_s + 0.5 * L)
            desired = pol.follow_gap_s * lead_v[nearest]
            a = pol.k_gap * (gap - desired) + pol.k_speed * (lead_v[nearest] - ego_v)
            a = min(max(a, -pol.brake), acceleration(driver, ego_v, st.grade))
        else:
            a = 0.0

        ego_s += ego_v * dt
        v_next = ego_v + a * dt
        if phase is Phase.OVERTAKE and cap is not None and v_next > cap:
            v_next = cap
        ego_v = max(v_next, 0.0)
        lead_s = lead_s + lead_v * dt
        onc_s = onc_s - onc_v * dt
    return SimResult(records)


def _driver_cap(pol: DriverPolicy, limit_kmh: float) -> float | None:
    if pol.v_max is not None:
        return pol.v_max
    return max_overtaking_speed(limit_kmh) if pol.obey_cap else None


def _record(t, ego_s, ego_v, L, on_opp, st, route, ids, lead_s, lead_v, lead_len, onc_s, onc_v, onc_len):
    rel = lead_s - ego_s
    order = sorted(range(len(rel)), key=lambda i: abs(rel[i]))[:MAX_LEADS]
    order.sort(key=lambda i: rel[i])
    leads = tuple(LeadObs(ids[i], float(rel[i]), float(lead_len[i]), float(lead_v[i])) for i in order)
    oncoming = None
    onc_rel = onc_s - ego_s
    if len(onc_rel) and np.any(onc_rel >= 0):
        j = int(np.argmin(np.where(onc_rel >= 0, onc_rel, np.inf)))
        oncoming = OncomingObs(float(onc_rel[j]), float(onc_v[j]), float(onc_len[j]))
    return DriveLogRecord(
        t=float(t), ego_s=float(ego_s), ego_speed=float(ego_v), on_opposite_lane=on_opp,
        grade=float(st.grade), speed_limit_kmh=float(st.speed_limit), ego_length=float(L),
        lanes_per_direction=int(st.lanes_per_direction), road_length=route.total_length,
        leads=leads, oncoming=oncoming,
    )


def model_values(record: DriveLogRecord, safety: SafetyParams | None = None) -> tuple[Geometry, dict]:
    """Per-model predictions for a record, as logged by the simulator.

    Shared by the simulator and the replay recomputation.
    """
    ctx = context_from_record(record, safety)
    if ctx is None:
        return Geometry(), {}
    L1, L2, L_tot = static_lengths(ctx)
    sl = ctx.second_lead
    geom = Geometry(
        L1=L1, L_oen=ctx.L_oen, L_oing=ctx.L_oing, L2=L2, L_tot=L_tot,
        L_e=None if sl is None else sl.gap,
        L3=ctx.safety.L3_s * ctx.v_oen,
        v_opp_max=opposing_speed(ctx.opp_speed_limit),
    )
    models = {}
    for name in MODEL_NAMES:
        try:
            r = required_sight_distance(ctx, AccelModel(kind=ModelKind(name)))
        except ManeuverError:
            continue
        models[name] = ModelValues(
            d_rest=r.d_rest, t_total=r.t_total, t_pnr=r.t_pnr, d_pnr=r.d_pnr, v_end=r.v_end,
            d_opp=r.d_opp, L_sm=r.L_sm, d_s_min=r.d_s_min, t_rest=r.t_rest,
        )
    return geom, models


def _assistant_step(rec, scn, route, table, warn_cfg):
    """Fill the assistant columns of a record; returns it and a clear flag."""
    lead = rec.target_lead()
    if lead is None or lead.distance > warn_cfg.sensor_range:
        return replace(rec, assistant_tick=True), False
    geom, models = model_values(rec, scn.safety) if scn.log_predictions else (Geometry(), {})
    rec = replace(rec, assistant_tick=True, geometry=geom)
    if table is None:
        return replace(rec, models=models), False
    snap = snapshot_from_record(rec)
    clear = False
    for name in MODEL_NAMES:
        cfg = replace(warn_cfg, model=AccelModel(kind=ModelKind(name)))
        is_driver = ModelKind(name) is ModelKind(scn.warning_model)
        if name not in models and not is_driver:
            continue
        out = assess(snap, route, table, cfg)
        warn = None if out.state is None else out.state.warn
        opp = None
        if out.state is not None and out.state.next_opportunity is not None:
            opp = out.state.next_opportunity
        if name in models:
            models[name] = replace(models[name], warning=warn,
                                   opportunity_distance=None if opp is None else opp.distance)
        if is_driver:
            rec = replace(
                rec,
                warning=warn,
                warning_reason=None if out.state is None else out.state.reason.value,
                opportunity_distance=None if opp is None else opp.distance,
                opportunity_kind=None if opp is None else opp.kind.value,
                sight_distance=out.sight,
            )
            clear = warn is False
    return replace(rec, models=models), clear


def _oncoming_clear(rec: DriveLogRecord, table, ego_s: float) -> bool:
    """No oncoming vehicle inside the currently visible stretch."""
    if rec.oncoming is None:
        return True
    if table is None:
        return False
    s = min(max(ego_s, table.s[0]), table.s[-1])
    return rec.oncoming.distance > available_sight(table, s)


# measured point-of-no-return

@dataclass(frozen=True)
class PnrEvent:
    t_start: float
    t_pnr_measured: float
    lead_id: str
    predictions: dict  # (model name, variant value) -> predicted t_pnr, or None

    def __post_init__(self):
        if not self.t_pnr_measured > self.t_start:
            raise ValueError("t_pnr_measured must follow t_start")

    @property
    def duration(self) -> float:
        return self.t_pnr_measured - self.t_start


def predict_event(record: DriveLogRecord, safety: SafetyParams | None = None, dt: float = DEFAULT_DT) -> dict:
    """Predicted time to PNR for every (model, variant) from a maneuver-start record."""
    ctx = context_from_record(record, safety)
    out = {}
    for name in MODEL_NAMES:
        for variant in Variant:
            try:
                r = predict_variant(ctx, AccelModel(kind=ModelKind(name)), variant, dt=dt)
                out[(name, variant.value)] = r.t_pnr
            except ManeuverError:
                out[(name, variant.value)] = None
    return out


def detect_pnr_events(log: list[DriveLogRecord], safety: SafetyParams | None = None) -> list[PnrEvent]:
    """One event per maneuver in which the ego center reaches the lead center
    while on the opposite lane. Aborted maneuvers produce no event.
    """
    events = []
    start = None
    for rec in log:
        if rec.on_opposite_lane and start is None:
            lead = rec.target_lead()
            start = (rec, None if lead is None else lead.id)
        elif not rec.on_opposite_lane:
            start = None
            continue
        if start is None or start[1] is None:
            continue
        rec0, lead_id = start
        lead = rec.lead_by_id(lead_id)
        if lead is not None and lead.distance <= 0 and rec.t > rec0.t:
            events.append(PnrEvent(rec0.t, rec.t, lead_id, predict_event(rec0, safety)))
            start = (rec0, None)  # keep the lane flag but stop looking
    return events


def relative_pnr_error(events: list[PnrEvent], model: ModelKind | str, variant: Variant | str) -> list[float]:
    """``(t_predicted - t_measured) / t_measured`` per event, times from maneuver start."""
    key = (ModelKind(model).value, Variant(variant).value)
    out = []
    for ev in events:
        pred = ev.predictions.get(key)
        if pred is None:
            continue
        out.append((pred - ev.duration) / ev.duration)
    return out


# synthetic scenario generator

def straight_route(length: float, grade: float, speed_limit: float, interval: float = 10.0,
                   route_id: str = "straight") -> RoadRoute:
    pts = np.array([[0.0, 0.0, 0.0], [length, 0.0, grade * length]])
    return route_from_polyline(pts, interval=interval, speed_limit=speed_limit, route_id=route_id)


def synthetic_overtakes(model: ModelKind | str, n: int, seed: int = 0, lam: float = 1.0,
                        obey_cap: bool = False, log_predictions: bool = False):
    """``n`` single-overtake scenarios with randomized speeds, limits and grades.

    Leads drive 70-85 km/h; the ego starts in steady following at a one-second
    swerve gap and pulls out after one second. Returns ``(scenario, route)``
    pairs.
    """
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        v_lead_kmh = rng.uniform(70.0, 85.0)
        limits = [x for x in (90.0, 100.0) if max_overtaking_speed(x) - 0.5 > v_lead_kmh / 3.6 + 1.0]
        limit = float(rng.choice(limits))
        grade = float(rng.uniform(-0.04, 0.06))
        length_e = float(rng.uniform(4.2, 5.2))
        length_l = float(rng.uniform(4.0, 12.0))
        v = v_lead_kmh / 3.6
        route = straight_route(2000.0, grade, limit, route_id=f"synthetic{i}")
        policy = DriverPolicy(model=ModelKind(model), lam=lam, obey_cap=obey_cap,
                              trigger=Trigger.SCRIPTED, start_times=(1.0,))
        ego_s = 100.0
        lead_s = ego_s + 0.5 * (length_e + length_l) + policy.follow_gap_s * v
        scn = Scenario(
            route_id=route.route_id,
            ego=EgoSpec(ego_s, v, length_e, policy),
            leads=(AgentSpec(lead_s, v, length_l, "lead0"),),
            duration=16.0,
            log_predictions=log_predictions,
        )
        out.append((scn, route))
    return out


# scenario files

AGENT_COLUMNS = ("role", "id", "s0", "speed", "length")


def _times(text: str | None) -> tuple[float, ...]:
    return tuple(float(x) for x in (text or "").replace(",", " ").split())


def _flag(text: str | None, default: bool) -> bool:
    if text is None or text == "":
        return default
    return text.strip().lower() in ("1", "true", "yes", "on")


def scenario_from_files(values: dict, agents_path, route: RoadRoute) -> Scenario:
    """Scenario from flat config values and an agent table.

    The agent CSV has columns ``role,id,s0,speed,length`` with role ``ego``,
    ``lead`` or ``oncoming``; speeds in m/s. Config keys: ``duration``, ``dt``,
    ``warning_model``, ``driver_model``, ``driver_lam``, ``obey_cap``,
    ``v_max``, ``follow_gap_s``, ``reeve_gap_s``, ``trigger``,
    ``start_times`` and ``abort_times`` (space separated, seconds).
    """
    path = Path(agents_path)
    ego, leads, oncoming = None, [], []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in AGENT_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise ValueError(f"{path}: missing column(s) {', '.join(missing)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                spec = AgentSpec(float(row["s0"]), float(row["speed"]), float(row["length"] or 5.0), row["id"])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
            role = row["role"].strip().lower()
            if role == "ego":
                ego = spec
            elif role == "lead":
                leads.append(spec)
            elif role == "oncoming":
                oncoming.append(spec)
            else:
                raise ValueError(f"{path}:{lineno}: unknown role {row['role']!r}")
    if ego is None:
        raise ValueError(f"{path}: no ego row")

    def num(key, default):
        v = values.get(key)
        return default if v in (None, "") else float(v)

    v_max = values.get("v_max")
    policy = DriverPolicy(
        model=ModelKind(values.get("driver_model", "constant")),
        lam=num("driver_lam", 1.0),
        obey_cap=_flag(values.get("obey_cap"), False),
        v_max=None if v_max in (None, "") else float(v_max),
        follow_gap_s=num("follow_gap_s", 1.0),
        reeve_gap_s=num("reeve_gap_s", 1.0),
        trigger=Trigger(values.get("trigger", "none")),
        start_times=_times(values.get("start_times")),
        abort_times=_times(values.get("abort_times")),
    )
    return Scenario(
        route_id=route.route_id,
        ego=EgoSpec(ego.s0, ego.speed, ego.length, policy),
        leads=tuple(leads),
        oncoming=tuple(oncoming),
        duration=num("duration", 30.0),
        dt=num("dt", SIM_DT),
        warning_model=ModelKind(values.get("warning_model", "constant")),
    )


def concat_logs(results: list[SimResult], dt: float = SIM_DT) -> list[DriveLogRecord]:
    """Chain several runs into one time-ordered log.

    Each run is shifted to start one step after the previous one ends, and lead
    ids get a per-run prefix so maneuvers stay distinguishable.
    """
    out: list[DriveLogRecord] = []
    offset = 0.0
    for i, res in enumerate(results):
        if not res.records:
            continue
        for rec in res.records:
            leads = tuple(replace(ld, id=f"r{i}_{ld.id}") for ld in rec.leads)
            out.append(replace(rec, t=rec.t + offset, leads=leads))
        offset = out[-1].t + dt
    return out
