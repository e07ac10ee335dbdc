"""Overtaking warning decisions.

The assistant combines a sight-distance prediction with the precomputed
visibility table and the route. A warning is issued, in this order of
precedence, when

1. a queued second lead leaves too small a gap to reeve in,
2. the sight available at the point-of-no-return falls short of ``d_s_min``,
3. the next intersection is closer than ``d_s_min``.

Equality is safe in every comparison. When a warning is active the assistant
also looks ahead for the next station where an overtake would be possible.
"""

from __future__ import annotations

import enum
import math
from collections.abc import Iterable, Iterator
from dataclasses import dataclass, field, replace

from .kinematics import AccelModel
from .psd import (
    DEFAULT_DT,
    SENSOR_RANGE,
    ManeuverError,
    OvertakeContext,
    PsdResult,
    QueueGapInfeasible,
    SafetyParams,
    SecondLead,
    queue_gap_ok,
    required_sight_distance,
)
from .road import RoadRoute, distance_to_next_intersection, station_at
from .visibility import (
    SHORT_SEGMENT,
    VisibilityTable,
    available_sight,
    classify_segments,
)


class WarningReason(str, enum.Enum):
    NONE = "none"
    INSUFFICIENT_SIGHT = "insufficient_sight"
    INTERSECTION_AHEAD = "intersection_ahead"
    QUEUE_GAP_TOO_SMALL = "queue_gap_too_small"


class OpportunityKind(str, enum.Enum):
    POTENTIAL_ONCOMING = "potential_oncoming"
    SECOND_LANE = "second_lane"


class AssistantUnavailable(RuntimeError):
    """No verdict can be given, e.g. the sight lookup falls outside the map."""


@dataclass(frozen=True)
class Opportunity:
    distance: float
    kind: OpportunityKind


@dataclass(frozen=True)
class WarningState:
    warn: bool
    reason: WarningReason = WarningReason.NONE
    next_opportunity: Opportunity | None = None

    def __post_init__(self):
        object.__setattr__(self, "reason", WarningReason(self.reason))
        if self.warn == (self.reason is WarningReason.NONE):
            raise ValueError("a warning needs exactly one reason, and no warning needs none")
        if self.next_opportunity is not None and not self.warn:
            raise ValueError("next_opportunity is only reported with an active warning")


NO_WARNING = WarningState(False)


def queue_blocked(ctx: OvertakeContext) -> bool:
    """A queued second lead is present and the gap fails the reeve-in rule."""
    s = ctx.safety
    return ctx.queue_active and not queue_gap_ok(ctx.second_lead.gap, ctx.L_oing, ctx.v_oen, s.L2_s, s.L3_s)


def _sight_at_pnr(table: VisibilityTable, s_pnr: float) -> float:
    if not table.s[0] <= s_pnr <= table.s[-1]:
        raise AssistantUnavailable(f"predicted PNR at s={s_pnr:.1f} lies outside the visibility table")
    if table.truncated_at(s_pnr):
        raise AssistantUnavailable(f"visibility at s={s_pnr:.1f} is truncated by the surface model")
    return available_sight(table, s_pnr)


def evaluate(
    ctx: OvertakeContext,
    psd: PsdResult | None,
    table: VisibilityTable,
    route: RoadRoute,
    ego_s: float,
) -> WarningState:
    """Warn/no-warn verdict for one snapshot, without opportunity scheduling.

    ``psd`` may be ``None`` only when the queue check alone decides the case
    (the engine cannot produce a prediction for an infeasible queue).
    """
    if not 0.0 <= ego_s <= route.total_length:
        raise ValueError(f"ego_s={ego_s} outside route [0, {route.total_length}]")
    if queue_blocked(ctx):
        return WarningState(True, WarningReason.QUEUE_GAP_TOO_SMALL)
    if psd is None:
        raise ValueError("a prediction is required unless the queue gap is infeasible")
    if _sight_at_pnr(table, ego_s + psd.d_pnr) < psd.d_s_min:
        return WarningState(True, WarningReason.INSUFFICIENT_SIGHT)
    d_inter = distance_to_next_intersection(route, ego_s)
    if d_inter is not None and psd.d_s_min >= d_inter:
        return WarningState(True, WarningReason.INTERSECTION_AHEAD)
    return NO_WARNING


def context_at(ctx: OvertakeContext, route: RoadRoute, s: float) -> OvertakeContext:
    """``ctx`` with slope and limits taken from the route at ``s``.

    The station's speed limit is applied to both directions of travel.
    """
    st = station_at(route, s)
    return replace(ctx, G=st.grade, speed_limit=st.speed_limit, opp_speed_limit=st.speed_limit)


def next_opportunity(
    ctx: OvertakeContext,
    model: AccelModel,
    table: VisibilityTable,
    route: RoadRoute,
    ego_s: float,
    limited: bool = True,
    dt: float = DEFAULT_DT,
) -> Opportunity | None:
    """Distance to the first place ahead where an overtake becomes possible.

    Candidates are ``ego_s`` itself followed by the table stations ahead.
    Speeds stay frozen; slope and limits come from each candidate station. A
    second lane wins over sufficient sight at the same station. A sight-based
    opportunity also needs the next intersection to lie beyond ``d_s_min``.
    Queue feasibility does not depend on the location and is left out of the
    scan.
    """
    if queue_blocked(ctx):
        ctx = replace(ctx, second_lead=None)
    cache: dict[tuple[float, float], PsdResult | None] = {}

    def psd_for(c: OvertakeContext) -> PsdResult | None:
        key = (c.G, c.speed_limit)
        if key not in cache:
            try:
                cache[key] = required_sight_distance(c, model, limited=limited, dt=dt)
            except ManeuverError:
                cache[key] = None
        return cache[key]

    candidates = [ego_s] + [float(s) for s in table.s if ego_s < s <= route.total_length]
    for s in candidates:
        if station_at(route, s).lanes_per_direction >= 2:
            return Opportunity(s - ego_s, OpportunityKind.SECOND_LANE)
        psd = psd_for(context_at(ctx, route, s))
        if psd is None:
            continue
        s_pnr = s + psd.d_pnr
        if s_pnr > table.s[-1]:
            # every later candidate looks even further past the mapped range
            break
        if table.truncated_at(s_pnr):
            continue
        d_inter = distance_to_next_intersection(route, s)
        if available_sight(table, s_pnr) >= psd.d_s_min and (d_inter is None or d_inter > psd.d_s_min):
            return Opportunity(s - ego_s, OpportunityKind.POTENTIAL_ONCOMING)
    return None


def short_green_at(table: VisibilityTable, s: float, d_s_min: float, short: float = SHORT_SEGMENT) -> bool:
    """True when ``s`` sits in a sufficient-sight stretch shorter than ``short``."""
    for seg in classify_segments(table, d_s_min).segments:
        if seg.s_start <= s <= seg.s_end:
            return seg.sufficient and seg.length < short
    return False


@dataclass(frozen=True)
class Snapshot:
    """Sensor and map state at one assistant tick.

    Lead distances are center to center along the route, in meters.
    """

    t: float
    ego_s: float
    ego_speed: float
    lead_distance: float | None = None
    lead_speed: float = 0.0
    lead_length: float = 5.0
    ego_length: float = 5.0
    second_lead_gap: float | None = None


@dataclass(frozen=True)
class AssistantConfig:
    model: AccelModel = field(default_factory=AccelModel)
    safety: SafetyParams = field(default_factory=SafetyParams)
    limited: bool = True
    dt: float = DEFAULT_DT
    schedule: bool = True
    suppress_short_green: bool = True
    short_green: float = SHORT_SEGMENT
    sensor_range: float = SENSOR_RANGE


@dataclass(frozen=True)
class AssistantOutput:
    t: float
    state: WarningState | None  # None while unavailable
    psd: PsdResult | None = None
    sight: float | None = None
    unavailable: str | None = None


def snapshot_context(snap: Snapshot, route: RoadRoute, safety: SafetyParams) -> OvertakeContext:
    second = None if snap.second_lead_gap is None else SecondLead(snap.second_lead_gap)
    base = OvertakeContext(
        v0=snap.ego_speed,
        v_oen=snap.lead_speed,
        L_oing=snap.ego_length,
        L_oen=snap.lead_length,
        second_lead=second,
        safety=safety,
    )
    return context_at(base, route, snap.ego_s)


def assess(snap: Snapshot, route: RoadRoute, table: VisibilityTable, config: AssistantConfig) -> AssistantOutput:
    """Full verdict for one snapshot, including scheduling and smoothing.

    Expects a lead within sensor range.
    """
    ctx = snapshot_context(snap, route, config.safety)
    try:
        psd = required_sight_distance(ctx, config.model, limited=config.limited, dt=config.dt)
    except QueueGapInfeasible:
        psd = None
    except ManeuverError as exc:
        return AssistantOutput(snap.t, None, unavailable=f"{type(exc).__name__}: {exc}")
    sight = None
    try:
        if psd is None and not queue_blocked(ctx):
            # gap satisfies the static rule but braking cannot finish in it
            state = WarningState(True, WarningReason.QUEUE_GAP_TOO_SMALL)
        else:
            state = evaluate(ctx, psd, table, route, snap.ego_s)
        if psd is not None:
            s_pnr = snap.ego_s + psd.d_pnr
            sight = _sight_at_pnr(table, s_pnr)
            if (
                config.suppress_short_green
                and not state.warn
                and short_green_at(table, s_pnr, psd.d_s_min, config.short_green)
            ):
                state = WarningState(True, WarningReason.INSUFFICIENT_SIGHT)
    except AssistantUnavailable as exc:
        return AssistantOutput(snap.t, None, psd, unavailable=str(exc))
    if state.warn and config.schedule:
        opp = next_opportunity(ctx, config.model, table, route, snap.ego_s, config.limited, config.dt)
        state = replace(state, next_opportunity=opp)
    return AssistantOutput(snap.t, state, psd, sight)


def tick(
    snapshots: Iterable[Snapshot],
    route: RoadRoute,
    table: VisibilityTable,
    config: AssistantConfig | None = None,
) -> Iterator[AssistantOutput]:
    """One output per snapshot with a lead in sensor range.

    Snapshots must be in non-decreasing time order; an earlier time raises
    ``ValueError``. Snapshots without a lead in range produce no output.
    """
    config = config or AssistantConfig()
    last_t = -math.inf
    for snap in snapshots:
        if snap.t < last_t:
            raise ValueError(f"snapshot at t={snap.t} arrived after t={last_t}")
        last_t = snap.t
        if snap.lead_distance is None or not 0 <= snap.lead_distance <= config.sensor_range:
            continue
        yield assess(snap, route, table, config)
