"""Point-of-no-return and required passing sight distance.

The ego car is assumed to start the maneuver ``L1`` behind the lead vehicle's
rear bumper. The point-of-no-return (PNR) is reached when the two vehicle
centers align; the maneuver ends when the ego rear is ``L2`` ahead of the lead
front. Only the part after the PNR needs to be covered by sight distance::

    d_s_min = d_rest + L_sm + d_opp
    d_rest  = L2_s * v_oen + L_oen/2 + L_oing/2 + v_oen * t_rest
    L_sm    = Lsm_s * (v_opp_max + v_end)
    d_opp   = v_opp_max * t_rest
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

from scipy.optimize import brentq

from .kinematics import (
    AccelModel,
    DivergenceError,
    ModelKind,
    MotionState,
    acceleration,
    integrate_profile,
    max_overtaking_speed,
)

DEFAULT_DT = 0.01
TIME_CEILING = 120.0
SENSOR_RANGE = 250.0


class ManeuverError(ValueError):
    """Base class for contexts in which no overtaking prediction exists."""


class LeadTooFast(ManeuverError):
    pass


class NoConvergence(ManeuverError):
    pass


class QueueGapInfeasible(ManeuverError):
    pass


class Variant(str, enum.Enum):
    AS_MODELED = "as_modeled"
    LAMBDA_ONE = "lambda_one"
    NO_LIMITS = "no_limits"


@dataclass(frozen=True)
class SafetyParams:
    L1_s: float = 1.0
    L2_s: float = 1.0
    L3_s: float = 1.0
    Lsm_s: float = 1.5
    decel: float = 3.3
    # minimum headroom between lead speed and the overtaking cap, m/s
    margin: float = 0.5

    def __post_init__(self):
        for name in ("L1_s", "L2_s", "L3_s", "Lsm_s", "margin"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if not 2.61 < self.decel < 4.24:
            raise ValueError("decel must lie between the comfort (2.61) and critical (4.24) bounds")

    def check_user_bounds(self) -> None:
        """Ranges allowed for driver-adjusted gaps."""
        for name, lo, hi in (("L1_s", 1, 2), ("L2_s", 1, 2), ("L3_s", 1, 2), ("Lsm_s", 1.5, 2)):
            val = getattr(self, name)
            if not lo <= val <= hi:
                raise ValueError(f"{name}={val} outside the adjustable range [{lo}, {hi}] s")


@dataclass(frozen=True)
class SecondLead:
    gap: float  # lead front to second-lead rear, m
    as_queue: bool = True

    def __post_init__(self):
        if self.gap <= 0:
            raise ValueError("second-lead gap must be positive")


@dataclass(frozen=True)
class OvertakeContext:
    v0: float
    v_oen: float
    L_oing: float = 5.0
    L_oen: float = 5.0
    G: float = 0.0
    speed_limit: float = 100.0
    opp_speed_limit: float = 100.0
    second_lead: SecondLead | None = None
    safety: SafetyParams = field(default_factory=SafetyParams)

    def __post_init__(self):
        if self.v0 < 0 or self.v_oen < 0:
            raise ValueError("speeds must be non-negative")
        if self.L_oing <= 0 or self.L_oen <= 0:
            raise ValueError("vehicle lengths must be positive")

    @property
    def queue_active(self) -> bool:
        sl = self.second_lead
        return sl is not None and sl.as_queue and sl.gap <= SENSOR_RANGE


@dataclass(frozen=True)
class PnrPoint:
    t_pnr: float
    d_pnr: float
    v_pnr: float


@dataclass(frozen=True)
class PsdResult:
    t_pnr: float
    d_pnr: float
    t_rest: float
    d_rest: float
    v_end: float
    L_sm: float
    d_opp: float
    d_s_min: float
    L1: float
    L2: float
    L_tot: float
    d_oen: float
    d_tot: float
    v_opp_max: float

    @property
    def t_total(self) -> float:
        return self.t_pnr + self.t_rest


def static_lengths(ctx: OvertakeContext) -> tuple[float, float, float]:
    L1 = ctx.safety.L1_s * ctx.v_oen
    L2 = ctx.safety.L2_s * ctx.v_oen
    return L1, L2, L1 + ctx.L_oen + L2 + ctx.L_oing


def opposing_speed(opp_speed_limit_kmh: float) -> float:
    """Anticipated maximum speed of oncoming traffic, m/s."""
    return (0.725 * opp_speed_limit_kmh + 51.801) / 3.6


def queue_gap_ok(L_e: float, L_oing: float, v_oen: float, L2_s: float, L3_s: float | None = None) -> bool:
    L3_s = L2_s if L3_s is None else L3_s
    return L_e >= L_oing + (L2_s + L3_s) * v_oen


def variant_model(model: AccelModel, variant: Variant | str) -> tuple[AccelModel, bool]:
    """Model and speed-limit flag for a prediction variant."""
    variant = Variant(variant)
    if variant is Variant.AS_MODELED:
        return model, True
    if variant is Variant.LAMBDA_ONE:
        return model.with_lambda(1.0), True
    return model.with_lambda(1.0), False


def _cap(ctx: OvertakeContext, limited: bool) -> float | None:
    return max_overtaking_speed(ctx.speed_limit) if limited else None


def _crossing(states: list[MotionState], f) -> MotionState:
    """State at which ``f`` first reaches zero, linear within the last Euler step."""
    q = states[-1]
    if len(states) == 1:
        return q
    p = states[-2]
    fp, fq = f(p), f(q)
    w = 0.0 if fq == fp else min(max(-fp / (fq - fp), 0.0), 1.0)
    return MotionState(p.t + (q.t - p.t) * w, p.v + (q.v - p.v) * w, p.s + (q.s - p.s) * w)


def _constant_state(a: float, start: MotionState, cap: float | None, t: float) -> MotionState:
    """Exact state under constant acceleration, clipped to ``[0, cap]``."""
    tau = t - start.t
    v0 = start.v
    if a > 0 and cap is not None:
        t_lim = max((cap - v0) / a, 0.0)
    elif a < 0:
        t_lim = v0 / -a
    else:
        t_lim = math.inf
    if tau <= t_lim:
        return MotionState(t, v0 + a * tau, start.s + v0 * tau + 0.5 * a * tau * tau)
    v_lim = v0 + a * t_lim
    s_lim = start.s + v0 * t_lim + 0.5 * a * t_lim * t_lim
    return MotionState(t, v_lim, s_lim + v_lim * (tau - t_lim))


def _advance_until(model, start: MotionState, cap, G, dt, f) -> MotionState:
    """First state along the ego profile where ``f(state) >= 0``.

    The constant model is solved on its closed-form profile; the others are
    integrated with Forward Euler.
    """
    if f(start) >= 0:
        return start
    if model.kind is ModelKind.CONSTANT:
        a = acceleration(model, start.v, G)

        def g(t):
            return f(_constant_state(a, start, cap, t))

        lo = start.t
        while True:
            hi = lo + 1.0
            if hi - start.t > TIME_CEILING:
                raise NoConvergence(f"relative gain not reached within {TIME_CEILING:.0f} s")
            if g(hi) >= 0:
                break
            lo = hi
        t = brentq(g, lo, hi, xtol=1e-12, rtol=1e-12)
        return _constant_state(a, start, cap, t)
    steps = int(math.ceil(TIME_CEILING / dt))
    try:
        states = integrate_profile(
            model, start.v, cap, G, dt, lambda st: f(st) >= 0,
            max_steps=steps, t0=start.t, s0=start.s,
        )
    except DivergenceError:
        raise NoConvergence(f"relative gain not reached within {TIME_CEILING:.0f} s") from None
    return _crossing(states, f)


def _pnr_state(ctx: OvertakeContext, model: AccelModel, limited: bool, dt: float) -> MotionState:
    cap = _cap(ctx, limited)
    if cap is not None and ctx.v_oen >= cap - ctx.safety.margin:
        raise LeadTooFast(
            f"lead speed {ctx.v_oen * 3.6:.1f} km/h leaves no headroom below the "
            f"{cap * 3.6:.1f} km/h overtaking cap"
        )
    v0 = min(ctx.v0, cap) if cap is not None else ctx.v0
    L1, _, _ = static_lengths(ctx)
    target = L1 + 0.5 * (ctx.L_oen + ctx.L_oing)

    def gap(st):
        return st.s - ctx.v_oen * st.t - target

    return _advance_until(model, MotionState(0.0, v0, 0.0), cap, ctx.G, dt, gap)


def predict_pnr(ctx: OvertakeContext, model: AccelModel, limited: bool = True, dt: float = DEFAULT_DT) -> PnrPoint:
    """Time and ego distance until the vehicle centers align."""
    st = _pnr_state(ctx, model, limited, dt)
    return PnrPoint(st.t, st.s, st.v)


def _rest(ctx, model, limited, dt, pnr: MotionState) -> tuple[float, float]:
    cap = _cap(ctx, limited)
    _, _, L_tot = static_lengths(ctx)
    target = L_tot
    v_oen = ctx.v_oen

    def gain(st):
        return st.s - v_oen * st.t

    if not ctx.queue_active:
        end = _advance_until(model, pnr, cap, ctx.G, dt, lambda st: gain(st) - target)
        return end.t - pnr.t, end.v

    # queued second lead: finish at the lead's speed, braking at a fixed rate
    sl = ctx.second_lead
    s = ctx.safety
    if not queue_gap_ok(sl.gap, ctx.L_oing, v_oen, s.L2_s, s.L3_s):
        raise QueueGapInfeasible(f"gap {sl.gap:.1f} m between leads too small to reeve in")
    slack = sl.gap - (ctx.L_oing + (s.L2_s + s.L3_s) * v_oen)
    d = s.decel

    def brake_margin(st):
        dv = max(st.v - v_oen, 0.0)
        return gain(st) + dv * dv / (2 * d) - target

    if brake_margin(pnr) > slack:
        raise QueueGapInfeasible("cannot slow to the queue speed before reaching the second lead")
    onset = _advance_until(model, pnr, cap, ctx.G, dt, brake_margin)
    dv = max(onset.v - v_oen, 0.0)
    return onset.t - pnr.t + dv / d, v_oen


def rest_of_maneuver(ctx: OvertakeContext, model: AccelModel, limited: bool = True, dt: float = DEFAULT_DT):
    """Time from the PNR to the end of the maneuver, and the final ego speed."""
    pnr = _pnr_state(ctx, model, limited, dt)
    return _rest(ctx, model, limited, dt, pnr)


def required_sight_distance(
    ctx: OvertakeContext, model: AccelModel, limited: bool = True, dt: float = DEFAULT_DT
) -> PsdResult:
    pnr = _pnr_state(ctx, model, limited, dt)
    t_rest, v_end = _rest(ctx, model, limited, dt, pnr)
    L1, L2, L_tot = static_lengths(ctx)
    v_opp = opposing_speed(ctx.opp_speed_limit)
    d_rest = L2 + 0.5 * ctx.L_oen + 0.5 * ctx.L_oing + ctx.v_oen * t_rest
    L_sm = ctx.safety.Lsm_s * (v_opp + v_end)
    d_opp = v_opp * t_rest
    d_oen = ctx.v_oen * (pnr.t + t_rest)
    return PsdResult(
        t_pnr=pnr.t,
        d_pnr=pnr.s,
        t_rest=t_rest,
        d_rest=d_rest,
        v_end=v_end,
        L_sm=L_sm,
        d_opp=d_opp,
        d_s_min=d_rest + L_sm + d_opp,
        L1=L1,
        L2=L2,
        L_tot=L_tot,
        d_oen=d_oen,
        d_tot=L_tot + d_oen,
        v_opp_max=v_opp,
    )


def predict_variant(ctx: OvertakeContext, model: AccelModel, variant: Variant | str, dt: float = DEFAULT_DT) -> PsdResult:
    m, limited = variant_model(model, variant)
    return required_sight_distance(ctx, m, limited=limited, dt=dt)


def with_safety(ctx: OvertakeContext, **changes) -> OvertakeContext:
    return replace(ctx, safety=replace(ctx.safety, **changes))
