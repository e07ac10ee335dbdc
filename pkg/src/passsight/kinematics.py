"""Longitudinal acceleration models and speed/distance integration.

Three acceleration laws of increasing complexity are supported:

* ``CONSTANT``: ``a_const - g*G``
* ``LDM`` (linear decay): ``a_max - g*G - (a_max / v_e) * v``
* ``DYNAMIC``: ``(F_A - F_R) / m`` with engine/slip-limited driving force

Every law is scaled by a throttle coefficient ``lambda`` that represents
drivers not flooring the pedal. Grades are dimensionless fractions
(``0.114`` for an 11.4 % slope).
"""

from __future__ import annotations

import enum
import math
from collections.abc import Callable
from dataclasses import dataclass, field, replace

G_ACCEL = 9.81


class ModelKind(str, enum.Enum):
    CONSTANT = "constant"
    LDM = "ldm"
    DYNAMIC = "dynamic"


class DivergenceError(RuntimeError):
    """The integration stop condition was not met within the step ceiling."""


@dataclass(frozen=True)
class VehicleParams:
    m: float = 2300.0
    P: float = 182_700.0
    mu: float = 1.495
    eta: float = 1.0
    beta: float = 0.905
    # not published; chosen so that m_t*g*mu/m is the ~8 m/s^2 low-speed plateau
    m_t: float = 1254.0
    A_f: float = 2.54
    c_w: float = 0.381
    rho_air: float = 1.204
    C_r: float = 5.98e-12
    v_wind: float = 0.0
    L: float = 5.0

    def __post_init__(self):
        for name in ("m", "P", "mu", "eta", "beta", "m_t", "A_f", "c_w", "rho_air", "L"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.C_r < 0 or self.v_wind < 0:
            raise ValueError("C_r and v_wind must be non-negative")
        if self.m_t > self.m:
            raise ValueError("m_t cannot exceed m")


@dataclass(frozen=True)
class AccelModel:
    kind: ModelKind = ModelKind.CONSTANT
    a_const: float = 3.0
    a_max: float = 7.8
    v_e: float = 41.85
    params: VehicleParams = field(default_factory=VehicleParams)
    lam: float = 0.8

    def __post_init__(self):
        object.__setattr__(self, "kind", ModelKind(self.kind))
        if not 0 < self.lam <= 1:
            raise ValueError(f"lambda must lie in (0, 1], got {self.lam}")
        if self.v_e <= 0:
            raise ValueError("v_e must be positive")

    def with_lambda(self, lam: float) -> AccelModel:
        return replace(self, lam=lam)


@dataclass(frozen=True)
class MotionState:
    t: float
    v: float
    s: float


def driving_force(params: VehicleParams, v: float) -> float:
    """Tractive force, the lesser of the engine-power and wheel-slip limits."""
    slip = params.m_t * G_ACCEL * params.mu
    if v <= 0:
        return slip
    return min(params.eta * params.beta * params.P / v, slip)


def resistant_force(params: VehicleParams, v: float, G: float) -> float:
    aero = 0.5 * params.A_f * params.c_w * params.rho_air * (v + params.v_wind) ** 2
    rolling = G_ACCEL * params.m * (1.0 - G) * params.C_r
    incline = G_ACCEL * params.m * G
    return aero + rolling + incline


def crossover_speed(params: VehicleParams) -> float:
    """Speed at which the engine-power limit takes over from wheel slip."""
    return params.eta * params.beta * params.P / (params.m_t * G_ACCEL * params.mu)


def acceleration(model: AccelModel, v: float, G: float) -> float:
    if v < 0:
        raise ValueError("speed must be non-negative")
    if model.kind is ModelKind.CONSTANT:
        a = model.a_const - G_ACCEL * G
    elif model.kind is ModelKind.LDM:
        a = model.a_max - G_ACCEL * G - (model.a_max / model.v_e) * v
    else:
        p = model.params
        a = (driving_force(p, v) - resistant_force(p, v, G)) / p.m
    return model.lam * a


def max_overtaking_speed(speed_limit_kmh: float) -> float:
    """Overtaking speed cap in m/s: limit plus 5 %, never above 105 km/h."""
    return min(1.05 * speed_limit_kmh, 105.0) / 3.6


def integrate_profile(
    model: AccelModel,
    v0: float,
    v_cap: float | None,
    G: float,
    dt: float,
    stop: Callable[[MotionState], bool],
    max_steps: int = 1_000_000,
    t0: float = 0.0,
    s0: float = 0.0,
) -> list[MotionState]:
    """Forward Euler integration until ``stop`` is satisfied.

    ``v[k+1] = min(v_cap, v[k] + a(v[k]) * dt)`` and ``s[k+1] = s[k] + v[k] * dt``.
    Speed never drops below zero. The returned list ends with the first state
    for which ``stop`` holds.
    """
    if v0 < 0:
        raise ValueError("v0 must be non-negative")
    if dt <= 0:
        raise ValueError("dt must be positive")
    state = MotionState(t0, v0, s0)
    out = [state]
    if stop(state):
        return out
    t, v, s = t0, v0, s0
    for k in range(1, max_steps + 1):
        a = acceleration(model, v, G)
        v_next = v + a * dt
        if v_cap is not None and v_next > v_cap:
            v_next = v_cap
        if v_next < 0:
            v_next = 0.0
        s = s + v * dt
        t = t0 + k * dt
        v = v_next
        state = MotionState(t, v, s)
        out.append(state)
        if stop(state):
            return out
    raise DivergenceError(f"stop condition not reached within {max_steps} steps")


def constant_closed_form(v0: float, a: float, v_cap: float, t: float) -> float:
    """Distance after ``t`` seconds under constant acceleration up to a speed cap."""
    if a <= 0:
        raise ValueError("closed form needs a > 0")
    if v0 > v_cap:
        raise ValueError("v0 must not exceed v_cap")
    t_cap = (v_cap - v0) / a
    if t <= t_cap:
        return v0 * t + 0.5 * a * t * t
    return v0 * t_cap + 0.5 * a * t_cap * t_cap + v_cap * (t - t_cap)


def distance_at(states: list[MotionState], t: float) -> float:
    """Distance at time ``t`` on a piecewise-linear Euler trajectory."""
    for a, b in zip(states, states[1:]):
        if a.t <= t <= b.t:
            w = (t - a.t) / (b.t - a.t)
            return a.s + (b.s - a.s) * w
    if math.isclose(t, states[-1].t):
        return states[-1].s
    raise ValueError(f"t={t} outside trajectory")
