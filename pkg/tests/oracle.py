"""Independent fine-step two-vehicle simulation used as the reference for the
prediction engine.

Nothing here imports the package: the acceleration laws, the speed cap and the
opposing-speed model are written out again, and the vehicles are tracked by
their absolute center positions instead of the relative gain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

G = 9.81
# vehicle parameter table, plus the calibrated tractive-axle mass
M, P, MU, ETA, BETA, M_T = 2300.0, 182_700.0, 1.495, 1.0, 0.905, 1254.0
A_F, C_W, RHO, C_R = 2.54, 0.381, 1.204, 5.98e-12


def accel(kind: str, v: float, grade: float, lam: float) -> float:
    if kind == "constant":
        a = 3.0 - G * grade
    elif kind == "ldm":
        a = 7.8 - G * grade - 7.8 / 41.85 * v
    else:
        slip = M_T * G * MU
        f_a = slip if v <= 0 else min(ETA * BETA * P / v, slip)
        f_r = 0.5 * A_F * C_W * RHO * v * v + G * M * (1 - grade) * C_R + G * M * grade
        a = (f_a - f_r) / M
    return lam * a


@dataclass
class OracleResult:
    t_pnr: float
    t_rest: float
    v_end: float
    d_s_min: float


def two_vehicle(
    kind: str,
    v0: float,
    v_oen: float,
    L_oing: float = 5.0,
    L_oen: float = 5.0,
    grade: float = 0.0,
    limit: float = 100.0,
    opp_limit: float = 100.0,
    lam: float = 0.8,
    limited: bool = True,
    L1_s: float = 1.0,
    L2_s: float = 1.0,
    Lsm_s: float = 1.5,
    decel: float = 3.3,
    queue: bool = False,
    dt: float = 1e-3,
    t_max: float = 120.0,
) -> OracleResult | None:
    """Simulate ego and lead until the ego rear clears the lead front by L2.

    With ``queue`` the ego brakes at ``decel`` as late as possible so it ends
    at the lead's speed exactly when the clearance is reached. Returns None if
    the maneuver does not finish within ``t_max``.
    """
    cap = min(1.05 * limit, 105.0) / 3.6 if limited else math.inf
    v = min(v0, cap)
    x_e = 0.0
    x_l = L1_s * v_oen + 0.5 * (L_oen + L_oing)
    clear_at = L2_s * v_oen + 0.5 * (L_oen + L_oing)  # x_e - x_l at maneuver end
    t, t_pnr, braking = 0.0, None, False

    def done(t_end, v_end):
        return _compose(t_pnr, t_end - t_pnr, v_end, v_oen, L_oen, L_oing, L2_s, Lsm_s, opp_limit)

    while t < t_max:
        rel = x_e - x_l
        if queue and t_pnr is not None and not braking:
            dv = max(v - v_oen, 0.0)
            braking = rel + dv * dv / (2 * decel) >= clear_at
        if braking:
            if v - decel * dt <= v_oen:
                return done(t + (v - v_oen) / decel, v_oen)
            a = -decel
        else:
            a = accel(kind, v, grade, lam)
        v_new = max(min(v + a * dt, cap), 0.0)
        x_e_new, x_l_new = x_e + v * dt, x_l + v_oen * dt
        rel_new = x_e_new - x_l_new
        if t_pnr is None and rel < 0 <= rel_new:
            t_pnr = t + dt * -rel / (rel_new - rel)
        if not queue and t_pnr is not None and rel < clear_at <= rel_new:
            w = (clear_at - rel) / (rel_new - rel)
            return done(t + dt * w, v + (v_new - v) * w)
        x_e, x_l, v = x_e_new, x_l_new, v_new
        t += dt
    return None


def _compose(t_pnr, t_rest, v_end, v_oen, L_oen, L_oing, L2_s, Lsm_s, opp_limit) -> OracleResult:
    v_opp = (0.725 * opp_limit + 51.801) / 3.6
    d_rest = L2_s * v_oen + 0.5 * (L_oen + L_oing) + v_oen * t_rest
    return OracleResult(t_pnr, t_rest, v_end, d_rest + Lsm_s * (v_opp + v_end) + v_opp * t_rest)
