"""Synthetic road networks and surface models for tests and demos.

The default network is a single route built from straights and arcs over a
rolling terrain with one hill and patches of forest on the inside of the
curves. The road corridor is flattened into the surface so that the road
itself never occludes the eye point.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.spatial import cKDTree

from .road import RoadRoute, route_from_polyline
from .visibility import DsmGrid


def polyline_from_segments(segments, start=(0.0, 0.0), heading_deg=0.0, step=1.0) -> np.ndarray:
    """2D centerline from ``("straight", length)`` and ``("arc", radius, angle_deg)`` pieces.

    Positive arc angles turn left. Arcs may carry a fourth element (forest
    clearance) that :func:`hill_curve_network` uses; it is ignored here.
    """
    x, y = start
    th = math.radians(heading_deg)
    pts = [(x, y)]
    for seg in segments:
        if seg[0] == "straight":
            n = max(int(math.ceil(seg[1] / step)), 1)
            ds = seg[1] / n
            for _ in range(n):
                x += ds * math.cos(th)
                y += ds * math.sin(th)
                pts.append((x, y))
        elif seg[0] == "arc":
            radius, ang = seg[1], math.radians(seg[2])
            length = abs(ang) * radius
            n = max(int(math.ceil(length / step)), 1)
            dth = ang / n
            sign = 1.0 if ang > 0 else -1.0
            cx = x - sign * radius * math.sin(th)
            cy = y + sign * radius * math.cos(th)
            for _ in range(n):
                th += dth
                x = cx + sign * radius * math.sin(th)
                y = cy - sign * radius * math.cos(th)
                pts.append((x, y))
        else:
            raise ValueError(f"unknown segment type {seg[0]!r}")
    return np.array(pts)


def flat_network(length: float = 20.0, interval: float = 10.0, look_ahead: float = 1300.0,
                 spacing: float = 2.0, height: float = 0.0):
    """Straight route on a flat surface, with coverage well past its end."""
    pts = np.array([[0.0, 0.0, height], [length, 0.0, height]])
    route = route_from_polyline(pts, interval=interval, route_id="flat")
    x0, y0 = -50.0, -50.0
    ncols = int(math.ceil((length + look_ahead + 100.0) / spacing))
    nrows = int(math.ceil(100.0 / spacing))
    dsm = DsmGrid((x0, y0), spacing, np.full((nrows, ncols), height))
    return route, dsm


def _terrain(x, y, hills):
    z = np.zeros_like(x)
    for hx, hy, amp, sigma in hills:
        z += amp * np.exp(-((x - hx) ** 2 + (y - hy) ** 2) / (2 * sigma ** 2))
    return z


DEFAULT_SEGMENTS = (
    ("straight", 600.0),
    ("arc", 260.0, 90.0),
    ("straight", 900.0),
    ("arc", 380.0, -110.0),
    ("straight", 500.0),
    ("arc", 320.0, 60.0),
    ("straight", 250.0),
    # gentle curve whose forest sits far enough back to leave ~450 m of sight
    ("arc", 2000.0, 22.0, 16.0),
    ("straight", 300.0),
)


def hill_curve_network(
    segments=DEFAULT_SEGMENTS,
    interval: float = 1.0,
    spacing: float = 2.0,
    look_ahead: float = 1300.0,
    hill_height: float = 14.0,
    hill_sigma: float = 260.0,
    tree_height: float = 15.0,
    forest_clearance: float = 9.0,
    intersections=(1250.0, 2900.0),
    second_lane=(3300.0, 3700.0),
):
    """Curvy route with a hill crest and forested curve interiors.

    Returns ``(route, dsm)``. The route has 100 km/h limits except a 70 km/h
    stretch through the first curve, and a second lane per direction over
    ``second_lane`` (arc-length interval).
    """
    segs = list(segments) + [("straight", look_ahead)]
    plan = polyline_from_segments(segs, step=interval / 2)
    # hill centered on the long straight after the first curve
    cum = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(plan, axis=0), axis=1))])
    s_hill = segments[0][1] + math.radians(abs(segments[1][2])) * segments[1][1] + 0.5 * segments[2][1]
    hx, hy = (np.interp(s_hill, cum, plan[:, k]) for k in range(2))
    hills = [(hx, hy, hill_height, hill_sigma)]

    road_z = _terrain(plan[:, 0], plan[:, 1], hills)
    pts3 = np.column_stack([plan, road_z])
    length = sum(
        s[1] if s[0] == "straight" else math.radians(abs(s[2])) * s[1] for s in segments
    )

    def speed_limit(s):
        first_curve = segments[0][1], segments[0][1] + math.radians(abs(segments[1][2])) * segments[1][1]
        return 70.0 if first_curve[0] <= s < first_curve[1] else 100.0

    def lanes(s):
        return 2 if second_lane and second_lane[0] <= s < second_lane[1] else 1

    full = route_from_polyline(pts3, interval=interval, speed_limit=speed_limit,
                               lanes_per_direction=lanes, route_id="hill_curve")
    n_keep = int(math.floor(length / interval + 1e-9)) + 1
    route = RoadRoute(full.stations[:n_keep], tuple(x for x in intersections if x <= length), "hill_curve")

    # surface model
    margin = 120.0
    xmin, ymin = plan.min(axis=0) - margin
    xmax, ymax = plan.max(axis=0) + margin
    ncols = int(math.ceil((xmax - xmin) / spacing))
    nrows = int(math.ceil((ymax - ymin) / spacing))
    xs = xmin + (np.arange(ncols) + 0.5) * spacing
    ys = ymin + (np.arange(nrows) + 0.5) * spacing
    X, Y = np.meshgrid(xs, ys)
    Z = _terrain(X, Y, hills)

    # cells farther than the bound get dist=inf, which keeps the query fast
    reach = 2.0 * max([forest_clearance] + [s[3] for s in segs if s[0] == "arc" and len(s) > 3])
    tree = cKDTree(plan)
    dist, idx = tree.query(np.column_stack([X.ravel(), Y.ravel()]), distance_upper_bound=reach)
    dist = dist.reshape(X.shape)
    idx = idx.reshape(X.shape)
    corridor = dist <= 6.0
    Z[corridor] = road_z[idx[corridor]]

    # forest on the inside of every arc, starting a clearance away from the centerline
    th = 0.0
    x, y = 0.0, 0.0
    for seg in segs[:-1]:
        if seg[0] == "arc":
            radius, ang = seg[1], math.radians(seg[2])
            sign = 1.0 if ang > 0 else -1.0
            cx = x - sign * radius * math.sin(th)
            cy = y + sign * radius * math.cos(th)
            r_cell = np.hypot(X - cx, Y - cy)
            # angular sector spanned by the arc, widened a little
            a0 = math.atan2(y - cy, x - cx)
            rel = np.angle(np.exp(1j * (np.arctan2(Y - cy, X - cx) - a0)))
            in_sector = (sign * rel >= -0.15) & (sign * rel <= abs(ang) + 0.15)
            clearance = seg[3] if len(seg) > 3 else forest_clearance
            forest = in_sector & (r_cell < radius - clearance) & (r_cell > radius * 0.35)
            forest &= dist > clearance
            Z[forest] = Z[forest] + tree_height
            th += ang
            x = cx + sign * radius * math.sin(th)
            y = cy - sign * radius * math.cos(th)
        else:
            x += seg[1] * math.cos(th)
            y += seg[1] * math.sin(th)
    return route, DsmGrid((xmin, ymin), spacing, Z)
