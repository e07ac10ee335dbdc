"""Arc-length parameterized road routes.

A route is a single directed polyline sampled at a fixed station interval.
Each station carries the attributes the prediction and visibility code need:
position, heading, grade, lane count, speed limit and the lateral offset to
the opposite lane center.
"""

from __future__ import annotations

import csv
import math
from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

ROUTE_COLUMNS = (
    "s", "x", "y", "z",
    "heading_x", "heading_y", "heading_z",
    "grade", "lanes_per_dir", "speed_limit_kmh",
    "opp_offset_x", "opp_offset_y", "opp_offset_z",
)

MAX_GRADE = 0.15


class RouteError(ValueError):
    """Raised for malformed route files or invalid route data."""


@dataclass(frozen=True)
class RoadStation:
    s: float
    position: tuple[float, float, float]
    heading: tuple[float, float, float]
    grade: float
    lanes_per_direction: int
    speed_limit: float  # km/h
    opposite_lane_offset: tuple[float, float, float]

    @property
    def own_lane_center(self) -> np.ndarray:
        # two-lane road: own lane mirrors the opposite lane about the centerline
        return np.asarray(self.position) - np.asarray(self.opposite_lane_offset)

    @property
    def opposite_lane_center(self) -> np.ndarray:
        return np.asarray(self.position) + np.asarray(self.opposite_lane_offset)


@dataclass(frozen=True)
class RoadRoute:
    stations: tuple[RoadStation, ...]
    intersections: tuple[float, ...] = ()
    route_id: str = "route"
    _s: np.ndarray = field(init=False, repr=False, compare=False)
    _pos: np.ndarray = field(init=False, repr=False, compare=False)
    _off: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.stations:
            raise RouteError("route has no stations")
        object.__setattr__(self, "stations", tuple(self.stations))
        object.__setattr__(self, "intersections", tuple(float(x) for x in self.intersections))
        for name, rows in (
            ("_s", [st.s for st in self.stations]),
            ("_pos", [st.position for st in self.stations]),
            ("_off", [st.opposite_lane_offset for st in self.stations]),
        ):
            arr = np.array(rows, dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        _validate(self)

    @property
    def total_length(self) -> float:
        return float(self._s[-1])

    @property
    def station_interval(self) -> float:
        if len(self.stations) < 2:
            return 0.0
        return float(self._s[1] - self._s[0])

    @property
    def s_values(self) -> np.ndarray:
        return self._s

    @property
    def positions(self) -> np.ndarray:
        return self._pos

    @property
    def offsets(self) -> np.ndarray:
        return self._off


def _validate(route: RoadRoute) -> None:
    s = route._s
    if s[0] < 0:
        raise RouteError("arc length must be non-negative")
    if len(s) > 1:
        steps = np.diff(s)
        if np.any(steps <= 0):
            idx = int(np.argmax(steps <= 0)) + 1
            raise RouteError(f"non-monotone arc length at station {idx} (s={s[idx]})")
        if not np.allclose(steps, steps[0], rtol=1e-6, atol=1e-6):
            raise RouteError("station interval must be constant within a route")
    for i, st in enumerate(route.stations):
        norm = math.sqrt(sum(h * h for h in st.heading))
        if abs(norm - 1.0) > 1e-6:
            raise RouteError(f"station {i}: heading is not a unit vector (|h|={norm:.6f})")
        if abs(st.grade) > MAX_GRADE:
            raise RouteError(f"station {i}: grade {st.grade} exceeds {MAX_GRADE}")
        if st.lanes_per_direction < 1:
            raise RouteError(f"station {i}: lanes_per_direction must be >= 1")
    if list(route.intersections) != sorted(route.intersections):
        raise RouteError("intersections must be sorted")
    for x in route.intersections:
        if not 0 <= x <= route.total_length:
            raise RouteError(f"intersection at s={x} outside route [0, {route.total_length}]")


def _check_range(route: RoadRoute, s: float) -> None:
    if not (0.0 <= s <= route.total_length) or math.isnan(s):
        raise RouteError(f"s={s} outside route range [0, {route.total_length}]")


def _lerp3(a, b, w):
    return tuple(float(x + (y - x) * w) for x, y in zip(a, b))


def station_at(route: RoadRoute, s: float) -> RoadStation:
    """Interpolated station at arc length ``s``.

    Position, heading, grade and lane offset are interpolated linearly between
    the bracketing stations. Lane count and speed limit are step functions and
    come from the nearest-lower station.
    """
    _check_range(route, s)
    i = bisect_right(route._s, s) - 1
    i = min(max(i, 0), len(route.stations) - 1)
    lo = route.stations[i]
    if lo.s == s or i == len(route.stations) - 1:
        return lo
    hi = route.stations[i + 1]
    w = (s - lo.s) / (hi.s - lo.s)
    h = np.array(_lerp3(lo.heading, hi.heading, w))
    n = np.linalg.norm(h)
    heading = tuple(float(v) for v in (h / n if n > 0 else lo.heading))
    return RoadStation(
        s=float(s),
        position=_lerp3(lo.position, hi.position, w),
        heading=heading,
        grade=float(lo.grade + (hi.grade - lo.grade) * w),
        lanes_per_direction=lo.lanes_per_direction,
        speed_limit=lo.speed_limit,
        opposite_lane_offset=_lerp3(lo.opposite_lane_offset, hi.opposite_lane_offset, w),
    )


def point_ahead(route: RoadRoute, s: float) -> RoadStation:
    """Like :func:`station_at` but extends past the route end along the last tangent."""
    if s <= route.total_length:
        return station_at(route, s)
    last = route.stations[-1]
    ds = s - last.s
    pos = tuple(p + h * ds for p, h in zip(last.position, last.heading))
    return RoadStation(
        s=float(s),
        position=pos,
        heading=last.heading,
        grade=last.grade,
        lanes_per_direction=last.lanes_per_direction,
        speed_limit=last.speed_limit,
        opposite_lane_offset=last.opposite_lane_offset,
    )


def distance_to_next_intersection(route: RoadRoute, s: float) -> float | None:
    _check_range(route, s)
    i = bisect_left(route.intersections, s)
    if i == len(route.intersections):
        return None
    return route.intersections[i] - s


def intersections_path(route_path: str | Path) -> Path:
    p = Path(route_path)
    return p.with_name(p.stem + ".intersections.csv")


def load_route(path: str | Path, intersections: str | Path | None = None, route_id: str | None = None) -> RoadRoute:
    """Read a route CSV and its optional ``<stem>.intersections.csv`` sidecar."""
    path = Path(path)
    stations = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in ROUTE_COLUMNS if c not in header]
        if missing:
            raise RouteError(f"{path}: missing column(s) {', '.join(missing)}")
        prev_s = None
        for lineno, row in enumerate(reader, start=2):
            try:
                f = {c: float(row[c]) for c in ROUTE_COLUMNS if c not in ("lanes_per_dir",)}
                lanes = int(row["lanes_per_dir"])
            except (TypeError, ValueError) as exc:
                raise RouteError(f"{path}:{lineno}: malformed row ({exc})") from None
            if prev_s is not None and f["s"] <= prev_s:
                raise RouteError(f"{path}:{lineno}: non-monotone arc length (s={f['s']} after {prev_s})")
            prev_s = f["s"]
            stations.append(RoadStation(
                s=f["s"],
                position=(f["x"], f["y"], f["z"]),
                heading=(f["heading_x"], f["heading_y"], f["heading_z"]),
                grade=f["grade"],
                lanes_per_direction=lanes,
                speed_limit=f["speed_limit_kmh"],
                opposite_lane_offset=(f["opp_offset_x"], f["opp_offset_y"], f["opp_offset_z"]),
            ))
    inter_path = Path(intersections) if intersections else intersections_path(path)
    inters: list[float] = []
    if inter_path.exists():
        with inter_path.open(newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if "s" not in (reader.fieldnames or []):
                raise RouteError(f"{inter_path}: missing column s")
            for lineno, row in enumerate(reader, start=2):
                try:
                    inters.append(float(row["s"]))
                except (TypeError, ValueError):
                    raise RouteError(f"{inter_path}:{lineno}: malformed row") from None
    try:
        return RoadRoute(tuple(stations), tuple(inters), route_id or path.stem)
    except RouteError as exc:
        raise RouteError(f"{path}: {exc}") from None


def write_route(route: RoadRoute, path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(ROUTE_COLUMNS)
        for st in route.stations:
            w.writerow([
                repr(st.s), *map(repr, st.position), *map(repr, st.heading),
                repr(st.grade), st.lanes_per_direction, repr(st.speed_limit),
                *map(repr, st.opposite_lane_offset),
            ])
    with intersections_path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["s"])
        for x in route.intersections:
            w.writerow([repr(x)])
    return path


def route_from_polyline(
    points,
    interval: float = 10.0,
    lane_width: float = 3.5,
    speed_limit=100.0,
    lanes_per_direction=1,
    intersections=(),
    route_id: str = "route",
) -> RoadRoute:
    """Resample a 3D polyline at a constant arc-length interval.

    ``speed_limit`` and ``lanes_per_direction`` may be scalars or callables of
    arc length. The opposite lane is taken to lie on the left of travel
    (right-hand traffic) one lane width from the centerline, as its center.
    """
    pts = np.asarray(points, dtype=float)
    if pts.shape[1] == 2:
        pts = np.column_stack([pts, np.zeros(len(pts))])
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    keep = np.concatenate([[True], seg > 1e-9])
    pts = pts[keep]
    cum = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(pts, axis=0), axis=1))])
    n = int(math.floor(cum[-1] / interval + 1e-9))
    s_new = np.arange(n + 1) * interval
    xyz = np.column_stack([np.interp(s_new, cum, pts[:, k]) for k in range(3)])
    limit_fn = speed_limit if callable(speed_limit) else (lambda _s: speed_limit)
    lanes_fn = lanes_per_direction if callable(lanes_per_direction) else (lambda _s: lanes_per_direction)

    stations = []
    for i, s in enumerate(s_new):
        j0, j1 = (i, i + 1) if i + 1 < len(s_new) else (i - 1, i)
        d = xyz[j1] - xyz[j0]
        heading = d / np.linalg.norm(d)
        run = math.hypot(d[0], d[1])
        grade = float(d[2] / run) if run > 0 else 0.0
        left = np.array([-heading[1], heading[0], 0.0])
        nl = np.linalg.norm(left)
        left = left / nl if nl > 0 else np.array([0.0, 1.0, 0.0])
        stations.append(RoadStation(
            s=float(s),
            position=tuple(float(v) for v in xyz[i]),
            heading=tuple(float(v) for v in heading),
            grade=grade,
            lanes_per_direction=int(lanes_fn(s)),
            speed_limit=float(limit_fn(s)),
            opposite_lane_offset=tuple(float(v) for v in left * (lane_width / 2.0)),
        ))
    inters = tuple(sorted(x for x in intersections if 0 <= x <= s_new[-1]))
    return RoadRoute(tuple(stations), inters, route_id)
