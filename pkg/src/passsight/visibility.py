"""Available sight distance along the opposite lane by raycasting a DSM.

Rays run from an eye point 1 m above the own-lane center to targets 1 m above
the opposite-lane center at ``d_r, 2*d_r, ...`` ahead. The available sight
distance is the last target reached before the first obstructed ray. A ray is
obstructed when any sample along it lies at or below the bilinearly
interpolated surface height; samples are spaced ``min(cell size, 1 m)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

from .road import RoadRoute

EYE_HEIGHT = 1.0
TARGET_HEIGHT = 1.0
DEFAULT_MAX_RANGE = 1200.0
DEFAULT_STATION_INTERVAL = 10.0
DEFAULT_D_R = 10.0
SHORT_SEGMENT = 50.0


class CoverageError(ValueError):
    """A point lies outside the DSM footprint."""


@dataclass(frozen=True, eq=False)
class DsmGrid:
    """Regular heightfield. ``origin`` is the lower-left corner of the grid;
    ``heights[i, j]`` is the value at the center of the cell in row ``i``
    (counted from the south) and column ``j``. NaN marks missing data."""

    origin: tuple[float, float]
    spacing: float
    heights: np.ndarray

    def __post_init__(self):
        h = np.ascontiguousarray(self.heights, dtype=np.float64)
        if h.ndim != 2 or h.size == 0:
            raise ValueError("heights must be a non-empty 2D array")
        if not self.spacing > 0:
            raise ValueError("spacing must be positive")
        h.setflags(write=False)
        object.__setattr__(self, "heights", h)
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @property
    def extent(self) -> tuple[float, float, float, float]:
        nrows, ncols = self.heights.shape
        x0, y0 = self.origin
        return x0, y0, x0 + ncols * self.spacing, y0 + nrows * self.spacing

    def covers(self, x, y) -> np.ndarray:
        x0, y0, x1, y1 = self.extent
        x = np.asarray(x)
        y = np.asarray(y)
        return (x >= x0) & (x <= x1) & (y >= y0) & (y <= y1)

    def height_at(self, x, y) -> np.ndarray:
        """Bilinear height between cell centers; NaN outside the footprint."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        out = _bilinear_vec(self.heights, self.origin[0], self.origin[1], self.spacing, x.ravel(), y.ravel())
        return out.reshape(x.shape)


@njit(cache=True)
def _bilinear(h, x0, y0, cs, x, y):
    nrows, ncols = h.shape
    fx = (x - x0) / cs - 0.5
    fy = (y - y0) / cs - 0.5
    fx = max(fx, 0.0)
    fy = max(fy, 0.0)
    if fx > ncols - 1:
        fx = ncols - 1.0
    if fy > nrows - 1:
        fy = nrows - 1.0
    j = int(fx)
    i = int(fy)
    if j > ncols - 2:
        j = max(ncols - 2, 0)
    if i > nrows - 2:
        i = max(nrows - 2, 0)
    wx = fx - j
    wy = fy - i
    j1 = min(j + 1, ncols - 1)
    i1 = min(i + 1, nrows - 1)
    a = h[i, j] * (1.0 - wx) + h[i, j1] * wx
    b = h[i1, j] * (1.0 - wx) + h[i1, j1] * wx
    return a * (1.0 - wy) + b * wy


@njit(cache=True)
def _bilinear_vec(h, x0, y0, cs, xs, ys):
    nrows, ncols = h.shape
    out = np.empty(xs.shape[0])
    x1 = x0 + ncols * cs
    y1 = y0 + nrows * cs
    for k in range(xs.shape[0]):
        x = xs[k]
        y = ys[k]
        if x < x0 or x > x1 or y < y0 or y > y1:
            out[k] = np.nan
        else:
            out[k] = _bilinear(h, x0, y0, cs, x, y)
    return out


@njit(cache=True)
def _first_blocked(h, x0, y0, cs, step, eye, targets, tlen):
    """Index of the first obstructed ray and whether the scan was cut short.

    Returns ``(k, truncated)``: ``k == len(targets)`` when no ray is blocked.
    A ray touching missing coverage ends the scan with ``truncated`` set.
    """
    nrows, ncols = h.shape
    x1 = x0 + ncols * cs
    y1 = y0 + nrows * cs
    if not (x0 <= eye[0] <= x1 and y0 <= eye[1] <= y1):
        return 0, True
    for k in range(targets.shape[0]):
        tx = targets[k, 0]
        ty = targets[k, 1]
        tz = targets[k, 2]
        if not (x0 <= tx <= x1 and y0 <= ty <= y1):
            return k, True
        n = int(math.ceil(tlen[k] / step))
        n = max(n, 1)
        missing = False
        for i in range(n + 1):
            w = i / n
            px = eye[0] + (tx - eye[0]) * w
            py = eye[1] + (ty - eye[1]) * w
            pz = eye[2] + (tz - eye[2]) * w
            hz = _bilinear(h, x0, y0, cs, px, py)
            if hz != hz:
                missing = True
            elif pz <= hz:
                return k, False
        if missing:
            return k, True
    return targets.shape[0], False


def sample_step(dsm: DsmGrid) -> float:
    return min(dsm.spacing, 1.0)


def ray_obstructed(dsm: DsmGrid, start, end) -> bool:
    """True if the straight segment touches or passes below the surface."""
    p = np.asarray(start, dtype=float)
    q = np.asarray(end, dtype=float)
    if not (dsm.covers(p[0], p[1]) and dsm.covers(q[0], q[1])):
        raise CoverageError(f"ray {tuple(p)} -> {tuple(q)} leaves the DSM footprint")
    length = float(np.linalg.norm(q - p))
    n = max(int(math.ceil(length / sample_step(dsm))), 1)
    w = np.arange(n + 1) / n
    pts = p[None, :] + (q - p)[None, :] * w[:, None]
    hz = dsm.height_at(pts[:, 0], pts[:, 1])
    if np.isnan(hz).any():
        raise CoverageError("ray crosses cells without height data")
    return bool(np.any(pts[:, 2] <= hz))


def _lane_points(route: RoadRoute, s: np.ndarray, side: float, lift: float) -> np.ndarray:
    """Lane-center points at arc lengths ``s``; extrapolated past the route end."""
    st = route.stations
    s_ref = route.s_values
    pos = route.positions
    off = route.offsets
    s = np.asarray(s, dtype=float)
    out = np.empty((len(s), 3))
    inside = s <= s_ref[-1]
    for k in range(3):
        out[inside, k] = np.interp(s[inside], s_ref, pos[:, k]) + side * np.interp(s[inside], s_ref, off[:, k])
    if (~inside).any():
        ds = s[~inside] - s_ref[-1]
        head = np.asarray(st[-1].heading)
        out[~inside] = pos[-1] + side * off[-1] + ds[:, None] * head[None, :]
    out[:, 2] += lift
    return out


@dataclass(frozen=True)
class SightDistance:
    distance: float
    truncated: bool = False


def _n_rays(d_r: float, max_range: float) -> int:
    n = max_range / d_r
    k = int(round(n))
    if d_r <= 0 or abs(n - k) > 1e-9 or k < 1:
        raise ValueError(f"max_range {max_range} must be a positive multiple of d_r {d_r}")
    return k


def sight_distance_at(
    dsm: DsmGrid, route: RoadRoute, s: float, d_r: float = DEFAULT_D_R, max_range: float = DEFAULT_MAX_RANGE
) -> SightDistance:
    K = _n_rays(d_r, max_range)
    eye = _lane_points(route, np.array([s]), -1.0, EYE_HEIGHT)[0]
    ahead = s + np.arange(1, K + 1) * d_r
    targets = _lane_points(route, ahead, 1.0, TARGET_HEIGHT)
    tlen = np.linalg.norm(targets - eye[None, :], axis=1)
    k, truncated = _first_blocked(
        dsm.heights, dsm.origin[0], dsm.origin[1], dsm.spacing, sample_step(dsm),
        eye, np.ascontiguousarray(targets), tlen,
    )
    return SightDistance(float(k * d_r), bool(truncated))


@dataclass(frozen=True, eq=False)
class VisibilityTable:
    route_id: str
    station_interval: float
    d_r: float
    max_range: float
    s: np.ndarray
    d_s: np.ndarray
    truncated: np.ndarray = None
    total_length: float = None

    def __post_init__(self):
        s = np.asarray(self.s, dtype=float)
        d = np.asarray(self.d_s, dtype=float)
        tr = np.zeros(len(s), bool) if self.truncated is None else np.asarray(self.truncated, bool)
        if not (len(s) == len(d) == len(tr)) or len(s) == 0:
            raise ValueError("table columns must be non-empty and of equal length")
        if len(s) > 1 and np.any(np.diff(s) <= 0):
            raise ValueError("table stations must be strictly increasing")
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "d_s", d)
        object.__setattr__(self, "truncated", tr)
        if self.total_length is None:
            object.__setattr__(self, "total_length", float(s[-1]))

    def __eq__(self, other):
        if not isinstance(other, VisibilityTable):
            return NotImplemented
        return (
            self.route_id == other.route_id
            and self.station_interval == other.station_interval
            and self.d_r == other.d_r
            and self.max_range == other.max_range
            and self.total_length == other.total_length
            and np.array_equal(self.s, other.s)
            and np.array_equal(self.d_s, other.d_s)
            and np.array_equal(self.truncated, other.truncated)
        )

    def _bracket(self, s: float):
        if not (self.s[0] <= s <= self.s[-1]):
            raise ValueError(f"s={s} outside table range [{self.s[0]}, {self.s[-1]}]")
        i = int(np.searchsorted(self.s, s, side="right")) - 1
        i = min(i, len(self.s) - 1)
        return i, min(i + 1, len(self.s) - 1)

    def truncated_at(self, s: float) -> bool:
        i, j = self._bracket(s)
        if self.s[i] == s:
            return bool(self.truncated[i])
        return bool(self.truncated[i] or self.truncated[j])


def precompute_visibility(
    dsm: DsmGrid,
    route: RoadRoute,
    station_interval: float = DEFAULT_STATION_INTERVAL,
    d_r: float = DEFAULT_D_R,
    max_range: float = DEFAULT_MAX_RANGE,
) -> VisibilityTable:
    if not station_interval > 0:
        raise ValueError("station_interval must be positive")
    n = int(math.floor(route.total_length / station_interval + 1e-9))
    s_vals = np.arange(n + 1) * station_interval
    d = np.empty(len(s_vals))
    tr = np.zeros(len(s_vals), bool)
    for i, s in enumerate(s_vals):
        res = sight_distance_at(dsm, route, float(s), d_r, max_range)
        d[i] = res.distance
        tr[i] = res.truncated
    return VisibilityTable(route.route_id, station_interval, d_r, max_range, s_vals, d, tr, route.total_length)


def available_sight(table: VisibilityTable, s: float) -> float:
    i, j = table._bracket(s)
    if i == j or table.s[i] == s:
        return float(table.d_s[i])
    w = (s - table.s[i]) / (table.s[j] - table.s[i])
    return float(table.d_s[i] + (table.d_s[j] - table.d_s[i]) * w)


@dataclass(frozen=True)
class Segment:
    s_start: float
    s_end: float
    sufficient: bool

    @property
    def length(self) -> float:
        return self.s_end - self.s_start


@dataclass(frozen=True)
class SegmentMap:
    threshold: float
    segments: tuple[Segment, ...]

    @property
    def total_length(self) -> float:
        return self.segments[-1].s_end

    @property
    def boundaries(self) -> list[float]:
        return [seg.s_end for seg in self.segments[:-1]]

    def sufficient_at(self, s: float) -> bool:
        for seg in self.segments:
            if s < seg.s_end:
                return seg.sufficient
        return self.segments[-1].sufficient


def classify_segments(table: VisibilityTable, threshold: float) -> SegmentMap:
    """Runs of stations with ``d_s >= threshold``.

    Each station stands for the stretch closer to it than to its neighbours.
    Stations with truncated rays count as insufficient.
    """
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    ok = (table.d_s >= threshold) & ~table.truncated
    s = table.s
    edges = np.concatenate([[0.0], 0.5 * (s[1:] + s[:-1]), [table.total_length]])
    segs: list[Segment] = []
    start = edges[0]
    for i in range(len(s)):
        last = i == len(s) - 1
        if last or ok[i + 1] != ok[i]:
            segs.append(Segment(float(start), float(edges[i + 1]), bool(ok[i])))
            start = edges[i + 1]
    return SegmentMap(threshold, tuple(segs))


def _diff_intervals(a: SegmentMap, b: SegmentMap) -> list[tuple[float, float, bool]]:
    """Maximal intervals where ``b`` differs from ``a``, with ``b``'s flag."""
    cuts = sorted({0.0, a.total_length, *a.boundaries, *b.boundaries})
    out: list[tuple[float, float, bool]] = []
    for lo, hi in zip(cuts, cuts[1:]):
        if hi <= lo:
            continue
        mid = 0.5 * (lo + hi)
        fa, fb = a.sufficient_at(mid), b.sufficient_at(mid)
        if fa != fb:
            if out and out[-1][1] == lo and out[-1][2] == fb:
                out[-1] = (out[-1][0], hi, fb)
            else:
                out.append((lo, hi, fb))
    return out


@dataclass
class SweepRow:
    station_interval: float
    d_r: float
    segment_map: SegmentMap
    changed_stations: int = 0
    changed_fraction: float = 0.0
    short_segments: int = 0
    red_extensions: int = 0
    green_extensions: int = 0
    red_inside_green: int = 0
    green_inside_red: int = 0

    @property
    def qualitative_change(self) -> bool:
        return self.red_inside_green > 0


@dataclass
class SweepReport:
    threshold: float
    baseline: tuple[float, float]
    rows: list[SweepRow] = field(default_factory=list)

    def row(self, station_interval: float, d_r: float) -> SweepRow:
        for r in self.rows:
            if r.station_interval == station_interval and r.d_r == d_r:
                return r
        raise KeyError((station_interval, d_r))


def compare_segment_maps(base: SegmentMap, other: SegmentMap, probes: np.ndarray, short: float = SHORT_SEGMENT) -> dict:
    """Difference metrics of ``other`` against ``base``.

    A differing stretch that touches a boundary of ``base`` is an extension
    (of the colour ``other`` shows there); one that lies strictly inside a
    ``base`` segment is an insertion.
    """
    diffs = _diff_intervals(base, other)
    bnd = base.boundaries
    m = dict(red_extensions=0, green_extensions=0, red_inside_green=0, green_inside_red=0)
    for lo, hi, flag in diffs:
        touches = any(lo - 1e-9 <= b <= hi + 1e-9 for b in bnd)
        if touches:
            m["green_extensions" if flag else "red_extensions"] += 1
        else:
            m["green_inside_red" if flag else "red_inside_green"] += 1
    changed = sum(1 for p in probes if base.sufficient_at(p) != other.sufficient_at(p))
    m["changed_stations"] = changed
    m["changed_fraction"] = changed / len(probes) if len(probes) else 0.0
    m["short_segments"] = sum(1 for seg in other.segments if seg.length < short)
    return m


def classification_range(threshold: float, d_r: float) -> float:
    """Smallest multiple of ``d_r`` not below ``threshold``.

    Capping the scan there leaves ``d_s >= threshold`` unchanged.
    """
    return math.ceil(threshold / d_r - 1e-9) * d_r


def robustness_sweep(
    dsm: DsmGrid,
    route: RoadRoute,
    station_intervals=None,
    d_r_values=None,
    threshold: float = 400.0,
    pairs=None,
    baseline: tuple[float, float] = (DEFAULT_STATION_INTERVAL, DEFAULT_D_R),
    max_range: float | None = None,
) -> SweepReport:
    """Segment classification for each (station interval, d_r) pair, diffed
    against the baseline configuration at the baseline's stations."""
    if pairs is None:
        if not station_intervals or not d_r_values:
            raise ValueError("parameter lists must be non-empty")
        pairs = [(float(i), float(d)) for i in station_intervals for d in d_r_values]
    pairs = [(float(i), float(d)) for i, d in pairs]
    if not pairs:
        raise ValueError("parameter lists must be non-empty")

    def seg_map(interval, d_r):
        rng = max_range if max_range is not None else classification_range(threshold, d_r)
        table = precompute_visibility(dsm, route, interval, d_r, rng)
        return table, classify_segments(table, threshold)

    base_table, base_map = seg_map(*baseline)
    report = SweepReport(threshold, (float(baseline[0]), float(baseline[1])))
    for interval, d_r in pairs:
        if (interval, d_r) == report.baseline:
            smap = base_map
        else:
            _, smap = seg_map(interval, d_r)
        metrics = compare_segment_maps(base_map, smap, base_table.s)
        report.rows.append(SweepRow(interval, d_r, smap, **metrics))
    return report


# --- file formats -----------------------------------------------------------

def load_dsm(path: str | Path) -> DsmGrid:
    """Read an ESRI ASCII grid. The first data row is the northernmost."""
    path = Path(path)
    header: dict[str, float] = {}
    with path.open(encoding="utf-8") as fh:
        lines = fh.readlines()
    i = 0
    while i < len(lines) and lines[i].strip() and lines[i].split()[0][0].isalpha():
        key, val = lines[i].split()[:2]
        header[key.lower()] = float(val)
        i += 1
    for key in ("ncols", "nrows", "cellsize"):
        if key not in header:
            raise ValueError(f"{path}: missing header field {key}")
    ncols, nrows = int(header["ncols"]), int(header["nrows"])
    cs = header["cellsize"]
    if "xllcorner" in header:
        x0, y0 = header["xllcorner"], header.get("yllcorner", 0.0)
    else:
        x0, y0 = header["xllcenter"] - cs / 2, header["yllcenter"] - cs / 2
    try:
        data = np.array(" ".join(lines[i:]).split(), dtype=float)
    except ValueError as exc:
        raise ValueError(f"{path}: malformed grid data ({exc})") from None
    if data.size != ncols * nrows:
        raise ValueError(f"{path}: expected {ncols * nrows} values, found {data.size}")
    grid = data.reshape(nrows, ncols)[::-1].copy()
    if "nodata_value" in header:
        grid[grid == header["nodata_value"]] = np.nan
    return DsmGrid((x0, y0), cs, grid)


def write_dsm(dsm: DsmGrid, path: str | Path, nodata: float = -9999.0) -> Path:
    path = Path(path)
    nrows, ncols = dsm.heights.shape
    grid = np.where(np.isnan(dsm.heights), nodata, dsm.heights)[::-1]
    with path.open("w", encoding="utf-8") as fh:
        fh.write(f"ncols {ncols}\nnrows {nrows}\n")
        fh.write(f"xllcorner {dsm.origin[0]!r}\nyllcorner {dsm.origin[1]!r}\n")
        fh.write(f"cellsize {dsm.spacing!r}\nNODATA_value {nodata!r}\n")
        for row in grid:
            fh.write(" ".join(repr(float(v)) for v in row))
            fh.write("\n")
    return path


def write_table(table: VisibilityTable, path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        fh.write(
            f"# route_id={table.route_id},station_interval={table.station_interval!r},"
            f"d_r={table.d_r!r},max_range={table.max_range!r},total_length={table.total_length!r}\n"
        )
        w = csv.writer(fh)
        w.writerow(["s", "d_s", "truncated"])
        for s, d, t in zip(table.s, table.d_s, table.truncated):
            w.writerow([repr(float(s)), repr(float(d)), int(t)])
    return path


def load_table(path: str | Path) -> VisibilityTable:
    path = Path(path)
    meta: dict[str, str] = {}
    rows = []
    with path.open(newline="", encoding="utf-8") as fh:
        first = fh.readline()
        if first.startswith("#"):
            for item in first[1:].strip().split(","):
                k, _, v = item.partition("=")
                meta[k.strip()] = v.strip()
        else:
            fh.seek(0)
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"s", "d_s", "truncated"} <= set(reader.fieldnames):
            raise ValueError(f"{path}: expected columns s,d_s,truncated")
        for lineno, row in enumerate(reader, start=2 + bool(meta)):
            try:
                rows.append((float(row["s"]), float(row["d_s"]), bool(int(row["truncated"]))))
            except (TypeError, ValueError):
                raise ValueError(f"{path}:{lineno}: malformed row") from None
    s, d, t = (np.array(c) for c in zip(*rows))
    interval = float(meta.get("station_interval", s[1] - s[0] if len(s) > 1 else 0.0))
    return VisibilityTable(
        meta.get("route_id", path.stem),
        interval,
        float(meta.get("d_r", "nan")),
        float(meta.get("max_range", "nan")),
        s, d, t,
        float(meta["total_length"]) if "total_length" in meta else None,
    )


def write_segments(smap: SegmentMap, path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["s_start", "s_end", "sufficient"])
        for seg in smap.segments:
            w.writerow([repr(seg.s_start), repr(seg.s_end), int(seg.sufficient)])
    return path
