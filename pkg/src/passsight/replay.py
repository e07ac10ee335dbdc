"""Drive-log replay: maneuver metrics and prediction re-evaluation.

Logs from the simulator or from recorded drives in the same column layout are
segmented into overtakes by the lane flag. Predictions are recomputed from the
raw kinematic columns and compared both to the logged values and to the
measured point-of-no-return.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .kinematics import AccelModel, ModelKind
from .logschema import (
    MODEL_NAMES,
    DriveLogRecord,
    context_from_record,
    parse_log,
    write_log,
)
from .psd import SENSOR_RANGE, ManeuverError, SafetyParams, Variant, predict_variant
from .simulator import detect_pnr_events, relative_pnr_error

__all__ = [
    "QUANTILES",
    "ComparisonReport",
    "EventError",
    "ManeuverMetrics",
    "extract_maneuvers",
    "parse_log",
    "recompute_and_compare",
    "write_event_report",
    "write_log",
    "write_summary",
]

QUANTILES = (0.0, 0.25, 0.5, 0.75, 1.0)
COMPARED_FIELDS = ("t_pnr", "d_pnr", "t_rest", "t_total", "d_rest", "v_end", "d_opp", "L_sm", "d_s_min")


@dataclass(frozen=True)
class ManeuverMetrics:
    t_start: float
    t_end: float
    lead_id: str
    L1_s_measured: float
    L2_s_measured: float
    Lsm_s_measured: float | None  # None without an oncoming vehicle in the log
    max_speed: float  # km/h
    lane_duration: float
    following_duration_before: float

    def __post_init__(self):
        if self.lane_duration < 0 or self.following_duration_before < 0:
            raise ValueError("durations must be non-negative")


def _lane_spans(records):
    """Index pairs (first on opposite lane, first back) of every lane excursion."""
    spans, open_at = [], None
    for i, rec in enumerate(records):
        if rec.on_opposite_lane and open_at is None:
            open_at = i
        elif not rec.on_opposite_lane and open_at is not None:
            spans.append((open_at, i))
            open_at = None
    return spans, open_at is not None


def _following_time(records, i0, floor_idx) -> float:
    j = i0
    while j - 1 > floor_idx:
        rec = records[j - 1]
        lead = rec.target_lead()
        if rec.on_opposite_lane or lead is None or lead.distance > SENSOR_RANGE:
            break
        j -= 1
    return records[i0].t - records[j].t


def extract_maneuvers(records: list[DriveLogRecord]) -> tuple[list[ManeuverMetrics], int]:
    """Completed overtakes and the number of skipped (aborted or unfinished) ones.

    Gaps are turned into times by dividing by the lead's speed, the speed the
    corresponding safety distances scale with. The oncoming margin divides the
    distance to the next oncoming car at reeve-in by the closing speed.
    """
    spans, dangling = _lane_spans(records)
    out, skipped = [], int(dangling)
    prev_end = -1
    for i0, i1 in spans:
        start, end = records[i0], records[i1]
        lead = start.target_lead()
        after = end.lead_by_id(lead.id) if lead is not None else None
        if lead is None or after is None or after.distance > 0 or lead.speed <= 0:
            skipped += 1
            prev_end = i1
            continue
        half = 0.5 * (start.ego_length + lead.length)
        L1_s = (lead.distance - half) / lead.speed
        L2_s = (-after.distance - half) / after.speed
        Lsm_s = None
        if end.oncoming is not None:
            closing = end.oncoming.speed + end.ego_speed
            Lsm_s = end.oncoming.distance / closing if closing > 0 else None
        speeds = [r.ego_speed for r in records[i0:i1 + 1]]
        out.append(ManeuverMetrics(
            t_start=start.t,
            t_end=end.t,
            lead_id=lead.id,
            L1_s_measured=L1_s,
            L2_s_measured=L2_s,
            Lsm_s_measured=Lsm_s,
            max_speed=max(speeds) * 3.6,
            lane_duration=end.t - start.t,
            following_duration_before=_following_time(records, i0, prev_end),
        ))
        prev_end = i1
    return out, skipped


@dataclass(frozen=True)
class EventError:
    event_id: int
    model: str
    variant: str
    t_measured: float
    t_predicted: float | None
    rel_error: float | None


@dataclass
class ComparisonReport:
    model: str
    variant: str
    events: list[EventError] = field(default_factory=list)
    samples: int = 0
    skipped: int = 0
    # largest relative difference between logged and recomputed columns
    max_logged_rel_diff: float | None = None

    def errors(self) -> list[float]:
        return [e.rel_error for e in self.events if e.rel_error is not None]

    def quantiles(self) -> dict[float, float]:
        errs = self.errors()
        if not errs:
            return {}
        return {q: float(np.quantile(errs, q)) for q in QUANTILES}


def _rel(a: float, b: float) -> float:
    if a == b:
        return 0.0
    return abs(a - b) / max(abs(a), abs(b))


def recompute_and_compare(
    records: list[DriveLogRecord],
    model: ModelKind | str,
    variant: Variant | str,
    safety: SafetyParams | None = None,
) -> ComparisonReport:
    """Re-evaluate one (model, variant) at every assistant sample and every PNR event.

    Logged model columns hold the as-modeled prediction, so the logged/recomputed
    comparison is only made for that variant.
    """
    name = ModelKind(model).value
    variant = Variant(variant)
    report = ComparisonReport(name, variant.value)
    accel = AccelModel(kind=ModelKind(name))
    worst = None
    for rec in records:
        if not rec.assistant_tick:
            continue
        ctx = context_from_record(rec, safety)
        if ctx is None:
            report.skipped += 1
            continue
        report.samples += 1
        logged = rec.models.get(name)
        if variant is not Variant.AS_MODELED or logged is None or logged.d_s_min is None:
            continue
        try:
            res = predict_variant(ctx, accel, variant)
        except ManeuverError:
            continue
        for f in COMPARED_FIELDS:
            got, want = getattr(res, f), getattr(logged, f)
            if want is not None:
                d = _rel(got, want)
                worst = d if worst is None else max(worst, d)
    report.max_logged_rel_diff = worst
    events = detect_pnr_events(records, safety)
    for i, ev in enumerate(events):
        pred = ev.predictions.get((name, variant.value))
        rel = relative_pnr_error([ev], name, variant)
        report.events.append(EventError(i, name, variant.value, ev.duration, pred, rel[0] if rel else None))
    return report


def compare_all(records: list[DriveLogRecord], safety: SafetyParams | None = None) -> list[ComparisonReport]:
    """One report per model and variant, models outermost."""
    return [recompute_and_compare(records, m, v, safety) for m in MODEL_NAMES for v in Variant]


def _cell(x):
    return "" if x is None else repr(float(x))


def write_event_report(reports: list[ComparisonReport], path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["event_id", "model", "variant", "t_measured", "t_predicted", "rel_error"])
        for rep in reports:
            for e in rep.events:
                w.writerow([e.event_id, e.model, e.variant, _cell(e.t_measured),
                            _cell(e.t_predicted), _cell(e.rel_error)])
    return path


def write_summary(reports: list[ComparisonReport], path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["model", "variant", "n", "q0", "q25", "median", "q75", "q100", "median_abs"])
        for rep in reports:
            errs = rep.errors()
            q = rep.quantiles()
            med_abs = float(np.median(np.abs(errs))) if errs else None
            w.writerow([rep.model, rep.variant, len(errs), *(_cell(q.get(x)) for x in QUANTILES), _cell(med_abs)])
    return path
