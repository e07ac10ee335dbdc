"""Drive-log records and their CSV form.

Column names are snake_case renderings of the recorded data set's field
roles. Floats are written with ``repr`` so a write/parse cycle is lossless;
an empty cell stands for a missing value. Lead-vehicle distances are signed
and measured center to center: positive ahead of the ego car, negative once
it has been passed.
"""

from __future__ import annotations

import csv
from collections.abc import Iterable
from dataclasses import dataclass, field
from pathlib import Path

from .assistant import Snapshot
from .psd import OvertakeContext, SafetyParams, SecondLead

MODEL_NAMES = ("constant", "ldm", "dynamic")
MAX_LEADS = 4

MODEL_FIELDS = (
    "d_rest", "t_total", "t_pnr", "d_pnr", "v_end", "d_opp", "L_sm", "d_s_min", "t_rest",
    "opportunity_distance", "warning",
)
GEOMETRY_FIELDS = ("L1", "L_oen", "L_oing", "L2", "L_tot", "L_e", "L3", "v_opp_max")
LEAD_FIELDS = ("id", "distance", "length", "speed")

BASE_COLUMNS = (
    "t", "ego_s", "ego_speed", "ego_length", "on_opposite_lane", "grade",
    "speed_limit_kmh", "lanes_per_direction", "road_length",
)
ASSISTANT_COLUMNS = (
    "assistant_tick", "warning", "warning_reason", "opportunity_distance",
    "opportunity_kind", "sight_distance",
)
COLUMNS = (
    BASE_COLUMNS
    + tuple(f"lead{i}_{f}" for i in range(1, MAX_LEADS + 1) for f in LEAD_FIELDS)
    + ("oncoming_distance", "oncoming_speed", "oncoming_length")
    + ASSISTANT_COLUMNS
    + GEOMETRY_FIELDS
    + tuple(f"{m}_{f}" for m in MODEL_NAMES for f in MODEL_FIELDS)
)
MANDATORY = (
    "t", "ego_s", "ego_speed", "on_opposite_lane", "grade", "speed_limit_kmh",
    "lead1_distance", "lead1_speed", "lead1_length", "warning",
)


class LogSchemaError(ValueError):
    """Header lacks a mandatory column."""


class LogRowError(ValueError):
    """A cell could not be parsed; the message carries the line number."""


@dataclass(frozen=True)
class LeadObs:
    id: str
    distance: float
    length: float
    speed: float


@dataclass(frozen=True)
class OncomingObs:
    distance: float
    speed: float
    length: float


@dataclass(frozen=True)
class ModelValues:
    d_rest: float | None = None
    t_total: float | None = None
    t_pnr: float | None = None
    d_pnr: float | None = None
    v_end: float | None = None
    d_opp: float | None = None
    L_sm: float | None = None
    d_s_min: float | None = None
    t_rest: float | None = None
    opportunity_distance: float | None = None
    warning: bool | None = None


@dataclass(frozen=True)
class Geometry:
    L1: float | None = None
    L_oen: float | None = None
    L_oing: float | None = None
    L2: float | None = None
    L_tot: float | None = None
    L_e: float | None = None
    L3: float | None = None
    v_opp_max: float | None = None


@dataclass(frozen=True)
class DriveLogRecord:
    t: float
    ego_s: float
    ego_speed: float
    on_opposite_lane: bool
    grade: float
    speed_limit_kmh: float
    ego_length: float = 5.0
    lanes_per_direction: int = 1
    road_length: float | None = None
    leads: tuple[LeadObs, ...] = ()
    oncoming: OncomingObs | None = None
    assistant_tick: bool = False
    warning: bool | None = None
    warning_reason: str | None = None
    opportunity_distance: float | None = None
    opportunity_kind: str | None = None
    sight_distance: float | None = None
    geometry: Geometry = field(default_factory=Geometry)
    models: dict = field(default_factory=dict)  # model name -> ModelValues

    def target_lead(self) -> LeadObs | None:
        """Nearest lead that is still ahead (center-to-center distance >= 0)."""
        ahead = [ld for ld in self.leads if ld.distance >= 0]
        return min(ahead, key=lambda ld: ld.distance) if ahead else None

    def lead_by_id(self, lead_id: str) -> LeadObs | None:
        return next((ld for ld in self.leads if ld.id == lead_id), None)


SimRecord = DriveLogRecord


def second_lead_gap(record: DriveLogRecord, lead: LeadObs) -> float | None:
    """Bumper gap from ``lead``'s front to the rear of the vehicle ahead of it."""
    ahead = [ld for ld in record.leads if ld.distance > lead.distance]
    if not ahead:
        return None
    nxt = min(ahead, key=lambda ld: ld.distance)
    return nxt.distance - lead.distance - 0.5 * (lead.length + nxt.length)


def context_from_record(record: DriveLogRecord, safety: SafetyParams | None = None) -> OvertakeContext | None:
    """Prediction context for the record's target lead, or None without one.

    The posted limit applies to both directions of travel.
    """
    lead = record.target_lead()
    if lead is None:
        return None
    gap = second_lead_gap(record, lead)
    return OvertakeContext(
        v0=record.ego_speed,
        v_oen=lead.speed,
        L_oing=record.ego_length,
        L_oen=lead.length,
        G=record.grade,
        speed_limit=record.speed_limit_kmh,
        opp_speed_limit=record.speed_limit_kmh,
        second_lead=SecondLead(gap) if gap is not None and gap > 0 else None,
        safety=safety or SafetyParams(),
    )


def snapshot_from_record(record: DriveLogRecord) -> Snapshot:
    lead = record.target_lead()
    gap = second_lead_gap(record, lead) if lead is not None else None
    return Snapshot(
        t=record.t,
        ego_s=record.ego_s,
        ego_speed=record.ego_speed,
        lead_distance=None if lead is None else lead.distance,
        lead_speed=0.0 if lead is None else lead.speed,
        lead_length=5.0 if lead is None else lead.length,
        ego_length=record.ego_length,
        second_lead_gap=gap if gap is not None and gap > 0 else None,
    )


# cell codecs

def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _float(cell: str) -> float | None:
    return None if cell == "" else float(cell)


def _bool(cell: str) -> bool | None:
    if cell == "":
        return None
    if cell in ("1", "true", "True", "yes"):
        return True
    if cell in ("0", "false", "False", "no"):
        return False
    raise ValueError(f"not a boolean: {cell!r}")


def _str(cell: str) -> str | None:
    return None if cell == "" else cell


def record_to_row(rec: DriveLogRecord) -> dict[str, str]:
    row = {
        "t": rec.t, "ego_s": rec.ego_s, "ego_speed": rec.ego_speed, "ego_length": rec.ego_length,
        "on_opposite_lane": rec.on_opposite_lane, "grade": rec.grade,
        "speed_limit_kmh": rec.speed_limit_kmh, "lanes_per_direction": rec.lanes_per_direction,
        "road_length": rec.road_length,
        "assistant_tick": rec.assistant_tick, "warning": rec.warning,
        "warning_reason": rec.warning_reason, "opportunity_distance": rec.opportunity_distance,
        "opportunity_kind": rec.opportunity_kind, "sight_distance": rec.sight_distance,
    }
    if len(rec.leads) > MAX_LEADS:
        raise ValueError(f"at most {MAX_LEADS} leads can be logged")
    for i, ld in enumerate(rec.leads, start=1):
        for f in LEAD_FIELDS:
            row[f"lead{i}_{f}"] = getattr(ld, f)
    if rec.oncoming is not None:
        row.update(oncoming_distance=rec.oncoming.distance, oncoming_speed=rec.oncoming.speed,
                   oncoming_length=rec.oncoming.length)
    for f in GEOMETRY_FIELDS:
        row[f] = getattr(rec.geometry, f)
    for m, vals in rec.models.items():
        for f in MODEL_FIELDS:
            row[f"{m}_{f}"] = getattr(vals, f)
    return {c: _fmt(row.get(c)) for c in COLUMNS}


def row_to_record(row: dict[str, str]) -> DriveLogRecord:
    def get(c):
        return row.get(c) or ""

    leads = []
    for i in range(1, MAX_LEADS + 1):
        if get(f"lead{i}_distance") == "":
            continue
        leads.append(LeadObs(
            id=get(f"lead{i}_id") or f"lead{i}",
            distance=float(get(f"lead{i}_distance")),
            length=float(get(f"lead{i}_length")),
            speed=float(get(f"lead{i}_speed")),
        ))
    oncoming = None
    if get("oncoming_distance") != "":
        oncoming = OncomingObs(float(get("oncoming_distance")), float(get("oncoming_speed")),
                               float(get("oncoming_length") or 5.0))
    models = {}
    for m in MODEL_NAMES:
        cells = {f: get(f"{m}_{f}") for f in MODEL_FIELDS}
        if any(cells.values()):
            models[m] = ModelValues(**{
                f: (_bool(v) if f == "warning" else _float(v)) for f, v in cells.items()
            })
    lanes = get("lanes_per_direction")
    return DriveLogRecord(
        t=float(get("t")),
        ego_s=float(get("ego_s")),
        ego_speed=float(get("ego_speed")),
        on_opposite_lane=bool(_bool(get("on_opposite_lane"))),
        grade=float(get("grade")),
        speed_limit_kmh=float(get("speed_limit_kmh")),
        ego_length=_float(get("ego_length")) or 5.0,
        lanes_per_direction=int(lanes) if lanes else 1,
        road_length=_float(get("road_length")),
        leads=tuple(leads),
        oncoming=oncoming,
        assistant_tick=bool(_bool(get("assistant_tick"))),
        warning=_bool(get("warning")),
        warning_reason=_str(get("warning_reason")),
        opportunity_distance=_float(get("opportunity_distance")),
        opportunity_kind=_str(get("opportunity_kind")),
        sight_distance=_float(get("sight_distance")),
        geometry=Geometry(**{f: _float(get(f)) for f in GEOMETRY_FIELDS}),
        models=models,
    )


def write_log(records: Iterable[DriveLogRecord], path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=COLUMNS)
        w.writeheader()
        for rec in records:
            w.writerow(record_to_row(rec))
    return path


def parse_log(path: str | Path) -> list[DriveLogRecord]:
    """Read a drive log. Extra columns are ignored."""
    path = Path(path)
    out: list[DriveLogRecord] = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in MANDATORY if c not in header]
        if missing:
            raise LogSchemaError(f"{path}: missing mandatory column(s) {', '.join(missing)}")
        last_t = None
        for lineno, row in enumerate(reader, start=2):
            try:
                rec = row_to_record(row)
            except (TypeError, ValueError) as exc:
                raise LogRowError(f"{path}:{lineno}: {exc}") from None
            if last_t is not None and rec.t < last_t:
                raise LogRowError(f"{path}:{lineno}: time goes backwards ({rec.t} after {last_t})")
            last_t = rec.t
            out.append(rec)
    return out
