"""Command-line entry point.

Speeds given as flags are in km/h; every file uses SI units. Exit codes:
0 success, 2 input or I/O problem, 3 no feasible maneuver, 4 internal error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import asdict, fields, replace
from pathlib import Path

from . import fixtures
from .assistant import AssistantUnavailable, WarningState, evaluate, next_opportunity
from .config import ConfigError, build_model, build_safety, merged, read_config
from .kinematics import AccelModel, ModelKind, VehicleParams
from .logschema import LogRowError, LogSchemaError, parse_log, write_log
from .psd import (
    ManeuverError,
    OvertakeContext,
    PsdResult,
    SafetyParams,
    SecondLead,
    Variant,
    predict_variant,
    variant_model,
)
from .replay import compare_all, extract_maneuvers, write_event_report, write_summary
from .road import RoadRoute, RoadStation, RouteError, load_route, write_route
from .simulator import concat_logs, run, scenario_from_files, synthetic_overtakes
from .visibility import (
    DEFAULT_D_R,
    DEFAULT_MAX_RANGE,
    DEFAULT_STATION_INTERVAL,
    CoverageError,
    VisibilityTable,
    classify_segments,
    load_dsm,
    load_table,
    precompute_visibility,
    robustness_sweep,
    write_dsm,
    write_segments,
    write_table,
)

EXIT_OK, EXIT_INPUT, EXIT_DOMAIN, EXIT_INTERNAL = 0, 2, 3, 4
INPUT_ERRORS = (OSError, RouteError, LogSchemaError, LogRowError, ConfigError, CoverageError, ValueError)

PSD_COLUMNS = [f.name for f in fields(PsdResult)] + ["t_total"]
WARNING_COLUMNS = ["t", "warn", "reason", "opportunity_dist", "opportunity_kind"]


class InputError(Exception):
    """Bad command-line input, reported with exit code 2."""


def _need_file(path: str | None, what: str) -> Path:
    if path is None:
        raise InputError(f"--{what} is required")
    p = Path(path)
    if not p.exists():
        raise InputError(f"{what} file {p} does not exist")
    return p


def _pairs(text: str) -> list[tuple[float, float]]:
    try:
        return [tuple(float(x) for x in item.split(":")) for item in text.split(",") if item]
    except ValueError:
        raise InputError(f"cannot parse pairs {text!r}; expected e.g. 10:10,1:1") from None


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x]
    except ValueError:
        raise InputError(f"cannot parse list {text!r}") from None


# model and safety flags shared by several commands

def _add_model_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("acceleration model (defaults: vehicle parameter table)")
    g.add_argument("--model", choices=[m.value for m in ModelKind], default="constant")
    g.add_argument("--variant", choices=[v.value for v in Variant], default="as_modeled")
    base = AccelModel()
    g.add_argument("--lam", type=float, default=None, help=f"throttle coefficient [default: {base.lam}]")
    g.add_argument("--a-const", type=float, default=None, help=f"m/s^2 [default: {base.a_const}]")
    g.add_argument("--a-max", type=float, default=None, help=f"m/s^2 [default: {base.a_max}]")
    g.add_argument("--v-e", type=float, default=None, help=f"m/s [default: {base.v_e}]")
    for f in fields(VehicleParams):
        g.add_argument(f"--{f.name.replace('_', '-')}", dest=f"veh_{f.name}", type=float, default=None,
                       help=f"[default: {f.default}]")
    g = p.add_argument_group("safety gaps")
    for f in fields(SafetyParams):
        g.add_argument(f"--{f.name.replace('_', '-')}", dest=f"safe_{f.name}", type=float, default=None,
                       help=f"[default: {f.default}]")
    p.add_argument("--config", default=None, help="flat key = value file; flags take precedence")


def _model_and_safety(args) -> tuple[AccelModel, SafetyParams]:
    file_values = read_config(args.config)
    over = {"lam": args.lam, "a_const": args.a_const, "a_max": args.a_max, "v_e": args.v_e}
    over.update({f.name: getattr(args, f"veh_{f.name}") for f in fields(VehicleParams)})
    over.update({f.name: getattr(args, f"safe_{f.name}") for f in fields(SafetyParams)})
    values = merged(file_values, over)
    return build_model(args.model, values), build_safety(values)


def _load_table_or_build(args) -> VisibilityTable:
    if getattr(args, "table", None):
        return load_table(_need_file(args.table, "table"))
    route = load_route(_need_file(args.route, "route"))
    dsm = load_dsm(_need_file(args.dsm, "dsm"))
    return precompute_visibility(dsm, route)


# commands

def cmd_precompute(args) -> int:
    route = load_route(_need_file(args.route, "route"))
    dsm = load_dsm(_need_file(args.dsm, "dsm"))
    table = precompute_visibility(dsm, route, args.station_interval, args.d_r, args.max_range)
    write_table(table, args.out)
    n_tr = int(table.truncated.sum())
    print(f"wrote {args.out}: {len(table.s)} stations, {n_tr} truncated")
    return EXIT_OK


def cmd_classify(args) -> int:
    table = load_table(_need_file(args.table, "table"))
    smap = classify_segments(table, args.threshold)
    write_segments(smap, args.out)
    green = sum(s.length for s in smap.segments if s.sufficient)
    print(f"wrote {args.out}: {len(smap.segments)} segments, "
          f"{green:.0f} of {smap.total_length:.0f} m with sight >= {args.threshold:g} m")
    return EXIT_OK


SWEEP_COLUMNS = ("station_interval", "d_r", "segments", "changed_stations", "changed_fraction",
                 "short_segments", "red_extensions", "green_extensions", "red_inside_green",
                 "green_inside_red", "qualitative_change")


def cmd_sweep(args) -> int:
    route = load_route(_need_file(args.route, "route"))
    dsm = load_dsm(_need_file(args.dsm, "dsm"))
    if args.pairs:
        report = robustness_sweep(dsm, route, pairs=_pairs(args.pairs), threshold=args.threshold)
    else:
        report = robustness_sweep(dsm, route, _floats(args.intervals), _floats(args.d_r_values),
                                  threshold=args.threshold)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with (out / "sweep_summary.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(SWEEP_COLUMNS)
        for r in report.rows:
            write_segments(r.segment_map, out / f"segments_{r.station_interval:g}_{r.d_r:g}.csv")
            w.writerow([r.station_interval, r.d_r, len(r.segment_map.segments), r.changed_stations,
                        repr(r.changed_fraction), r.short_segments, r.red_extensions, r.green_extensions,
                        r.red_inside_green, r.green_inside_red, int(r.qualitative_change)])
            flag = "  qualitative change" if r.qualitative_change else ""
            print(f"({r.station_interval:g},{r.d_r:g}): {r.changed_stations} changed "
                  f"({100 * r.changed_fraction:.1f} %), {r.red_inside_green} red-inside-green{flag}")
    return EXIT_OK


def _context_from(values: dict, safety: SafetyParams) -> OvertakeContext:
    def kmh(key, default=None):
        v = values.get(key, default)
        if v is None:
            raise InputError(f"missing value for {key}")
        return float(v) / 3.6

    gap = values.get("second_gap")
    return OvertakeContext(
        v0=kmh("v0"),
        v_oen=kmh("v_oen"),
        L_oing=float(values.get("L_oing", 5.0)),
        L_oen=float(values.get("L_oen", 5.0)),
        G=float(values.get("G", 0.0)),
        speed_limit=float(values.get("speed_limit", 100.0)),
        opp_speed_limit=float(values.get("opp_speed_limit", values.get("speed_limit", 100.0))),
        second_lead=None if gap is None else SecondLead(float(gap)),
        safety=safety,
    )


def _verdict(args, ctx, model, psd, limited):
    """Warning from a fixed sight value or from a table lookup, if requested."""
    if args.sight is not None:
        # a two-station dummy route carries the intersection distance, if any
        length = max(psd.d_pnr + 1.0, args.intersection or 0.0) + 1.0
        stations = tuple(
            RoadStation(s, (s, 0.0, 0.0), (1.0, 0.0, 0.0), 0.0, 1, ctx.speed_limit, (0.0, 1.75, 0.0))
            for s in (0.0, length)
        )
        inter = () if args.intersection is None else (float(args.intersection),)
        route = RoadRoute(stations, inter, "cli")
        table = VisibilityTable("cli", length, DEFAULT_D_R, DEFAULT_MAX_RANGE,
                                [0.0, length], [args.sight, args.sight])
        return evaluate(ctx, psd, table, route, 0.0)
    if args.table:
        table = load_table(_need_file(args.table, "table"))
        route = load_route(_need_file(args.route, "route"))
        state = evaluate(ctx, psd, table, route, args.ego_s)
        if state.warn:
            opp = next_opportunity(ctx, model, table, route, args.ego_s, limited)
            state = replace(state, next_opportunity=opp)
        return state
    return None


def _warning_row(t, state: WarningState | None) -> dict:
    if state is None:
        return {}
    opp = state.next_opportunity
    return {
        "t": t, "warn": int(state.warn), "reason": state.reason.value,
        "opportunity_dist": "" if opp is None else repr(opp.distance),
        "opportunity_kind": "" if opp is None else opp.kind.value,
    }


def _predict_one(args, values, model, safety):
    ctx = _context_from(values, safety)
    m, limited = variant_model(model, args.variant)
    psd = predict_variant(ctx, model, args.variant)
    state = _verdict(args, ctx, m, psd, limited)
    row = {k: getattr(psd, k) for k in PSD_COLUMNS}
    return row, _warning_row(values.get("t", 0.0), state)


def cmd_predict(args) -> int:
    model, safety = _model_and_safety(args)
    flag_values = {k: getattr(args, k) for k in
                   ("v0", "v_oen", "L_oing", "L_oen", "G", "speed_limit", "opp_speed_limit", "second_gap")
                   if getattr(args, k) is not None}
    if args.input:
        lines = _need_file(args.input, "input").read_text(encoding="utf-8").splitlines()
        batch = []
        for n, line in enumerate(lines, start=1):
            if line.strip():
                try:
                    batch.append({**flag_values, **json.loads(line)})
                except json.JSONDecodeError as exc:
                    raise InputError(f"{args.input}:{n}: {exc}") from None
    else:
        batch = [flag_values]
    rows, code = [], EXIT_OK
    for values in batch:
        try:
            psd_row, warn_row = _predict_one(args, values, model, safety)
        except ManeuverError as exc:
            if args.jsonl:
                print(json.dumps({"error": type(exc).__name__, "message": str(exc)}))
            else:
                print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
            code = EXIT_DOMAIN
            continue
        rows.append((psd_row, warn_row))
        if args.jsonl:
            print(json.dumps({**psd_row, **warn_row}))
        else:
            for k in PSD_COLUMNS:
                print(f"{k:>10} = {psd_row[k]:.4f}")
            if warn_row:
                opp = f", next opportunity {warn_row['opportunity_dist']} m ({warn_row['opportunity_kind']})" \
                    if warn_row["opportunity_dist"] else ""
                print(f"warning: {'yes' if warn_row['warn'] else 'no'} ({warn_row['reason']}){opp}")
    if args.out and rows:
        with Path(args.out).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            has_warn = any(wr for _, wr in rows)
            w.writerow(PSD_COLUMNS + (WARNING_COLUMNS if has_warn else []))
            for pr, wr in rows:
                cells = [repr(float(pr[k])) for k in PSD_COLUMNS]
                if has_warn:
                    cells += [wr.get(k, "") for k in WARNING_COLUMNS]
                w.writerow(cells)
    return code


def _synthetic_log(model: str, n: int, seed: int):
    pairs = synthetic_overtakes(model, n, seed=seed, log_predictions=True)
    return concat_logs([run(scn, route) for scn, route in pairs])


def cmd_simulate(args) -> int:
    if args.synthetic:
        records = _synthetic_log(args.driver_model, args.synthetic, args.seed)
    else:
        route = load_route(_need_file(args.route, "route"))
        values = read_config(_need_file(args.scenario, "scenario"))
        scn = scenario_from_files(values, _need_file(args.agents, "agents"), route)
        table = None
        if args.table or args.dsm:
            table = _load_table_or_build(args)
        res = run(scn, route, table)
        if res.ended_early:
            print(f"note: {res.reason}", file=sys.stderr)
        records = res.records
    write_log(records, args.out)
    print(f"wrote {args.out}: {len(records)} records")
    return EXIT_OK


def cmd_replay(args) -> int:
    records = parse_log(_need_file(args.log, "log"))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    maneuvers, skipped = extract_maneuvers(records)
    with (out / "maneuvers.csv").open("w", newline="", encoding="utf-8") as fh:
        names = [f for f in asdict(maneuvers[0])] if maneuvers else []
        w = csv.writer(fh)
        w.writerow(names or ["t_start"])
        for m in maneuvers:
            w.writerow(["" if v is None else (repr(v) if isinstance(v, float) else v) for v in asdict(m).values()])
    reports = compare_all(records)
    write_event_report(reports, out / "report.csv")
    write_summary(reports, out / "summary.csv")
    worst = [r.max_logged_rel_diff for r in reports if r.max_logged_rel_diff is not None]
    print(f"{len(maneuvers)} maneuvers ({skipped} skipped), "
          f"{len(reports[0].events) if reports else 0} PNR events")
    if worst:
        print(f"largest logged-vs-recomputed relative difference: {max(worst):.3g}")
    return EXIT_OK


def _median(rep):
    q = rep.quantiles()
    return q.get(0.5)


def cmd_compare(args) -> int:
    if args.log:
        records = parse_log(_need_file(args.log, "log"))
        reports = compare_all(records)
    else:
        reports = []
        for m in ModelKind:
            reports += [r for r in compare_all(_synthetic_log(m.value, args.synthetic, args.seed))
                        if r.model == m.value]
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_event_report(reports, out / "compare_events.csv")
    write_summary(reports, out / "compare_summary.csv")
    by = {(r.model, r.variant): r for r in reports}
    models = [m.value for m in ModelKind]
    variants = [v.value for v in Variant]
    for name, outer, inner, key in (
        ("by_variant", variants, models, lambda o, i: (i, o)),
        ("by_model", models, variants, lambda o, i: (o, i)),
    ):
        with (out / f"compare_{name}.csv").open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["group", "member", "n", "median_rel_error"])
            print(f"median relative PNR error, grouped {name.replace('_', ' ')}")
            for o in outer:
                for i in inner:
                    rep = by.get(key(o, i))
                    med = None if rep is None else _median(rep)
                    n = 0 if rep is None else len(rep.errors())
                    w.writerow([o, i, n, "" if med is None else repr(med)])
                    print(f"  {o:>11} {i:>11} n={n:<4d} {'-' if med is None else f'{med:+.4f}'}")
    return EXIT_OK


def cmd_fixture(args) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.kind == "hill_curve":
        route, dsm = fixtures.hill_curve_network(interval=args.interval)
    else:
        route, dsm = fixtures.flat_network(length=args.length, interval=args.interval)
    write_route(route, out / "route.csv")
    write_dsm(dsm, out / "dsm.asc")
    print(f"wrote {out / 'route.csv'} ({route.total_length:.0f} m) and {out / 'dsm.asc'} {dsm.heights.shape}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    p = argparse.ArgumentParser(prog="passsight", description=__doc__, formatter_class=fmt)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("precompute", help="sight-distance table for a route", formatter_class=fmt)
    s.add_argument("--route", required=True)
    s.add_argument("--dsm", required=True, help="ESRI ASCII surface model")
    s.add_argument("--out", default="visibility.csv")
    s.add_argument("--station-interval", type=float, default=DEFAULT_STATION_INTERVAL, help="m")
    s.add_argument("--d-r", type=float, default=DEFAULT_D_R, help="raycast target step, m")
    s.add_argument("--max-range", type=float, default=DEFAULT_MAX_RANGE, help="m")
    s.set_defaults(func=cmd_precompute)

    s = sub.add_parser("classify", help="sufficient/insufficient segments of a table", formatter_class=fmt)
    s.add_argument("--table", required=True)
    s.add_argument("--threshold", type=float, default=400.0, help="m")
    s.add_argument("--out", default="segments.csv")
    s.set_defaults(func=cmd_classify)

    s = sub.add_parser("sweep", help="station interval / d_r robustness sweep", formatter_class=fmt)
    s.add_argument("--route", required=True)
    s.add_argument("--dsm", required=True)
    s.add_argument("--pairs", default="10:10,1:1,10:60,30:60,10:120",
                   help="comma-separated interval:d_r pairs; overrides the lists")
    s.add_argument("--intervals", default="10", help="station intervals (m) when --pairs is empty")
    s.add_argument("--d-r-values", default="10", help="d_r values (m) when --pairs is empty")
    s.add_argument("--threshold", type=float, default=400.0, help="m")
    s.add_argument("--out-dir", default="sweep")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("predict", help="required sight distance for one context", formatter_class=fmt)
    s.add_argument("--v0", type=float, default=None, help="ego speed, km/h")
    s.add_argument("--v-oen", type=float, default=None, help="lead speed, km/h")
    s.add_argument("--L-oing", type=float, default=None, help="ego length, m [default: 5]")
    s.add_argument("--L-oen", type=float, default=None, help="lead length, m [default: 5]")
    s.add_argument("--G", type=float, default=None, help="grade as a fraction [default: 0]")
    s.add_argument("--speed-limit", type=float, default=None, help="km/h [default: 100]")
    s.add_argument("--opp-speed-limit", type=float, default=None, help="km/h [default: speed limit]")
    s.add_argument("--second-gap", type=float, default=None, help="gap to a second lead, m")
    s.add_argument("--sight", type=float, default=None, help="available sight at the PNR, m")
    s.add_argument("--intersection", type=float, default=None, help="distance to next intersection, m")
    s.add_argument("--table", default=None, help="visibility table for the warning lookup")
    s.add_argument("--route", default=None, help="route matching --table")
    s.add_argument("--ego-s", type=float, default=0.0, help="ego position on the route, m")
    s.add_argument("--input", default=None, help="JSON-lines file of contexts (keys as the flags)")
    s.add_argument("--jsonl", action="store_true", help="print one JSON object per evaluation")
    s.add_argument("--out", default=None, help="CSV output")
    _add_model_flags(s)
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("simulate", help="run a scenario and write a drive log", formatter_class=fmt)
    s.add_argument("--route", default=None)
    s.add_argument("--scenario", default=None, help="flat key = value scenario file")
    s.add_argument("--agents", default=None, help="agent table CSV (role,id,s0,speed,length)")
    s.add_argument("--table", default=None)
    s.add_argument("--dsm", default=None, help="builds the table at default settings")
    s.add_argument("--synthetic", type=int, default=0, help="instead: this many random overtakes")
    s.add_argument("--driver-model", choices=[m.value for m in ModelKind], default="constant",
                   help="driver model of the synthetic overtakes (full throttle, no cap)")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", default="drive_log.csv")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("replay", help="maneuver metrics and prediction errors of a log", formatter_class=fmt)
    s.add_argument("--log", required=True)
    s.add_argument("--out-dir", default="replay")
    s.set_defaults(func=cmd_replay)

    s = sub.add_parser("compare", help="model x variant PNR error table", formatter_class=fmt)
    s.add_argument("--log", default=None, help="drive log; default is a synthetic run per model")
    s.add_argument("--synthetic", type=int, default=50, help="overtakes per model without --log")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out-dir", default="compare")
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("fixture", help="write a synthetic route and surface model", formatter_class=fmt)
    s.add_argument("--kind", choices=["hill_curve", "flat"], default="hill_curve")
    s.add_argument("--interval", type=float, default=1.0, help="route station interval, m")
    s.add_argument("--length", type=float, default=200.0, help="flat route length, m")
    s.add_argument("--out-dir", default="fixture")
    s.set_defaults(func=cmd_fixture)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ManeuverError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except AssistantUnavailable as exc:
        print(f"assistant unavailable: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except (InputError, *INPUT_ERRORS) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001 - last-resort mapping to the internal-error code
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
