"""Command line: ``posebench simulate | gen-ref | evaluate | report``.

Exit codes: 0 success, 1 requirement gate failed (with ``--gate``), 2 bad input.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from posebench.detect import gate_passed, requirement_gate
from posebench.ingest import IngestError, session_from_dict
from posebench.pipeline import evaluate_session
from posebench.reference import PROTOCOL_PATHS, gen_iso_cube_poses, gen_protocol_path
from posebench.report import MetricReport, ReportError, emit_report, load_report
from posebench.scenarios import (
    SESSIONS,
    UnknownScenario,
    load_scenario_file,
    preset_names,
    write_session,
)
from posebench.simulator import SimulationError

EXIT_OK, EXIT_GATE, EXIT_INPUT = 0, 1, 2

log = logging.getLogger("posebench")


class InputError(Exception):
    pass


def _load_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc


def _merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        out[k] = _merge(out[k], v) if isinstance(v, dict) and isinstance(out.get(k), dict) else v
    return out


def cmd_simulate(args) -> int:
    if args.list:
        print("\n".join(preset_names()))
        return EXIT_OK
    chosen = sum(x is not None for x in (args.scenario, args.session, args.config))
    if chosen != 1:
        raise InputError("give exactly one of --scenario, --session or --config")
    seed = args.seed
    config = None
    if args.session:
        if args.session not in SESSIONS:
            raise InputError(f"unknown session {args.session!r}; known: {', '.join(SESSIONS)}")
        names, label = SESSIONS[args.session], args.session
    elif args.scenario:
        names, label = args.scenario, ",".join(args.scenario)
    else:
        names, config = load_scenario_file(args.config, seed)
        label = Path(args.config).stem
    manifest = write_session(names, args.out_dir, seed=seed or 0, session_name=label, config=config)
    doc = json.loads(manifest.read_text(encoding="utf-8"))
    for t in doc["trials"]:
        print(Path(args.out_dir) / t["tracker_log"])
        print(Path(args.out_dir) / t["truth_log"])
    print(manifest)
    return EXIT_OK


def cmd_gen_ref(args) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if args.cube is not None:
        poses = gen_iso_cube_poses(args.cube, args.incline)
        path = out / "iso_cube_poses.csv"
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["label", "x_mm", "y_mm", "z_mm", "qw", "qx", "qy", "qz"])
            for p in poses.poses:
                w.writerow([p.label, *map(repr, map(float, p.p)), *map(repr, map(float, p.q.as_array()))])
        written.append(path)
    for pid in args.protocol or ():
        if pid not in PROTOCOL_PATHS:
            raise InputError(f"unknown path protocol {pid!r}; known: {', '.join(PROTOCOL_PATHS)}")
        ref = gen_protocol_path(pid)
        pts = out / f"{pid}_path.csv"
        with open(pts, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x_mm", "y_mm", "z_mm"])
            w.writerows([[repr(float(v)) for v in row] for row in ref.points])
        desc = out / f"{pid}_path.json"
        desc.write_text(json.dumps(ref.descriptor(), indent=2) + "\n", encoding="utf-8")
        written += [pts, desc]
    if not written:
        raise InputError("nothing to generate; pass --protocol and/or --cube")
    for p in written:
        print(p)
    return EXIT_OK


def _finish(report: MetricReport, args, pos_limit=None, rot_limit=None) -> int:
    paths = emit_report(report, args.out_dir, tuple(args.format))
    for p in paths:
        print(p)
    if args.gate:
        decisions = report.gate
        if pos_limit is not None:
            decisions = requirement_gate(report, pos_limit, rot_limit)
        failed = [d for d in decisions if d.passed is False]
        for d in failed:
            print(f"GATE FAIL {d.trial_id}: {d.reason}", file=sys.stderr)
        return EXIT_OK if gate_passed(decisions) else EXIT_GATE
    return EXIT_OK


def cmd_evaluate(args) -> int:
    manifest = Path(args.manifest)
    doc = _load_json(manifest)
    if args.config:
        doc["config"] = _merge(doc.get("config") or {}, _load_json(args.config))
    session = session_from_dict(doc, base_dir=manifest.parent)
    report = evaluate_session(session, workers=args.workers)
    return _finish(report, args)


def cmd_report(args) -> int:
    report = load_report(args.report)
    if args.pos_limit is None and args.rot_limit is None:
        return _finish(report, args)
    det = report.config.get("detector", {})
    pos = args.pos_limit if args.pos_limit is not None else det.get("pos_limit", 5.0)
    rot = args.rot_limit if args.rot_limit is not None else det.get("rot_limit", 10.0)
    return _finish(report, args, pos, rot)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="posebench", description="6-DoF tracking accuracy evaluation toolkit")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="write synthetic log pairs and a session manifest")
    s.add_argument("--scenario", action="append", help="preset name (repeatable)")
    s.add_argument("--session", help=f"bundled session ({', '.join(SESSIONS)})")
    s.add_argument("--config", help="JSON scenario file")
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--out-dir", default="sim_out")
    s.add_argument("--list", action="store_true", help="list presets and exit")
    s.set_defaults(func=cmd_simulate)

    g = sub.add_parser("gen-ref", help="write reference paths and ISO cube poses")
    g.add_argument("--protocol", action="append", help="path protocol id, e.g. DT02 (repeatable)")
    g.add_argument("--cube", type=float, help="ISO 9283 cube edge length, mm")
    g.add_argument("--incline", type=float, default=45.0, help="measuring plane incline, deg")
    g.add_argument("--out-dir", default="ref_out")
    g.set_defaults(func=cmd_gen_ref)

    for name, helptext, fn in (
        ("evaluate", "evaluate a session manifest", cmd_evaluate),
        ("report", "re-emit files from a saved report.json", cmd_report),
    ):
        e = sub.add_parser(name, help=helptext)
        if name == "evaluate":
            e.add_argument("--manifest", required=True)
            e.add_argument("--config", help="JSON overriding the manifest's config block")
            e.add_argument("--workers", type=int, default=1)
        else:
            e.add_argument("--report", required=True)
            e.add_argument("--pos-limit", type=float)
            e.add_argument("--rot-limit", type=float)
        e.add_argument("--out-dir", default="report_out")
        e.add_argument("--gate", action="store_true", help="exit 1 if any trial fails the requirement gate")
        e.add_argument("--format", action="append", choices=("json", "csv"))
        e.set_defaults(func=fn)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "format", None) is None and args.command in ("evaluate", "report"):
        args.format = ["json", "csv"]
    try:
        return args.func(args)
    except (InputError, IngestError, ReportError, UnknownScenario, SimulationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
