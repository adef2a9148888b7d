"""Session report: lossless JSON plus table-shaped CSV files.

CSV rounding: static values to 0.1 mm, dynamic statistics to 0.001 mm and
drift to 0.0001 mm/s, half-up on the decimal representation. Static cells
belonging to a flagged (confident-but-wrong) trial carry a ``*`` and are
left out of the Average rows; repeatability is still averaged.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path

from posebench.detect import SYSTEMATIC_FAILURE, Flag, GateDecision
from posebench.metrics_pose import DynamicTrialResult, StaticPoseResult

REPORT_SCHEMA = "posebench-report/1"
AXES = ("x", "y", "z", "3d")


class ReportError(ValueError):
    pass


@dataclass(frozen=True)
class TrialReport:
    trial_id: str
    category: str
    protocol_id: str
    condition: str
    hmd_position: str
    speed: float
    pose_id: str | None = None
    trajectory: str | None = None
    static: StaticPoseResult | None = None
    dynamic: DynamicTrialResult | None = None
    system: dict | None = None
    cleaning: dict | None = None
    pairing: dict | None = None
    warnings: tuple[str, ...] = ()
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "trial_id": self.trial_id,
            "category": self.category,
            "protocol_id": self.protocol_id,
            "condition": self.condition,
            "hmd_position": self.hmd_position,
            "speed": self.speed,
            "pose_id": self.pose_id,
            "trajectory": self.trajectory,
            "static": self.static.to_dict() if self.static else None,
            "dynamic": self.dynamic.to_dict() if self.dynamic else None,
            "system": self.system,
            "cleaning": self.cleaning,
            "pairing": self.pairing,
            "warnings": list(self.warnings),
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrialReport":
        d = dict(d)
        d["static"] = StaticPoseResult(**d["static"]) if d.get("static") else None
        d["dynamic"] = DynamicTrialResult(**d["dynamic"]) if d.get("dynamic") else None
        d["warnings"] = tuple(d.get("warnings", ()))
        return cls(**d)


@dataclass(frozen=True)
class MetricReport:
    session: dict
    trials: tuple[TrialReport, ...]
    registration: dict | None = None
    flags: tuple[Flag, ...] = ()
    gate: tuple[GateDecision, ...] = ()
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.trials:
            raise ReportError("a report needs at least one trial")
        ids = [t.trial_id for t in self.trials]
        if len(set(ids)) != len(ids):
            raise ReportError("duplicate trial in report")
        known = set(ids)
        for f in self.flags:
            if f.trial_id not in known:
                raise ReportError(f"flag references unknown trial {f.trial_id!r}")

    def trial(self, trial_id: str) -> TrialReport:
        for t in self.trials:
            if t.trial_id == trial_id:
                return t
        raise KeyError(trial_id)

    def flagged(self, kind: str = SYSTEMATIC_FAILURE) -> set[str]:
        return {f.trial_id for f in self.flags if f.kind == kind}

    def to_dict(self) -> dict:
        return {
            "schema": REPORT_SCHEMA,
            "session": self.session,
            "config": self.config,
            "registration": self.registration,
            "trials": [t.to_dict() for t in self.trials],
            "flags": [f.to_dict() for f in self.flags],
            "gate": [g.to_dict() for g in self.gate],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MetricReport":
        if d.get("schema") != REPORT_SCHEMA:
            raise ReportError(f"unsupported report schema {d.get('schema')!r}")
        return cls(
            session=d.get("session", {}),
            trials=tuple(TrialReport.from_dict(t) for t in d["trials"]),
            registration=d.get("registration"),
            flags=tuple(Flag(**f) for f in d.get("flags", ())),
            gate=tuple(GateDecision(**g) for g in d.get("gate", ())),
            config=d.get("config", {}),
        )


def to_json(report: MetricReport) -> str:
    return json.dumps(report.to_dict(), indent=2, sort_keys=False) + "\n"


def load_report(path) -> MetricReport:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ReportError(f"cannot read report {path}: {exc}") from exc
    return MetricReport.from_dict(doc)


# --------------------------------------------------------------------------
# CSV


def fmt(value, places: int) -> str:
    """Half-up rounding of the shortest decimal form of ``value``; empty for None."""
    if value is None:
        return ""
    q = Decimal(1).scaleb(-places)
    d = Decimal(repr(float(value))).quantize(q, rounding=ROUND_HALF_UP)
    if d == 0:
        d = abs(d)
    return f"{d:.{places}f}"


def _mean(values):
    vals = [v for v in values if v is not None]
    return sum(vals) / len(vals) if vals else None


def _write_csv(rows, header) -> str:
    buf = io.StringIO(newline="")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


STATIC_HEADER = (
    "pose_id", "condition", "trial_id", "mean_acc", "max_error", "repeatability",
    "orient_acc", "jitter_pos", "jitter_rot", "flag",
)


def static_rows(report: MetricReport) -> list[list[str]]:
    """Per-pose rows grouped by condition, each group closed by an Average row,
    then per-pose averages over all conditions."""
    flagged = report.flagged()
    trials = [t for t in report.trials if t.static is not None]
    groups: dict[str, list[TrialReport]] = {}
    for t in trials:
        groups.setdefault(t.condition, []).append(t)
    rows = []

    def avg_row(label, cond, members):
        ok = [m for m in members if m.trial_id not in flagged]
        return [
            label, cond, "",
            fmt(_mean([m.static.mean_acc for m in ok]), 1),
            fmt(_mean([m.static.max_error for m in ok]), 1),
            fmt(_mean([m.static.repeatability for m in members]), 1),
            fmt(_mean([m.static.orient_acc for m in ok]), 1),
            fmt(_mean([m.static.jitter_pos for m in members]), 1),
            fmt(_mean([m.static.jitter_rot for m in members]), 1),
            "",
        ]

    for cond, members in groups.items():
        members = sorted(members, key=lambda m: (m.pose_id or "", m.trial_id))
        for m in members:
            s = m.static
            star = "*" if m.trial_id in flagged else ""
            rows.append([
                m.pose_id or "", cond, m.trial_id,
                fmt(s.mean_acc, 1) + star, fmt(s.max_error, 1) + star, fmt(s.repeatability, 1),
                fmt(s.orient_acc, 1), fmt(s.jitter_pos, 1), fmt(s.jitter_rot, 1),
                SYSTEMATIC_FAILURE if star else "",
            ])
        rows.append(avg_row("Average", cond, members))

    by_pose: dict[str, list[TrialReport]] = {}
    for t in trials:
        by_pose.setdefault(t.pose_id or t.trial_id, []).append(t)
    if len(groups) > 1:
        for pose in sorted(by_pose):
            rows.append(avg_row(pose, "all", by_pose[pose]))
    return rows


DYNAMIC_HEADER = (
    ("trial_id", "trajectory", "position", "speed")
    + tuple(f"sigma_{a}" for a in AXES)
    + tuple(f"rms_{a}" for a in AXES)
    + tuple(f"max_{a}" for a in AXES)
    + ("drift_3d", "path_dev_mean", "orient_acc", "n_samples")
)


def _dyn_values(d: DynamicTrialResult) -> list:
    return (
        [d.sigma1[a] for a in AXES] + [d.rms[a] for a in AXES] + [d.max_error[a] for a in AXES]
        + [d.drift_3d, d.path_dev_mean, d.orient_acc]
    )


def _dyn_fmt(values) -> list[str]:
    places = [3] * 12 + [4, 3, 3]
    return [fmt(v, p) for v, p in zip(values, places)]


def dynamic_rows(report: MetricReport) -> list[list[str]]:
    trials = [t for t in report.trials if t.dynamic is not None]
    groups: dict[str, list[TrialReport]] = {}
    for t in trials:
        groups.setdefault(t.trajectory or t.protocol_id, []).append(t)
    rows = []
    for traj, members in groups.items():
        for m in members:
            rows.append([m.trial_id, traj, m.hmd_position, f"{m.speed:g}"] + _dyn_fmt(_dyn_values(m.dynamic))
                        + [str(m.dynamic.n_samples)])
        cols = list(zip(*[_dyn_values(m.dynamic) for m in members]))
        rows.append([f"Average {traj.capitalize()}", traj, "", ""] + _dyn_fmt([_mean(c) for c in cols]) + [""])
    return rows


SYSTEM_HEADER = (
    "trial_id", "category", "osr_pct", "rot_s", "int_s", "rlt_s",
    "drt_mm_per_min", "drt_deg_per_min", "jitter_pos", "jitter_rot", "gaps", "note",
)


def system_rows(report: MetricReport) -> list[list[str]]:
    rows = []
    for t in report.trials:
        s = t.system
        if s is None:
            continue
        rot = s.get("rot_s") or []
        rows.append([
            t.trial_id, t.category,
            fmt(s.get("osr_pct"), 1),
            ";".join(fmt(v, 3) for v in rot),
            fmt(s.get("int_s"), 3),
            ";".join(fmt(v, 3) for v in (s.get("rlt_s") or [])),
            fmt(s.get("drt_mm_per_min"), 4),
            fmt(s.get("drt_deg_per_min"), 4),
            fmt(s.get("jitter_pos"), 3),
            fmt(s.get("jitter_rot"), 3),
            str(len(s.get("gaps", []))),
            s.get("note", ""),
        ])
    return rows


def emit_report(report: MetricReport, out_dir, formats=("json", "csv")) -> list[Path]:
    """Write the report files and return their paths."""
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ReportError(f"cannot create {out_dir}: {exc}") from exc
    unknown = set(formats) - {"json", "csv"}
    if unknown:
        raise ReportError(f"unknown report formats: {sorted(unknown)}")
    written = []

    def put(name, text):
        path = out_dir / name
        try:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        except OSError as exc:
            raise ReportError(f"cannot write {path}: {exc}") from exc
        written.append(path)

    if "json" in formats:
        put("report.json", to_json(report))
    if "csv" in formats:
        for name, header, rows in (
            ("static.csv", STATIC_HEADER, static_rows(report)),
            ("dynamic.csv", DYNAMIC_HEADER, dynamic_rows(report)),
            ("system.csv", SYSTEM_HEADER, system_rows(report)),
        ):
            if rows:
                put(name, _write_csv(rows, header))
    return written
