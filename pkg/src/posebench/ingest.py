"""Pose-log and session-manifest I/O, plus repetition segmentation.

Pose log CSV (header mandatory, UTF-8, ``.`` decimal, LF)::

    t_ns,x_mm,y_mm,z_mm,qw,qx,qy,qz,valid

Quaternions are Hamilton, scalar first. ``valid`` is 0 or 1.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from posebench.cleaning import CleaningConfig
from posebench.core import (
    NS_PER_S,
    Category,
    Event,
    EventKind,
    FrameId,
    PoseSeries,
    TrialManifest,
    normalize_quat,
)
from posebench.metrics_system import StabilityRule
from posebench.temporal import AlignmentConfig

log = logging.getLogger(__name__)

LOG_COLUMNS = ("t_ns", "x_mm", "y_mm", "z_mm", "qw", "qx", "qy", "qz", "valid")
SESSION_SCHEMA = "posebench-session/1"
MAX_DROP_FRACTION = 0.5

KNOWN_PROTOCOLS = frozenset(
    [f"SP0{i}" for i in range(1, 9)]
    + ["DT01", "DT02", "DT03", "DT04-1", "DT04-2", "RT03", "SYT01", "SYT02", "ST01"]
)

# dwell detection fallback
V_SETTLE = 1.0  # mm/s
SETTLE_WINDOW_S = 0.2
T_SETTLE_S = 0.5


class IngestError(ValueError):
    """Input that cannot be turned into a valid series or session."""


class SegmentationWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ParsedLog:
    series: PoseSeries
    drop_count: int
    row_count: int


# --------------------------------------------------------------------------
# pose logs


def _fmt(v: float) -> str:
    return repr(float(v))


def write_pose_log(series: PoseSeries, path) -> Path:
    """Emit a series in the standard log schema; floats use shortest round-trip repr."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOG_COLUMNS)
        for t, p, q, ok in zip(series.t, series.p, series.q, series.valid):
            w.writerow([int(t), *(_fmt(v) for v in p), *(_fmt(v) for v in q), int(ok)])
    return path


def parse_pose_log_detailed(path, frame: FrameId, nominal_rate: float | None = None) -> ParsedLog:
    path = Path(path)
    try:
        fh = open(path, encoding="utf-8", newline="")
    except OSError as exc:
        raise IngestError(f"cannot read pose log {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise IngestError(f"{path}: empty file")
        header = [h.strip() for h in header]
        for col in LOG_COLUMNS:
            if col not in header:
                raise IngestError(f"{path}: missing required column '{col}'")
        idx = [header.index(c) for c in LOG_COLUMNS]
        rows = [r for r in reader if r and any(c.strip() for c in r)]

    if not rows:
        raise IngestError(f"{path}: no data rows")

    ts, ps, qs, vs = [], [], [], []
    dropped = 0
    last_t = -1
    for row in rows:
        try:
            vals = [row[i].strip() for i in idx]
            t = int(vals[0])
            p = [float(v) for v in vals[1:4]]
            q = np.array([float(v) for v in vals[4:8]])
            ok = int(vals[8])
        except (ValueError, IndexError):
            dropped += 1
            continue
        if ok not in (0, 1) or t < 0 or t <= last_t or not all(math.isfinite(v) for v in p):
            dropped += 1
            continue
        if ok:
            try:
                q = normalize_quat(q)
            except ValueError:
                dropped += 1
                continue
        elif not np.all(np.isfinite(q)):
            q = np.array([1.0, 0.0, 0.0, 0.0])
        ts.append(t)
        ps.append(p)
        qs.append(q)
        vs.append(bool(ok))
        last_t = t

    if dropped > MAX_DROP_FRACTION * len(rows):
        raise IngestError(f"{path}: {dropped} of {len(rows)} rows rejected; log presumed corrupt")
    if dropped:
        log.info("%s: dropped %d of %d rows", path, dropped, len(rows))

    t_arr = np.array(ts, dtype=np.int64)
    if nominal_rate is None:
        nominal_rate = _estimate_rate(t_arr)
    series = PoseSeries(frame=frame, t=t_arr, p=np.array(ps), q=np.array(qs), valid=vs, nominal_rate=nominal_rate)
    return ParsedLog(series=series, drop_count=dropped, row_count=len(rows))


def parse_pose_log(path, frame: FrameId, nominal_rate: float | None = None) -> PoseSeries:
    """Parse a pose log; see :func:`parse_pose_log_detailed` for the drop count."""
    return parse_pose_log_detailed(path, frame, nominal_rate).series


def _estimate_rate(t: np.ndarray) -> float:
    if len(t) < 2:
        return 0.0
    # integer-ns periods make e.g. 30 Hz read back as 30.0000003; round to 1 mHz
    return round(float(NS_PER_S / np.median(np.diff(t))), 3)


# --------------------------------------------------------------------------
# manifests


@dataclass(frozen=True)
class PointPair:
    label: str
    tracker: tuple[float, float, float]
    truth: tuple[float, float, float]


@dataclass(frozen=True)
class RegistrationSpec:
    points: tuple[PointPair, ...] = ()
    holdout: tuple[PointPair, ...] = ()
    with_scale: bool = False
    rms_threshold: float = 1.0

    @property
    def tracker_points(self) -> np.ndarray:
        return np.array([pp.tracker for pp in self.points], dtype=float).reshape(-1, 3)

    @property
    def truth_points(self) -> np.ndarray:
        return np.array([pp.truth for pp in self.points], dtype=float).reshape(-1, 3)


@dataclass(frozen=True)
class DetectorConfig:
    acc_threshold: float = 50.0
    rep_threshold: float = 1.0
    pos_limit: float = 5.0
    rot_limit: float = 10.0


@dataclass(frozen=True)
class SessionConfig:
    cleaning: CleaningConfig = field(default_factory=CleaningConfig)
    alignment: AlignmentConfig = field(default_factory=AlignmentConfig)
    stability: StabilityRule = field(default_factory=StabilityRule)
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    iso_repeatability: bool = False
    min_drift_span_s: float = 30 * 60.0


@dataclass(frozen=True)
class Session:
    trials: tuple[TrialManifest, ...]
    registration: RegistrationSpec | None = None
    trial_registration: dict = field(default_factory=dict)
    config: SessionConfig = field(default_factory=SessionConfig)
    base_dir: Path = Path(".")
    name: str = ""

    def registration_for(self, trial_id: str) -> RegistrationSpec | None:
        return self.trial_registration.get(trial_id, self.registration)

    def resolve(self, rel: str) -> Path:
        return (self.base_dir / rel).resolve()


def _point_pairs(items) -> tuple[PointPair, ...]:
    out = []
    for i, it in enumerate(items or ()):
        out.append(
            PointPair(
                label=str(it.get("label", i)),
                tracker=tuple(float(v) for v in it["tracker"]),
                truth=tuple(float(v) for v in it["truth"]),
            )
        )
    return tuple(out)


def _registration(d: dict | None) -> RegistrationSpec | None:
    if not d:
        return None
    return RegistrationSpec(
        points=_point_pairs(d.get("points")),
        holdout=_point_pairs(d.get("holdout")),
        with_scale=bool(d.get("with_scale", False)),
        rms_threshold=float(d.get("rms_threshold_mm", 1.0)),
    )


def _session_config(d: dict | None) -> SessionConfig:
    d = d or {}
    clean = d.get("cleaning", {})
    stages = clean.get("enabled_stages")
    cleaning = CleaningConfig(
        zscore_k=float(clean.get("zscore_k", 3.0)),
        iqr_k=float(clean.get("iqr_k", 1.5)),
        vmax=clean.get("vmax"),
        **({"enabled_stages": tuple(stages)} if stages is not None else {}),
    )
    al = d.get("alignment", {})
    alignment = AlignmentConfig(
        max_gap_ns=al.get("max_gap_ns"),
        max_truth_uses=al.get("max_truth_uses"),
    )
    st = d.get("stability", {})
    stability = StabilityRule(
        k=int(st.get("k", 10)),
        v_margin=float(st.get("v_margin", 5.0)),
        timeout_s=float(st.get("timeout_s", 10.0)),
    )
    det = d.get("detector", {})
    detector = DetectorConfig(
        acc_threshold=float(det.get("acc_threshold_mm", 50.0)),
        rep_threshold=float(det.get("rep_threshold_mm", 1.0)),
        pos_limit=float(det.get("pos_limit_mm", 5.0)),
        rot_limit=float(det.get("rot_limit_deg", 10.0)),
    )
    return SessionConfig(
        cleaning=cleaning,
        alignment=alignment,
        stability=stability,
        detector=detector,
        iso_repeatability=bool(d.get("iso_repeatability", False)),
        min_drift_span_s=float(d.get("min_drift_span_s", 30 * 60.0)),
    )


def trial_from_dict(d: dict) -> TrialManifest:
    try:
        events = tuple(
            Event(kind=EventKind(e["kind"]), t_start=int(e["t_start_ns"]), t_end=int(e.get("t_end_ns", e["t_start_ns"])))
            for e in d.get("events", ())
        )
        protocol = str(d["protocol_id"])
        return TrialManifest(
            trial_id=str(d["trial_id"]),
            category=Category(d["category"]),
            protocol_id=protocol,
            hmd_position=d["hmd_position"],
            speed=float(d.get("speed", 0.0)),
            repetitions=int(d.get("repetitions", 1)),
            tracker_log=str(d.get("tracker_log", "")),
            truth_log=str(d.get("truth_log", "")),
            events=events,
            pose_id=d.get("pose_id"),
            reference=d.get("reference"),
            custom=protocol not in KNOWN_PROTOCOLS,
            meta=dict(d.get("meta", {})),
        )
    except KeyError as exc:
        raise IngestError(f"trial is missing field {exc}") from exc
    except ValueError as exc:
        raise IngestError(f"trial {d.get('trial_id', '?')}: {exc}") from exc


def trial_to_dict(tr: TrialManifest) -> dict:
    d = {
        "trial_id": tr.trial_id,
        "category": tr.category.value,
        "protocol_id": tr.protocol_id,
        "hmd_position": tr.hmd_position.value,
        "speed": tr.speed,
        "repetitions": tr.repetitions,
        "tracker_log": tr.tracker_log,
        "truth_log": tr.truth_log,
        "events": [{"kind": e.kind.value, "t_start_ns": e.t_start, "t_end_ns": e.t_end} for e in tr.events],
    }
    if tr.pose_id is not None:
        d["pose_id"] = tr.pose_id
    if tr.reference is not None:
        d["reference"] = tr.reference
    if tr.meta:
        d["meta"] = tr.meta
    return d


def parse_manifest(path, check_files: bool = True) -> Session:
    """Load and validate a session manifest (JSON). Paths resolve against its directory."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise IngestError(f"cannot read manifest {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise IngestError(f"{path}: invalid JSON ({exc})") from exc
    return session_from_dict(doc, base_dir=path.parent, check_files=check_files)


def session_from_dict(doc: dict, base_dir=".", check_files: bool = True) -> Session:
    base_dir = Path(base_dir)
    trials_raw = doc.get("trials") or []
    if not trials_raw:
        raise IngestError("manifest declares no trials")
    trials = tuple(trial_from_dict(t) for t in trials_raw)
    ids = [t.trial_id for t in trials]
    if len(set(ids)) != len(ids):
        raise IngestError("duplicate trial_id in manifest")
    for t in trials:
        if t.custom:
            log.warning("trial %s uses custom protocol_id %s", t.trial_id, t.protocol_id)

    session = Session(
        trials=trials,
        registration=_registration(doc.get("registration")),
        trial_registration={
            t["trial_id"]: _registration(t["registration"]) for t in trials_raw if t.get("registration")
        },
        config=_session_config(doc.get("config")),
        base_dir=base_dir,
        name=str(doc.get("name", "")),
    )
    for t in trials:
        reg = session.registration_for(t.trial_id)
        if reg is not None and reg.points:
            _check_registration_points(reg, t.trial_id)
        if check_files:
            for rel in (t.tracker_log, t.truth_log):
                if not rel or not session.resolve(rel).is_file():
                    raise IngestError(f"trial {t.trial_id}: log file '{rel}' not found")
    return session


def _check_registration_points(reg: RegistrationSpec, trial_id: str) -> None:
    for pts in (reg.tracker_points, reg.truth_points):
        if len(pts) < 3:
            raise IngestError(f"trial {trial_id}: registration needs >= 3 point pairs")
        sv = np.linalg.svd(pts - pts.mean(axis=0), compute_uv=False)
        if sv[1] < 1e-6 * sv[0]:
            raise IngestError(f"trial {trial_id}: registration points are collinear")


# --------------------------------------------------------------------------
# repetitions


def _rep_windows_from_events(events: Sequence[Event]) -> list[tuple[int, int]]:
    starts = sorted((e for e in events if e.kind == EventKind.REP_START), key=lambda e: e.t_start)
    ends = sorted((e for e in events if e.kind == EventKind.REP_END), key=lambda e: e.t_start)
    if starts and all(e.t_end > e.t_start for e in starts):
        return [(e.t_start, e.t_end) for e in starts]
    windows = []
    for s in starts:
        nxt = next((e for e in ends if e.t_start > s.t_start), None)
        if nxt is None:
            break
        windows.append((s.t_start, nxt.t_start))
    return windows


def detect_dwell_windows(
    series: PoseSeries,
    v_settle: float = V_SETTLE,
    window_s: float = SETTLE_WINDOW_S,
    t_settle_s: float = T_SETTLE_S,
) -> list[tuple[int, int]]:
    """Find runs where the body is at rest for at least ``t_settle_s``.

    A sample counts as settled when the chord speed over the ``window_s``
    interval starting at it, or ending at it, is below ``v_settle``. Forward
    and backward windows together pin each dwell boundary to the first and
    last resting sample.
    """
    n = len(series)
    if n < 2:
        return []
    t = series.t_s
    p = series.p
    w = window_s

    def chord_speed(t0: np.ndarray, t1: np.ndarray) -> np.ndarray:
        p0 = np.stack([np.interp(t0, t, p[:, k]) for k in range(3)], axis=1)
        p1 = np.stack([np.interp(t1, t, p[:, k]) for k in range(3)], axis=1)
        return np.linalg.norm(p1 - p0, axis=1) / w

    fwd_ok = (t + w <= t[-1]) & (chord_speed(t, np.minimum(t + w, t[-1])) < v_settle)
    bwd_ok = (t - w >= t[0]) & (chord_speed(np.maximum(t - w, t[0]), t) < v_settle)
    settled = (fwd_ok | bwd_ok) & series.valid

    windows = []
    i = 0
    while i < n:
        if not settled[i]:
            i += 1
            continue
        j = i
        while j + 1 < n and settled[j + 1]:
            j += 1
        if t[j] - t[i] >= t_settle_s:
            windows.append((int(series.t[i]), int(series.t[j])))
        i = j + 1
    return windows


def segment_repetitions(
    series: PoseSeries,
    manifest: TrialManifest,
    dwell_fallback: bool = True,
    windows: list[tuple[int, int]] | None = None,
) -> list[PoseSeries]:
    """Split a trial into one sub-series per repetition.

    Annotated REP windows take precedence; otherwise dwell detection runs on
    ``series``. Pass precomputed ``windows`` to cut a second stream at the
    same boundaries. A shortfall against ``manifest.repetitions`` warns.
    """
    if windows is None:
        windows = repetition_windows(series, manifest, dwell_fallback)
    reps = [series.window(a, b) for a, b in windows]
    reps = [r for r in reps if len(r)]
    if len(reps) < manifest.repetitions:
        warnings.warn(
            f"trial {manifest.trial_id}: found {len(reps)} of {manifest.repetitions} repetitions",
            SegmentationWarning,
            stacklevel=2,
        )
    return reps


def repetition_windows(series: PoseSeries, manifest: TrialManifest, dwell_fallback: bool = True) -> list[tuple[int, int]]:
    windows = _rep_windows_from_events(manifest.events)
    if not windows and dwell_fallback:
        windows = detect_dwell_windows(series)
    # guard against overlapping annotations
    windows = sorted(windows)
    out: list[tuple[int, int]] = []
    for a, b in windows:
        if out and a <= out[-1][1]:
            raise IngestError(f"trial {manifest.trial_id}: overlapping repetition windows")
        out.append((a, b))
    return out
