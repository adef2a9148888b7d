"""End-to-end session evaluation: ingest, register, pair, clean, measure, detect."""

from __future__ import annotations

import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from posebench.cleaning import run_pipeline
from posebench.core import Category, EventKind, FrameId, PoseSeries, RigidTransform, apply
from posebench.detect import (
    CLEANING_REJECTION,
    REGISTRATION_RMS,
    TRIAL_ERROR,
    Flag,
    detect_systematic_failure,
    requirement_gate,
)
from posebench.ingest import (
    IngestError,
    RegistrationSpec,
    Session,
    parse_pose_log,
    repetition_windows,
)
from posebench.metrics_pose import (
    MetricError,
    dynamic_metrics,
    error_stats,
    jitter,
    paired_error_series,
    static_metrics,
)
from posebench.metrics_system import (
    SpanTooShort,
    detect_gaps,
    initialization_time,
    long_term_drift,
    occlusion_metrics,
    reacquisition_time,
)
from posebench.reference import PROTOCOL_PATHS, gen_protocol_path, path_from_descriptor
from posebench.registration import RegistrationError, estimate_rigid, registration_quality
from posebench.report import MetricReport, TrialReport
from posebench.temporal import PairingError, pair_nearest

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class _Registered:
    transform: RigidTransform | None
    info: dict | None


def register(spec: RegistrationSpec | None) -> _Registered:
    """Solve the tracker-to-ground-truth transform for one registration block."""
    if spec is None or not spec.points:
        return _Registered(None, None)
    try:
        res = estimate_rigid(spec.tracker_points, spec.truth_points, spec.with_scale, spec.rms_threshold)
    except RegistrationError as exc:
        raise IngestError(f"registration failed: {exc}") from exc
    info = res.to_dict()
    if spec.holdout:
        src = np.array([h.tracker for h in spec.holdout], dtype=float)
        dst = np.array([h.truth for h in spec.holdout], dtype=float)
        info["holdout_rms"] = registration_quality(res.transform, src, dst)
    return _Registered(res.transform, info)


def _load_streams(session: Session, trial, reg: _Registered) -> tuple[PoseSeries, PoseSeries]:
    truth = parse_pose_log(session.resolve(trial.truth_log), FrameId.GROUNDTRUTH_WORLD)
    if reg.transform is None:
        tracker = parse_pose_log(session.resolve(trial.tracker_log), FrameId.GROUNDTRUTH_WORLD)
    else:
        tracker = apply(reg.transform, parse_pose_log(session.resolve(trial.tracker_log), FrameId.TRACKER_WORLD))
    return tracker, truth


def _reference_path(trial):
    if trial.reference:
        return path_from_descriptor(trial.reference)
    if trial.protocol_id in PROTOCOL_PATHS:
        return gen_protocol_path(trial.protocol_id)
    return None


def _pair_and_clean(tracker, truth, trial, cfg):
    al = cfg.alignment
    paired = pair_nearest(tracker.valid_only(), truth, al.max_gap_ns, al.max_truth_uses)
    cleaned = run_pipeline(paired, cfg.cleaning, trial.speed)
    pairing = {"n_pairs": len(paired), "dropped": paired.dropped, "max_abs_dt_ns": paired.max_abs_dt}
    return cleaned, pairing


def _static(trial, tracker, truth, cfg, out: dict):
    cleaned, out["pairing"] = _pair_and_clean(tracker, truth, trial, cfg)
    out["cleaning"] = cleaned.report.to_dict()
    kept = cleaned.paired.tracker
    windows = repetition_windows(truth, trial)
    reps, truth_reps = [], []
    for a, b in windows:
        r, tr = kept.window(a, b), truth.window(a, b)
        if len(r) and len(tr):
            reps.append(r)
            truth_reps.append(tr)
    if len(reps) < trial.repetitions:
        out["warnings"].append(f"found {len(reps)} of {trial.repetitions} repetitions")
    ref_q = trial.meta.get("reference_orientation")
    out["static"] = static_metrics(
        reps, truth_reps, trial.pose_id or trial.protocol_id,
        reference_orientation=np.asarray(ref_q, dtype=float) if ref_q is not None else None,
        iso=cfg.iso_repeatability,
    )
    return cleaned


def _dynamic(trial, tracker, truth, cfg, out: dict):
    cleaned, out["pairing"] = _pair_and_clean(tracker, truth, trial, cfg)
    out["cleaning"] = cleaned.report.to_dict()
    ref = _reference_path(trial)
    out["trajectory"] = ref.kind if ref is not None else None
    out["dynamic"] = dynamic_metrics(trial.trial_id, cleaned.paired, ref)
    return cleaned


def _system(trial, tracker, truth, cfg, out: dict):
    rule = cfg.stability
    sysd: dict = {"gaps": [list(g) for g in detect_gaps(tracker, rule.gap_factor)]}
    span = (int(truth.t[0]), int(truth.t[-1]))
    events = trial.events
    notes = []
    if trial.events_of(EventKind.OCCLUSION_PARTIAL, EventKind.OCCLUSION_FULL):
        occ = occlusion_metrics(tracker, events, rule, trial.speed, span=span)
        if occ.skipped:
            notes.append(f"{occ.skipped} occlusion event(s) outside the recorded span skipped")
        sysd["osr_pct"] = occ.osr
        sysd["rot_s"] = occ.rot
        sysd["occlusion"] = occ.to_dict()
    starts = trial.events_of(EventKind.SYSTEM_START)
    if starts:
        sysd["int_s"] = initialization_time(tracker, starts[0].t_start, rule, trial.speed)
        if sysd["int_s"] is None:
            notes.append("no stable track after system start")
    if trial.events_of(EventKind.ENTER_VOLUME):
        rl = reacquisition_time(tracker, events, rule, trial.speed)
        sysd["rlt_s"] = rl.rot
        enter = trial.events_of(EventKind.ENTER_VOLUME)[0].t_start
        after = tracker.window(enter, int(tracker.t[-1])) if len(tracker) else tracker
        if len(after) >= 2:
            paired = pair_nearest(after, truth, cfg.alignment.max_gap_ns)
            sysd["reacquired_sigma_3d"] = error_stats(paired_error_series(paired)).sigma1["3d"]
    if trial.category == Category.STABILITY:
        if len(tracker) >= 10:
            jp, jr = jitter(tracker)
            sysd["jitter_pos"], sysd["jitter_rot"] = jp, jr
        try:
            paired = pair_nearest(tracker, truth, cfg.alignment.max_gap_ns)
            drt = long_term_drift(paired, cfg.min_drift_span_s)
            sysd["drt_mm_per_min"] = drt.pos_mm_per_min
            sysd["drt_deg_per_min"] = drt.rot_deg_per_min
            sysd["drt_span_s"] = drt.span_s
        except SpanTooShort as exc:
            sysd["drt_mm_per_min"] = None
            notes.append(str(exc))
    sysd["note"] = "; ".join(notes)
    out["system"] = sysd
    return None


def evaluate_trial(session: Session, trial, reg: _Registered) -> tuple[TrialReport, list[Flag]]:
    out: dict = {"warnings": []}
    flags: list[Flag] = []
    cfg = session.config
    tracker, truth = _load_streams(session, trial, reg)
    try:
        if trial.category == Category.STATIC_POSE:
            cleaned = _static(trial, tracker, truth, cfg, out)
        elif trial.category == Category.DYNAMIC_TRAJECTORY:
            cleaned = _dynamic(trial, tracker, truth, cfg, out)
        else:
            cleaned = _system(trial, tracker, truth, cfg, out)
    except (MetricError, PairingError, ValueError) as exc:
        if isinstance(exc, IngestError):
            raise
        out["error"] = str(exc)
        flags.append(Flag(trial.trial_id, TRIAL_ERROR, str(exc)))
        cleaned = None

    if cleaned is not None and cleaned.report.warning:
        flags.append(
            Flag(trial.trial_id, CLEANING_REJECTION, f"{100 * cleaned.report.rejected_fraction:.1f}% of samples rejected")
        )
    st = out.get("static")
    if st is not None:
        det = cfg.detector
        f = detect_systematic_failure(st, det.acc_threshold, det.rep_threshold, trial_id=trial.trial_id)
        if f is not None:
            flags.append(f)
    if reg.info is not None and reg.info.get("warning"):
        flags.append(Flag(trial.trial_id, REGISTRATION_RMS, f"registration RMS {reg.info['rms_mm']:.3f} mm"))

    report = TrialReport(
        trial_id=trial.trial_id,
        category=trial.category.value,
        protocol_id=trial.protocol_id,
        condition=trial.condition,
        hmd_position=trial.hmd_position.value,
        speed=trial.speed,
        pose_id=trial.pose_id,
        trajectory=out.get("trajectory"),
        static=st,
        dynamic=out.get("dynamic"),
        system=out.get("system"),
        cleaning=out.get("cleaning"),
        pairing=out.get("pairing"),
        warnings=tuple(out["warnings"]),
        error=out.get("error"),
    )
    return report, flags


def evaluate_session(session: Session, workers: int = 1) -> MetricReport:
    """Evaluate every trial; results merge in manifest order whatever ``workers`` is."""
    regs: dict[int, _Registered] = {}
    by_trial = {}
    for t in session.trials:
        spec = session.registration_for(t.trial_id)
        key = id(spec)
        if key not in regs:
            regs[key] = register(spec)
        by_trial[t.trial_id] = regs[key]

    def run(trial):
        return evaluate_trial(session, trial, by_trial[trial.trial_id])

    # per-trial problems are recorded in the report, so library warnings are
    # silenced once here rather than per thread
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(run, session.trials))
        else:
            results = [run(t) for t in session.trials]

    trials = tuple(r for r, _ in results)
    flags = tuple(f for _, fl in results for f in fl)
    shared = session.registration_for(session.trials[0].trial_id)
    reg_info = regs[id(shared)].info
    det = session.config.detector
    report = MetricReport(
        session={"name": session.name, "base_dir": str(session.base_dir), "n_trials": len(trials)},
        trials=trials,
        registration=reg_info,
        flags=flags,
        config={"detector": det.__dict__, "cleaning": session.config.cleaning.to_dict()},
    )
    gate = requirement_gate(report, det.pos_limit, det.rot_limit)
    return MetricReport(
        session=report.session, trials=trials, registration=reg_info, flags=flags, gate=tuple(gate), config=report.config
    )
