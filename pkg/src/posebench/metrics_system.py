"""Robustness and reliability metrics: gaps, occlusion recovery, start-up, drift.

A *stable track* is ``k`` consecutive valid samples with no sampling gap
whose chord speed (first to last sample of the run) stays below the trial
speed plus ``v_margin``, and whose individual steps stay under the
kinematic ceiling. Chord speed is used instead of per-step speed because
per-step differences amplify sensor jitter by the sample rate.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from posebench.cleaning import VMAX_FLOOR, VMAX_SPEED_FACTOR
from posebench.core import NS_PER_S, Event, EventKind, PoseSeries, rotation_angle_deg

log = logging.getLogger(__name__)


class SpanTooShort(ValueError):
    pass


class EventSkipped(UserWarning):
    pass


@dataclass(frozen=True)
class StabilityRule:
    k: int = 10
    v_margin: float = 5.0  # mm/s above trial speed
    timeout_s: float = 10.0
    gap_factor: float = 2.0

    def __post_init__(self):
        if self.k < 2 or self.v_margin <= 0 or self.timeout_s <= 0 or self.gap_factor <= 1:
            raise ValueError("invalid stability rule")


def _period_ns(series: PoseSeries) -> float:
    if series.nominal_rate > 0:
        return NS_PER_S / series.nominal_rate
    if len(series) > 1:
        return float(np.median(np.diff(series.t)))
    raise ValueError("cannot infer sample period")


def detect_gaps(series: PoseSeries, gap_factor: float = 2.0) -> list[tuple[int, int]]:
    """Intervals (ns) with no valid tracking.

    A hole between samples more than ``gap_factor`` periods apart spans from
    where the next sample was due to the sample that finally arrived. A run
    of invalid samples spans from its first sample to the next valid one.
    Overlapping or touching intervals are merged.
    """
    n = len(series)
    if n == 0:
        return []
    period = _period_ns(series)
    t = series.t
    raw: list[tuple[int, int]] = []
    if n > 1:
        d = np.diff(t)
        for i in np.flatnonzero(d > gap_factor * period):
            raw.append((int(t[i] + round(period)), int(t[i + 1])))
    valid = series.valid
    i = 0
    while i < n:
        if valid[i]:
            i += 1
            continue
        j = i
        while j + 1 < n and not valid[j + 1]:
            j += 1
        end = int(t[j + 1]) if j + 1 < n else int(t[j] + round(period))
        raw.append((int(t[i]), end))
        i = j + 1
    raw.sort()
    merged: list[list[int]] = []
    for a, b in raw:
        if merged and a <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], b)
        else:
            merged.append([a, b])
    return [(a, b) for a, b in merged]


def find_stable_start(
    series: PoseSeries,
    t_from: int,
    rule: StabilityRule,
    speed: float = 0.0,
    t_limit: int | None = None,
) -> int | None:
    """Index of the first sample (t >= t_from) that opens a stable run.

    Runs must start no later than ``t_limit`` when given.
    """
    n = len(series)
    k = rule.k
    if n < k:
        return None
    t = series.t
    p = series.p
    valid = series.valid
    period = _period_ns(series)
    v_stable = speed + rule.v_margin
    v_ceiling = max(VMAX_SPEED_FACTOR * speed, VMAX_FLOOR)
    i0 = int(np.searchsorted(t, t_from, side="left"))

    step_dt = np.diff(t).astype(float)
    step_ok = (step_dt <= rule.gap_factor * period) & (
        np.linalg.norm(np.diff(p, axis=0), axis=1) / (step_dt / NS_PER_S) < v_ceiling
    )
    for i in range(i0, n - k + 1):
        if t_limit is not None and t[i] > t_limit:
            return None
        j = i + k - 1
        if not valid[i : j + 1].all() or not step_ok[i:j].all():
            continue
        chord = np.linalg.norm(p[j] - p[i]) / ((t[j] - t[i]) / NS_PER_S)
        if chord < v_stable:
            return i
    return None


@dataclass(frozen=True)
class RecoveryEvent:
    kind: str
    t_start: int
    t_end: int
    success: bool
    recovery_s: float | None


@dataclass(frozen=True)
class OcclusionResult:
    osr: float | None  # percent
    events: tuple[RecoveryEvent, ...]
    skipped: int = 0

    @property
    def rot(self) -> list[float | None]:
        return [e.recovery_s for e in self.events]

    def to_dict(self) -> dict:
        return {
            "osr_pct": self.osr,
            "skipped": self.skipped,
            "events": [e.__dict__ for e in self.events],
        }


def _recovery(series, ref_instant: int, rule: StabilityRule, speed: float):
    limit = ref_instant + int(rule.timeout_s * NS_PER_S)
    idx = find_stable_start(series, ref_instant, rule, speed, t_limit=limit)
    if idx is None:
        return False, None
    return True, max(0.0, (int(series.t[idx]) - ref_instant) / NS_PER_S)


def occlusion_metrics(
    series: PoseSeries,
    events: Sequence[Event],
    stability: StabilityRule | None = None,
    speed: float = 0.0,
    span: tuple[int, int] | None = None,
) -> OcclusionResult:
    """Occlusion success rate (%) and re-acquisition time (s) per event.

    An event succeeds when a stable track starts within ``timeout_s`` of the
    window end; its ROT is the time from the window end to the first sample
    of that run. ``span`` is the recorded trial interval (defaults to the
    series' own extent); events outside it are skipped with a warning.
    """
    rule = stability or StabilityRule()
    occl = [e for e in events if e.kind in (EventKind.OCCLUSION_PARTIAL, EventKind.OCCLUSION_FULL)]
    if not occl:
        raise ValueError("occlusion_metrics needs at least one occlusion event")
    if span is None:
        span = (int(series.t[0]), int(series.t[-1])) if len(series) else (0, 0)
    out, skipped = [], 0
    for ev in sorted(occl, key=lambda e: e.t_start):
        if ev.t_start < span[0] or ev.t_end > span[1]:
            warnings.warn(f"{ev.kind.value} window outside the recorded span; skipped", EventSkipped, stacklevel=2)
            skipped += 1
            continue
        ok, rot = _recovery(series, ev.t_end, rule, speed)
        out.append(RecoveryEvent(ev.kind.value, ev.t_start, ev.t_end, ok, rot))
    osr = 100.0 * sum(e.success for e in out) / len(out) if out else None
    return OcclusionResult(osr=osr, events=tuple(out), skipped=skipped)


def initialization_time(
    series: PoseSeries,
    system_start: int,
    stability: StabilityRule | None = None,
    speed: float = 0.0,
) -> float | None:
    """Seconds from ``system_start`` to the first sample of the first stable run."""
    rule = stability or StabilityRule()
    if len(series) and system_start > series.t[0]:
        raise ValueError("system start must not follow the first sample")
    idx = find_stable_start(series, system_start, rule, speed)
    if idx is None:
        return None
    return (int(series.t[idx]) - system_start) / NS_PER_S


def reacquisition_time(
    series: PoseSeries,
    events: Sequence[Event],
    stability: StabilityRule | None = None,
    speed: float = 0.0,
) -> OcclusionResult:
    """Re-acquisition after leaving the tracking volume, keyed on ENTER_VOLUME."""
    rule = stability or StabilityRule()
    enters = sorted((e for e in events if e.kind == EventKind.ENTER_VOLUME), key=lambda e: e.t_start)
    if not enters:
        raise ValueError("reacquisition_time needs ENTER_VOLUME events")
    out = []
    for ev in enters:
        ok, rlt = _recovery(series, ev.t_start, rule, speed)
        out.append(RecoveryEvent(ev.kind.value, ev.t_start, ev.t_end, ok, rlt))
    rate = 100.0 * sum(e.success for e in out) / len(out)
    return OcclusionResult(osr=rate, events=tuple(out))


@dataclass(frozen=True)
class DriftResult:
    pos_mm_per_min: float
    rot_deg_per_min: float
    span_s: float


def long_term_drift(paired, min_span_s: float = 30 * 60.0) -> DriftResult:
    """OLS slopes of position error (mm/min) and orientation error (deg/min)."""
    t = paired.tracker.t
    span_s = (int(t[-1]) - int(t[0])) / NS_PER_S if len(t) > 1 else 0.0
    if span_s < min_span_s:
        raise SpanTooShort(
            f"long-term drift needs at least {min_span_s / 60:.1f} min of data, got {span_s:.1f} s"
        )
    minutes = (t - t[0]).astype(float) / (60 * NS_PER_S)
    e = np.linalg.norm(paired.tracker.p - paired.truth.p, axis=1)
    ang = rotation_angle_deg(paired.tracker.q, paired.truth.q)
    return DriftResult(
        pos_mm_per_min=_slope(minutes, e),
        rot_deg_per_min=_slope(minutes, ang),
        span_s=span_s,
    )


def _slope(x: np.ndarray, y: np.ndarray) -> float:
    xc = x - x.mean()
    return float(np.sum(xc * (y - y.mean())) / np.sum(xc**2))
