"""Static accuracy/repeatability and dynamic trajectory error statistics."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from posebench.core import NS_PER_S, mean_quaternion, rotation_angle_deg

AXES = ("x", "y", "z", "3d")


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class StaticPoseResult:
    pose_id: str
    n: int
    mean_acc: float
    max_error: float
    repeatability: float | None
    orient_acc: float
    jitter_pos: float | None
    jitter_rot: float | None
    repeatability_iso: float | None = None

    def __post_init__(self):
        if self.n < 1:
            raise MetricError("a static result needs at least one repetition")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ErrorStats:
    sigma1: dict
    rms: dict
    max: dict
    mean: dict
    n: int

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class PathDeviation:
    mean: float
    std: float
    max: float
    distances: np.ndarray


@dataclass(frozen=True)
class DynamicTrialResult:
    trial_id: str
    sigma1: dict
    rms: dict
    max_error: dict
    drift_3d: float
    path_dev_mean: float | None
    n_samples: int
    path_dev_std: float | None = None
    path_dev_max: float | None = None
    orient_acc: float | None = None
    mean_3d: float | None = None  # mean error magnitude, mm

    def to_dict(self) -> dict:
        return asdict(self)


# --------------------------------------------------------------------------
# static poses


def _mean_position(series) -> np.ndarray:
    ok = series.valid
    if not np.any(ok):
        raise MetricError("repetition has no valid samples")
    return series.p[ok].mean(axis=0)


def _mean_orientation(series) -> np.ndarray:
    return mean_quaternion(series.q[series.valid])


def jitter(series) -> tuple[float, float]:
    """RMS deviation from the window's mean position (mm) and mean orientation (deg)."""
    s = series.select(series.valid) if hasattr(series, "select") else series
    if len(s.t) < 10:
        raise MetricError("jitter needs a window of at least 10 samples")
    p = s.p
    pos_rms = float(np.sqrt(np.mean(np.sum((p - p.mean(axis=0)) ** 2, axis=1))))
    qm = mean_quaternion(s.q)
    ang = rotation_angle_deg(s.q, np.broadcast_to(qm, s.q.shape))
    rot_rms = float(np.sqrt(np.mean(np.square(ang))))
    return pos_rms, rot_rms


def repeatability_from_points(points: np.ndarray) -> float:
    """Sample standard deviation of 3D positions about their centroid, mm.

    ``sqrt(sum ||x_i - c||^2 / (n - 1))``. For isotropic per-axis noise of
    std ``s`` this estimates ``sqrt(3) * s``.
    """
    points = np.asarray(points, dtype=float)
    d2 = np.sum((points - points.mean(axis=0)) ** 2, axis=1)
    return float(math.sqrt(d2.sum() / (len(points) - 1)))


def iso_repeatability(points: np.ndarray) -> float:
    """ISO 9283 pose repeatability ``l_bar + 3 S_l`` on distances to the barycentre."""
    points = np.asarray(points, dtype=float)
    l = np.linalg.norm(points - points.mean(axis=0), axis=1)
    return float(l.mean() + 3.0 * l.std(ddof=1))


def static_metrics(
    reps: Sequence,
    truth_reps: Sequence,
    pose_id: str = "",
    reference_orientation=None,
    iso: bool = False,
) -> StaticPoseResult:
    """Accuracy and repeatability over the dwell windows of one static pose.

    Each repetition contributes one representative tracker position (dwell
    mean) and the matching truth position. Orientation accuracy compares
    the dwell-mean tracker orientation with ``reference_orientation`` if
    given, else with the truth dwell orientation.
    """
    if len(reps) != len(truth_reps):
        raise MetricError("tracker and truth repetition counts differ")
    if not reps:
        raise MetricError("no repetitions")
    trk = np.array([_mean_position(r) for r in reps])
    tru = np.array([_mean_position(r) for r in truth_reps])
    err = np.linalg.norm(trk - tru, axis=1)

    angles = []
    for r, tr in zip(reps, truth_reps):
        q_ref = reference_orientation if reference_orientation is not None else _mean_orientation(tr)
        angles.append(rotation_angle_deg(_mean_orientation(r), q_ref))

    jit = [jitter(r) for r in reps if int(np.count_nonzero(r.valid)) >= 10]
    n = len(reps)
    return StaticPoseResult(
        pose_id=pose_id,
        n=n,
        mean_acc=float(err.mean()),
        max_error=float(err.max()),
        repeatability=repeatability_from_points(trk) if n >= 2 else None,
        orient_acc=float(np.mean(angles)),
        jitter_pos=float(np.mean([j[0] for j in jit])) if jit else None,
        jitter_rot=float(np.mean([j[1] for j in jit])) if jit else None,
        repeatability_iso=iso_repeatability(trk) if (iso and n >= 2) else None,
    )


# --------------------------------------------------------------------------
# dynamic errors


@dataclass(frozen=True, eq=False)
class ErrorSeries:
    t: np.ndarray  # ns
    e: np.ndarray  # (N, 3) signed tracker - truth, mm
    e3d: np.ndarray  # (N,)

    def __len__(self) -> int:
        return len(self.t)


def paired_error_series(paired) -> ErrorSeries:
    if len(paired) == 0:
        raise MetricError("empty paired series")
    e = paired.tracker.p - paired.truth.p
    return ErrorSeries(t=paired.tracker.t.copy(), e=e, e3d=np.linalg.norm(e, axis=1))


def error_stats(errors: ErrorSeries) -> ErrorStats:
    """Table-IV style statistics.

    Per axis: sigma1 is the population std of the signed errors, rms is
    ``sqrt(mean(e^2))`` and max is ``max |e|``. In 3D the same statistics
    are taken over the error magnitudes ``e3d``, so
    ``rms_3d^2 == rms_x^2 + rms_y^2 + rms_z^2``.
    """
    if len(errors) < 2:
        raise MetricError("error_stats needs at least 2 samples")
    e, m = errors.e, errors.e3d
    sigma = {a: float(e[:, i].std()) for i, a in enumerate(AXES[:3])}
    rms = {a: float(np.sqrt(np.mean(e[:, i] ** 2))) for i, a in enumerate(AXES[:3])}
    mx = {a: float(np.max(np.abs(e[:, i]))) for i, a in enumerate(AXES[:3])}
    mean = {a: float(e[:, i].mean()) for i, a in enumerate(AXES[:3])}
    sigma["3d"] = float(m.std())
    rms["3d"] = float(np.sqrt(np.mean(m**2)))
    mx["3d"] = float(m.max())
    mean["3d"] = float(m.mean())
    return ErrorStats(sigma1=sigma, rms=rms, max=mx, mean=mean, n=len(errors))


def drift_rate(t_ns, e3d) -> float:
    """OLS slope of error magnitude against time, mm/s."""
    t = np.asarray(t_ns, dtype=float) / NS_PER_S
    y = np.asarray(e3d, dtype=float)
    if len(np.unique(t)) < 2:
        raise MetricError("drift needs at least 2 distinct timestamps")
    tc = t - t.mean()
    return float(np.sum(tc * (y - y.mean())) / np.sum(tc**2))


def point_to_segments(points, a, b) -> tuple[np.ndarray, np.ndarray]:
    """Distance from each point to the nearest of the segments ``a[j] -> b[j]``.

    Returns (distances, index of nearest segment). Chunked so memory stays
    bounded for long trials against dense paths.
    """
    P = np.asarray(points, dtype=float).reshape(-1, 3)
    a = np.asarray(a, dtype=float)
    ab = np.asarray(b, dtype=float) - a
    ab2 = np.sum(ab * ab, axis=1)
    out_d = np.empty(len(P))
    out_j = np.empty(len(P), dtype=np.int64)
    chunk = max(1, 2_000_000 // max(len(a), 1))
    for s in range(0, len(P), chunk):
        p = P[s : s + chunk, None, :]
        tt = np.clip(np.sum((p - a) * ab, axis=2) / ab2, 0.0, 1.0)
        proj = a + tt[..., None] * ab
        d2 = np.sum((p - proj) ** 2, axis=2)
        j = np.argmin(d2, axis=1)
        out_j[s : s + chunk] = j
        out_d[s : s + chunk] = np.sqrt(d2[np.arange(len(j)), j])
    return out_d, out_j


def path_deviation(tracker, ref) -> PathDeviation:
    """Distance of every valid tracker sample to the reference polyline (mm)."""
    pts = tracker.p[tracker.valid] if hasattr(tracker, "valid") else np.asarray(tracker)
    if len(ref.points) < 2:
        raise MetricError("reference path needs at least 2 points")
    a, b = ref.segments()
    if ref.placement is not None:
        a, b = ref.placement(a), ref.placement(b)
    d, _ = point_to_segments(pts, a, b)
    if len(d) == 0:
        raise MetricError("no valid samples to compare against the path")
    return PathDeviation(mean=float(d.mean()), std=float(d.std()), max=float(d.max()), distances=d)


def orientation_errors_deg(paired) -> np.ndarray:
    return rotation_angle_deg(paired.tracker.q, paired.truth.q)


def dynamic_metrics(trial_id: str, paired, ref=None) -> DynamicTrialResult:
    errs = paired_error_series(paired)
    st = error_stats(errs)
    dev = path_deviation(paired.tracker, ref) if ref is not None else None
    return DynamicTrialResult(
        trial_id=trial_id,
        sigma1=st.sigma1,
        rms=st.rms,
        max_error=st.max,
        drift_3d=drift_rate(errs.t, errs.e3d),
        path_dev_mean=dev.mean if dev else None,
        n_samples=len(errs),
        path_dev_std=dev.std if dev else None,
        path_dev_max=dev.max if dev else None,
        orient_acc=float(np.mean(orientation_errors_deg(paired))),
        mean_3d=st.mean["3d"],
    )
