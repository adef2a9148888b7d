"""Seeded synthetic tracker.

Plays a ground-truth schedule through an error model and returns the truth
stream, the tracker stream and labels for every injected fault, so that
downstream cleaning, detection and metrics can be scored exactly.

Error model per tracker sample, in the ground-truth frame::

    p_trk(t) = p_truth(t - latency) + offset + rep_scatter[rep(t)]
               + drift_ramp * (t - t0) * u + N(0, diag(jitter_sigma^2))

``offset`` is ``bias``, or the confident-wrong offset for flagged poses;
``u`` is the unit bias direction (x when the bias is zero). Spikes,
dropouts, start-up delay and energy-save blackouts are applied afterwards,
then the result is mapped into the tracker's own world frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from posebench.core import (
    NS_PER_S,
    Event,
    EventKind,
    FrameId,
    PoseSeries,
    RigidTransform,
    matrix_to_quat,
    quat_multiply,
)


class SimulationError(ValueError):
    pass


@dataclass(frozen=True)
class ConfidentWrong:
    """Precise-but-wrong tracking: a gross offset with small per-visit scatter.

    ``scatter`` is the 3D RMS scatter of the per-repetition position (mm),
    i.e. the repeatability the downstream metrics should report.
    """

    offset: tuple[float, float, float]
    scatter: float = 0.3
    pose_ids: tuple[str, ...] = ()


@dataclass(frozen=True)
class SpikeConfig:
    rate: float = 0.01  # fraction of samples
    min_mm: float = 30.0
    max_mm: float = 60.0
    include_mm: tuple[float, ...] = ()  # magnitudes that must appear among the spikes


@dataclass(frozen=True)
class FaultConfig:
    rng_seed: int
    jitter_sigma: tuple[float, float, float] = (0.0, 0.0, 0.0)
    bias: tuple[float, float, float] = (0.0, 0.0, 0.0)
    pose_scatter: tuple[float, float, float] = (0.0, 0.0, 0.0)  # per-axis std, one draw per repetition
    confident_wrong: ConfidentWrong | None = None
    dropout_windows: tuple[tuple[float, float], ...] = ()  # seconds from schedule start
    latency_ms: float = 0.0
    drift_ramp: float = 0.0  # mm/s along the bias direction
    tracker_rate: float | None = None  # Hz; None -> truth rate, same clock ticks
    timestamp_jitter_ms: float = 0.0
    energy_save_after: float | None = None  # s at rest before output stops
    start_delay_s: float = 0.0
    orient_sigma_deg: float = 0.0  # per-axis rotation-vector std
    spikes: SpikeConfig | None = None
    truth_sigma: float = 0.0  # mm, ground-truth noise per axis

    def __post_init__(self):
        if self.rng_seed is None:
            raise SimulationError("a seed is mandatory")
        for name in ("jitter_sigma", "bias", "pose_scatter"):
            v = tuple(float(x) for x in np.broadcast_to(np.asarray(getattr(self, name), dtype=float), (3,)))
            object.__setattr__(self, name, v)
        for name in ("jitter_sigma", "pose_scatter"):
            if min(getattr(self, name)) < 0:
                raise SimulationError(f"{name} must be non-negative")
        for name in ("latency_ms", "timestamp_jitter_ms", "start_delay_s", "orient_sigma_deg", "truth_sigma"):
            if getattr(self, name) < 0:
                raise SimulationError(f"{name} must be non-negative")
        if self.tracker_rate is not None and self.tracker_rate <= 0:
            raise SimulationError("tracker_rate must be positive")
        object.__setattr__(self, "dropout_windows", tuple(tuple(map(float, w)) for w in self.dropout_windows))

    def to_dict(self) -> dict:
        d = {
            "rng_seed": self.rng_seed,
            "jitter_sigma": list(self.jitter_sigma),
            "bias": list(self.bias),
            "pose_scatter": list(self.pose_scatter),
            "dropout_windows": [list(w) for w in self.dropout_windows],
            "latency_ms": self.latency_ms,
            "drift_ramp": self.drift_ramp,
            "tracker_rate": self.tracker_rate,
            "timestamp_jitter_ms": self.timestamp_jitter_ms,
            "energy_save_after": self.energy_save_after,
            "start_delay_s": self.start_delay_s,
            "orient_sigma_deg": self.orient_sigma_deg,
            "truth_sigma": self.truth_sigma,
            "confident_wrong": None,
            "spikes": None,
        }
        if self.confident_wrong:
            cw = self.confident_wrong
            d["confident_wrong"] = {"offset": list(cw.offset), "scatter": cw.scatter, "pose_ids": list(cw.pose_ids)}
        if self.spikes:
            sp = self.spikes
            d["spikes"] = {"rate": sp.rate, "min_mm": sp.min_mm, "max_mm": sp.max_mm, "include_mm": list(sp.include_mm)}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FaultConfig":
        d = dict(d)
        cw = d.pop("confident_wrong", None)
        sp = d.pop("spikes", None)
        if "rng_seed" not in d:
            raise SimulationError("fault config needs rng_seed")
        kw = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        if "dropout_windows" in kw:
            kw["dropout_windows"] = tuple(tuple(w) for w in kw["dropout_windows"])
        if cw:
            kw["confident_wrong"] = ConfidentWrong(
                offset=tuple(cw["offset"]), scatter=float(cw.get("scatter", 0.3)), pose_ids=tuple(cw.get("pose_ids", ()))
            )
        if sp:
            kw["spikes"] = SpikeConfig(
                rate=float(sp.get("rate", 0.01)),
                min_mm=float(sp.get("min_mm", 30.0)),
                max_mm=float(sp.get("max_mm", 60.0)),
                include_mm=tuple(sp.get("include_mm", ())),
            )
        return cls(**kw)


@dataclass(frozen=True, eq=False)
class SimulationResult:
    truth: PoseSeries
    tracker: PoseSeries
    events: tuple[Event, ...]
    labels: dict = field(default_factory=dict)


def _interp_positions(t_src: np.ndarray, p_src: np.ndarray, t_query: np.ndarray) -> np.ndarray:
    ts = t_src.astype(float)
    tq = t_query.astype(float)
    return np.stack([np.interp(tq, ts, p_src[:, k]) for k in range(3)], axis=1)


def _tracker_times(truth: PoseSeries, cfg: FaultConfig, rng: np.random.Generator) -> np.ndarray:
    t0, t1 = int(truth.t[0]), int(truth.t[-1])
    if cfg.tracker_rate is None or (truth.nominal_rate > 0 and cfg.tracker_rate == truth.nominal_rate):
        t = truth.t.astype(np.int64).copy()
    else:
        n = int(math.floor((t1 - t0) / NS_PER_S * cfg.tracker_rate)) + 1
        t = t0 + np.round(np.arange(n) * NS_PER_S / cfg.tracker_rate).astype(np.int64)
    if len(t) < 2:
        raise SimulationError("tracker rate yields fewer than 2 samples")
    jit = rng.normal(size=len(t)) * cfg.timestamp_jitter_ms * 1e6
    if cfg.timestamp_jitter_ms > 0:
        t = t + np.round(jit).astype(np.int64)
        t = np.clip(t, t0, t1)
        t = np.unique(t)
    return t


def _rest_blackouts(truth: PoseSeries, after_s: float) -> list[tuple[int, int]]:
    """Windows in which an energy-saving tracker is silent.

    Output stops ``after_s`` seconds into any rest period (truth speed below
    1 mm/s) and resumes instantly when motion starts again.
    """
    t = truth.t
    if len(t) < 2:
        return []
    v = np.linalg.norm(np.diff(truth.p, axis=0), axis=1) / (np.diff(t) / NS_PER_S)
    rest = np.concatenate([v < 1.0, [v[-1] < 1.0]])
    out = []
    i, n = 0, len(t)
    while i < n:
        if not rest[i]:
            i += 1
            continue
        j = i
        while j + 1 < n and rest[j + 1]:
            j += 1
        sleep_at = int(t[i]) + int(after_s * NS_PER_S)
        # silent up to the first sample whose step moves
        end = int(t[j + 1]) if j + 1 < n else int(t[-1]) + 1
        if sleep_at < end:
            out.append((sleep_at, end))
        i = j + 1
    return out


def _rep_index(t: np.ndarray, events) -> np.ndarray:
    starts = np.array(sorted(e.t_start for e in events if e.kind == EventKind.REP_START), dtype=np.int64)
    if len(starts) == 0:
        return np.zeros(len(t), dtype=np.int64)
    # a repetition's offset applies from the end of the previous dwell
    idx = np.searchsorted(starts, t, side="right") - 1
    return np.clip(idx, 0, len(starts) - 1)


def _random_unit(rng: np.random.Generator, n: int) -> np.ndarray:
    v = rng.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _small_rotations(rng: np.random.Generator, n: int, sigma_deg: float) -> np.ndarray:
    rv = rng.normal(size=(n, 3)) * math.radians(sigma_deg)
    ang = np.linalg.norm(rv, axis=1)
    axis = np.divide(rv, ang[:, None], out=np.zeros_like(rv), where=ang[:, None] > 0)
    return np.column_stack([np.cos(ang / 2), axis * np.sin(ang / 2)[:, None]])


def simulate(
    truth_schedule: PoseSeries,
    cfg: FaultConfig,
    events=(),
    pose_id: str | None = None,
    tracker_frame: RigidTransform | None = None,
) -> SimulationResult:
    """Run ``truth_schedule`` through the error model in ``cfg``.

    ``tracker_frame`` maps GROUNDTRUTH_WORLD into TRACKER_WORLD; when omitted
    the tracker reports directly in the ground-truth frame. All random draws
    happen in a fixed order, so the output depends only on the seed and
    configuration.
    """
    if len(truth_schedule) == 0:
        raise SimulationError("empty truth schedule")
    rng = np.random.default_rng(cfg.rng_seed)
    truth = truth_schedule
    t0 = int(truth.t[0])
    events = tuple(events)

    # fixed draw order: timestamps, rep scatter, jitter, orientation, spikes, truth noise
    t = _tracker_times(truth, cfg, rng)
    n = len(t)
    rep = _rep_index(t, events)
    n_reps = max(1, sum(1 for e in events if e.kind == EventKind.REP_START))

    cw = cfg.confident_wrong
    wrong = cw is not None and pose_id is not None and pose_id in cw.pose_ids
    if wrong:
        offset = np.asarray(cw.offset, dtype=float)
        scatter_sigma = np.full(3, cw.scatter / math.sqrt(3.0))
    else:
        offset = np.asarray(cfg.bias, dtype=float)
        scatter_sigma = np.asarray(cfg.pose_scatter, dtype=float)
    rep_offsets = rng.normal(size=(n_reps, 3)) * scatter_sigma
    jitter = rng.normal(size=(n, 3)) * np.asarray(cfg.jitter_sigma)
    rots = _small_rotations(rng, n, cfg.orient_sigma_deg)

    bias_dir = np.asarray(cfg.bias, dtype=float)
    norm = np.linalg.norm(bias_dir)
    u = bias_dir / norm if norm > 0 else np.array([1.0, 0.0, 0.0])

    t_true = t - int(round(cfg.latency_ms * 1e6))
    p_true = _interp_positions(truth.t, truth.p, t_true)
    qi = np.clip(np.searchsorted(truth.t, t_true, side="left"), 0, len(truth) - 1)
    q_true = truth.q[qi]

    elapsed = (t - t0) / NS_PER_S
    p = p_true + offset + rep_offsets[rep] + (cfg.drift_ramp * elapsed)[:, None] * u + jitter
    q = quat_multiply(rots, q_true) if cfg.orient_sigma_deg > 0 else q_true.copy()

    # spikes
    spike_idx = np.zeros(0, dtype=np.int64)
    if cfg.spikes is not None and cfg.spikes.rate > 0:
        sp = cfg.spikes
        k = max(len(sp.include_mm), int(round(sp.rate * n)))
        spike_idx = np.sort(rng.choice(n, size=min(k, n), replace=False))
        mags = rng.uniform(sp.min_mm, sp.max_mm, size=len(spike_idx))
        mags[: len(sp.include_mm)] = sp.include_mm[: len(spike_idx)]
        dirs = _random_unit(rng, len(spike_idx))
        p[spike_idx] += dirs * mags[:, None]

    # omissions
    keep = np.ones(n, dtype=bool)
    dropouts = [(t0 + int(a * NS_PER_S), t0 + int(b * NS_PER_S)) for a, b in cfg.dropout_windows]
    for a, b in dropouts:
        keep &= ~((t >= a) & (t <= b))
    blackouts = _rest_blackouts(truth, cfg.energy_save_after) if cfg.energy_save_after is not None else []
    for a, b in blackouts:
        keep &= ~((t >= a) & (t < b))
    if cfg.start_delay_s > 0:
        keep &= t >= t0 + int(cfg.start_delay_s * NS_PER_S)

    spike_t = t[spike_idx[keep[spike_idx]]]
    t, p, q = t[keep], p[keep], q[keep]

    frame = FrameId.GROUNDTRUTH_WORLD
    if tracker_frame is not None:
        if tracker_frame.source != FrameId.GROUNDTRUTH_WORLD or tracker_frame.target != FrameId.TRACKER_WORLD:
            raise SimulationError("tracker_frame must map GROUNDTRUTH_WORLD -> TRACKER_WORLD")
        p = tracker_frame(p) if len(p) else p
        q = quat_multiply(matrix_to_quat(tracker_frame.R), q) if len(q) else q
        frame = FrameId.TRACKER_WORLD

    tracker_rate = cfg.tracker_rate or truth.nominal_rate
    tracker = PoseSeries(frame=frame, t=t, p=p, q=q, valid=np.ones(len(t), bool), nominal_rate=tracker_rate)

    truth_out = truth
    truth_noise = rng.normal(size=(len(truth), 3)) * cfg.truth_sigma
    if cfg.truth_sigma > 0:
        truth_out = PoseSeries(
            frame=truth.frame, t=truth.t, p=truth.p + truth_noise, q=truth.q, valid=truth.valid,
            nominal_rate=truth.nominal_rate,
        )

    labels = {
        "spike_t_ns": [int(x) for x in spike_t],
        "dropout_windows_ns": [list(w) for w in dropouts],
        "energy_save_windows_ns": [list(w) for w in blackouts],
        "confident_wrong": bool(wrong),
        "pose_id": pose_id,
        "start_delay_s": cfg.start_delay_s,
        "faults": cfg.to_dict(),
    }
    return SimulationResult(truth=truth_out, tracker=tracker, events=events, labels=labels)


# --------------------------------------------------------------------------
# registration targets


MARKER_SIDE_MM = 150.0


def marker_corners(center=(0.0, 0.0, 0.0), side: float = MARKER_SIDE_MM) -> np.ndarray:
    """Corners 0-3 of a square marker lying in the z = const plane."""
    h = side / 2.0
    c = np.asarray(center, dtype=float)
    return c + np.array([[-h, h, 0.0], [h, h, 0.0], [h, -h, 0.0], [-h, -h, 0.0]])


def holdout_points(center=(0.0, 0.0, 0.0)) -> np.ndarray:
    c = np.asarray(center, dtype=float)
    return c + np.array([[250.0, 0.0, 120.0], [-200.0, 180.0, 60.0], [0.0, -260.0, 200.0]])


def registration_block(
    tracker_frame: RigidTransform | None,
    rng: np.random.Generator | None = None,
    noise_mm: float = 0.0,
    calibration_offset=(0.0, 0.0, 0.0),
    center=(0.0, 0.0, 0.0),
) -> dict:
    """Manifest ``registration`` section for a simulated rig.

    Marker corners are observed by the tracker displaced by
    ``calibration_offset`` (plus optional noise); holdout points are exact,
    so their residual after registration measures the calibration error.
    """
    M = tracker_frame or RigidTransform.identity(FrameId.GROUNDTRUTH_WORLD, FrameId.TRACKER_WORLD)
    corners = marker_corners(center)
    delta = np.asarray(calibration_offset, dtype=float)
    noise = (rng.normal(size=corners.shape) * noise_mm) if (rng is not None and noise_mm > 0) else 0.0
    seen = M(corners + delta) + noise
    hold = holdout_points(center)
    return {
        "points": [
            {"label": f"aruco-{i}", "tracker": seen[i].tolist(), "truth": corners[i].tolist()} for i in range(4)
        ],
        "holdout": [
            {"label": f"check-{i}", "tracker": M(h).tolist(), "truth": h.tolist()} for i, h in enumerate(hold)
        ],
    }


def default_tracker_frame(seed: int = 0) -> RigidTransform:
    """A fixed, non-trivial device world frame (rotation about a tilted axis plus offset)."""
    ang = math.radians(30.0 + 5.0 * (seed % 7))
    axis = np.array([0.2, -0.3, 1.0])
    axis /= np.linalg.norm(axis)
    K = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]])
    R = np.eye(3) + math.sin(ang) * K + (1 - math.cos(ang)) * K @ K
    return RigidTransform(
        R=R, tvec=np.array([412.5, -137.25, 88.0]), source=FrameId.GROUNDTRUTH_WORLD, target=FrameId.TRACKER_WORLD
    )


def with_seed(cfg: FaultConfig, seed: int) -> FaultConfig:
    return replace(cfg, rng_seed=seed)
