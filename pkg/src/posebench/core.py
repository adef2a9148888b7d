"""Shared geometric and protocol types.

Conventions
-----------
- Lengths are millimetres, timestamps are integer nanoseconds.
- Quaternions are Hamilton, scalar-first ``(w, x, y, z)`` and are
  canonicalised to ``w >= 0``.
- Angles are radians internally; report-facing helpers return degrees.

All containers are immutable once built. ``PoseSeries`` stores its samples
column-wise in read-only numpy arrays; indexing it yields ``Pose`` objects.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

UNIT_NORM_TOL = 1e-9
RENORMALIZE_TOL = 1e-3
ORTHO_TOL = 1e-9

NS_PER_S = 1_000_000_000


class FrameId(str, enum.Enum):
    TRACKER_WORLD = "TRACKER_WORLD"
    GROUNDTRUTH_WORLD = "GROUNDTRUTH_WORLD"
    REFERENCE = "REFERENCE"


class Category(str, enum.Enum):
    STATIC_POSE = "STATIC_POSE"
    DYNAMIC_TRAJECTORY = "DYNAMIC_TRAJECTORY"
    OCCLUSION = "OCCLUSION"
    RELIABILITY = "RELIABILITY"
    STABILITY = "STABILITY"


class HmdPosition(str, enum.Enum):
    F1 = "F1"
    F2 = "F2"
    S3 = "S3"
    S4 = "S4"


class EventKind(str, enum.Enum):
    OCCLUSION_PARTIAL = "OCCLUSION_PARTIAL"
    OCCLUSION_FULL = "OCCLUSION_FULL"
    EXIT_VOLUME = "EXIT_VOLUME"
    ENTER_VOLUME = "ENTER_VOLUME"
    SYSTEM_START = "SYSTEM_START"
    REP_START = "REP_START"
    REP_END = "REP_END"


class InvalidQuaternion(ValueError):
    pass


class FrameMismatch(ValueError):
    pass


# --------------------------------------------------------------------------
# quaternions


@dataclass(frozen=True)
class Quaternion:
    """Unit quaternion, scalar first. Construct via :meth:`of` to validate."""

    w: float
    x: float
    y: float
    z: float

    @classmethod
    def of(cls, w, x=0.0, y=0.0, z=0.0) -> "Quaternion":
        arr = normalize_quat(np.array([w, x, y, z], dtype=float))
        return cls(*(float(v) for v in arr))

    @classmethod
    def identity(cls) -> "Quaternion":
        return cls(1.0, 0.0, 0.0, 0.0)

    @classmethod
    def from_axis_angle(cls, axis, angle_rad: float) -> "Quaternion":
        axis = np.asarray(axis, dtype=float)
        axis = axis / np.linalg.norm(axis)
        h = 0.5 * angle_rad
        return cls.of(math.cos(h), *(math.sin(h) * axis))

    def as_array(self) -> np.ndarray:
        return np.array([self.w, self.x, self.y, self.z])

    def to_matrix(self) -> np.ndarray:
        return quat_to_matrix(self.as_array())


def canonicalize(q: np.ndarray) -> np.ndarray:
    """Flip sign so that w >= 0. Works on (4,) or (N, 4)."""
    q = np.array(q, dtype=float)
    if q.ndim == 1:
        return -q if q[0] < 0 else q
    flip = q[:, 0] < 0
    q[flip] *= -1.0
    return q


def normalize_quat(q: np.ndarray) -> np.ndarray:
    """Normalise and canonicalise.

    Inputs whose norm deviates from 1 by more than 1e-3 are rejected rather
    than silently rescaled; such values indicate a corrupt or non-rotation
    quaternion.
    """
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q, axis=-1)
    if not np.all(np.isfinite(q)):
        raise InvalidQuaternion("non-finite quaternion component")
    if np.any(np.abs(n - 1.0) > RENORMALIZE_TOL):
        raise InvalidQuaternion(f"quaternion norm {np.max(np.abs(n - 1.0)) + 1.0:.6g} is not unit")
    # leave already-unit values bit-exact so logs round-trip losslessly
    scale = np.where(np.abs(n - 1.0) <= 4 * np.finfo(float).eps, 1.0, n)
    return canonicalize(q / scale[..., None])


def _as_quat_array(q) -> np.ndarray:
    if isinstance(q, Quaternion):
        return q.as_array()
    return np.asarray(q, dtype=float)


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product; broadcasts over leading dimensions."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    aw, ax, ay, az = np.moveaxis(a, -1, 0)
    bw, bx, by, bz = np.moveaxis(b, -1, 0)
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = np.asarray(q, dtype=float)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def matrix_to_quat(R: np.ndarray) -> np.ndarray:
    """Rotation matrix to canonical unit quaternion (Shepperd's method)."""
    R = np.asarray(R, dtype=float)
    tr = np.trace(R)
    if tr > 0:
        s = 2.0 * math.sqrt(1.0 + tr)
        q = [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = 2.0 * math.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
    elif R[1, 1] > R[2, 2]:
        s = 2.0 * math.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
        q = [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s]
    else:
        s = 2.0 * math.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
        q = [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s]
    q = np.array(q)
    return canonicalize(q / np.linalg.norm(q))


def _checked_unit(q) -> np.ndarray:
    q = _as_quat_array(q)
    n = np.linalg.norm(q, axis=-1)
    if np.any(np.abs(n - 1.0) > UNIT_NORM_TOL):
        q = normalize_quat(q)
    return q


def rotation_angle(a, b) -> np.ndarray | float:
    """Geodesic angle between rotations in radians, in [0, pi]."""
    a = _checked_unit(a)
    b = _checked_unit(b)
    dot = np.abs(np.sum(a * b, axis=-1))
    ang = 2.0 * np.arccos(np.clip(dot, 0.0, 1.0))
    return float(ang) if np.ndim(ang) == 0 else ang


def rotation_angle_deg(a, b) -> np.ndarray | float:
    """Geodesic angle ``2 acos(|<a, b>|)`` between two unit quaternions, degrees.

    Accepts :class:`Quaternion` or ``(4,)`` / ``(N, 4)`` arrays. Inputs within
    1e-3 of unit norm are renormalised; anything further off raises
    :class:`InvalidQuaternion`.
    """
    ang = np.degrees(rotation_angle(a, b))
    return float(ang) if np.ndim(ang) == 0 else ang


def mean_quaternion(qs: np.ndarray) -> np.ndarray:
    """Rotation average as the principal eigenvector of sum(q q^T)."""
    qs = np.asarray(qs, dtype=float)
    M = qs.T @ qs
    _, vecs = np.linalg.eigh(M)
    return canonicalize(vecs[:, -1])


# --------------------------------------------------------------------------
# poses


@dataclass(frozen=True)
class Pose:
    t: int
    p: np.ndarray
    q: Quaternion
    frame: FrameId
    valid: bool = True

    def __post_init__(self):
        if self.t < 0:
            raise ValueError("timestamp must be non-negative")
        p = np.array(self.p, dtype=float).reshape(3)
        if not np.all(np.isfinite(p)):
            raise ValueError("pose position must be finite")
        p.setflags(write=False)
        object.__setattr__(self, "p", p)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PoseSeries:
    """Strictly time-ordered pose samples in one frame.

    Arrays: ``t`` (N,) int64 ns, ``p`` (N, 3) mm, ``q`` (N, 4) wxyz,
    ``valid`` (N,) bool.
    """

    frame: FrameId
    t: np.ndarray
    p: np.ndarray
    q: np.ndarray
    valid: np.ndarray
    nominal_rate: float = 0.0

    def __post_init__(self):
        t = np.asarray(self.t, dtype=np.int64).reshape(-1)
        n = len(t)
        p = np.asarray(self.p, dtype=float).reshape(n, 3)
        q = np.asarray(self.q, dtype=float).reshape(n, 4)
        valid = np.asarray(self.valid, dtype=bool).reshape(n)
        if n and np.any(t < 0):
            raise ValueError("timestamps must be non-negative")
        if n > 1 and np.any(np.diff(t) <= 0):
            raise ValueError("timestamps must be strictly increasing")
        if not np.all(np.isfinite(p)):
            raise ValueError("positions must be finite")
        if np.any(valid):
            norms = np.linalg.norm(q[valid], axis=1)
            if np.any(np.abs(norms - 1.0) > UNIT_NORM_TOL):
                raise InvalidQuaternion("valid samples require unit quaternions")
        q = canonicalize(q) if n else q
        object.__setattr__(self, "frame", FrameId(self.frame))
        object.__setattr__(self, "t", _frozen(t))
        object.__setattr__(self, "p", _frozen(p))
        object.__setattr__(self, "q", _frozen(q))
        object.__setattr__(self, "valid", _frozen(valid))
        object.__setattr__(self, "nominal_rate", float(self.nominal_rate))

    @classmethod
    def from_poses(cls, poses: Iterable[Pose], nominal_rate: float = 0.0, frame=None) -> "PoseSeries":
        poses = list(poses)
        if frame is None:
            if not poses:
                raise ValueError("frame required for an empty series")
            frame = poses[0].frame
        if any(ps.frame != frame for ps in poses):
            raise FrameMismatch("all samples must share one frame")
        return cls(
            frame=frame,
            t=[ps.t for ps in poses],
            p=[ps.p for ps in poses] or np.zeros((0, 3)),
            q=[ps.q.as_array() for ps in poses] or np.zeros((0, 4)),
            valid=[ps.valid for ps in poses],
            nominal_rate=nominal_rate,
        )

    def __len__(self) -> int:
        return len(self.t)

    def __getitem__(self, i: int) -> Pose:
        return Pose(
            t=int(self.t[i]),
            p=self.p[i],
            q=Quaternion(*(float(v) for v in self.q[i])),
            frame=self.frame,
            valid=bool(self.valid[i]),
        )

    def __iter__(self) -> Iterator[Pose]:
        for i in range(len(self)):
            yield self[i]

    @property
    def t_s(self) -> np.ndarray:
        return self.t.astype(float) / NS_PER_S

    @property
    def duration_s(self) -> float:
        return float(self.t[-1] - self.t[0]) / NS_PER_S if len(self) > 1 else 0.0

    def select(self, mask_or_idx) -> "PoseSeries":
        """Subsequence by boolean mask or sorted index array."""
        return PoseSeries(
            frame=self.frame,
            t=self.t[mask_or_idx],
            p=self.p[mask_or_idx],
            q=self.q[mask_or_idx],
            valid=self.valid[mask_or_idx],
            nominal_rate=self.nominal_rate,
        )

    def window(self, t_start: int, t_end: int) -> "PoseSeries":
        """Samples with ``t_start <= t <= t_end``."""
        lo = np.searchsorted(self.t, t_start, side="left")
        hi = np.searchsorted(self.t, t_end, side="right")
        return self.select(slice(lo, hi))

    def valid_only(self) -> "PoseSeries":
        return self.select(self.valid)

    def equals(self, other: "PoseSeries", pos_tol: float = 0.0, quat_tol: float = 0.0) -> bool:
        return (
            self.frame == other.frame
            and len(self) == len(other)
            and np.array_equal(self.t, other.t)
            and np.array_equal(self.valid, other.valid)
            and np.allclose(self.p, other.p, rtol=0.0, atol=pos_tol)
            and np.allclose(self.q, other.q, rtol=0.0, atol=quat_tol)
        )


# --------------------------------------------------------------------------
# transforms


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """``x -> s * R @ x + tvec`` mapping ``source`` frame into ``target``."""

    R: np.ndarray = field(default_factory=lambda: np.eye(3))
    tvec: np.ndarray = field(default_factory=lambda: np.zeros(3))
    s: float = 1.0
    source: FrameId = FrameId.TRACKER_WORLD
    target: FrameId = FrameId.GROUNDTRUTH_WORLD

    def __post_init__(self):
        R = np.array(self.R, dtype=float).reshape(3, 3)
        tvec = np.array(self.tvec, dtype=float).reshape(3)
        if not np.allclose(R.T @ R, np.eye(3), rtol=0.0, atol=ORTHO_TOL) or abs(np.linalg.det(R) - 1.0) > ORTHO_TOL:
            raise ValueError("R must be a proper rotation (orthonormal, det=+1)")
        if not (self.s > 0 and math.isfinite(self.s)):
            raise ValueError("scale must be positive")
        if not np.all(np.isfinite(tvec)):
            raise ValueError("translation must be finite")
        object.__setattr__(self, "R", _frozen(R))
        object.__setattr__(self, "tvec", _frozen(tvec))
        object.__setattr__(self, "s", float(self.s))
        object.__setattr__(self, "source", FrameId(self.source))
        object.__setattr__(self, "target", FrameId(self.target))

    @classmethod
    def identity(cls, source=FrameId.TRACKER_WORLD, target=FrameId.GROUNDTRUTH_WORLD) -> "RigidTransform":
        return cls(source=source, target=target)

    def __call__(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        return self.s * points @ self.R.T + self.tvec

    def inverse(self) -> "RigidTransform":
        Rinv = self.R.T
        return RigidTransform(
            R=Rinv,
            tvec=-(Rinv @ self.tvec) / self.s,
            s=1.0 / self.s,
            source=self.target,
            target=self.source,
        )

    def as_matrix(self) -> np.ndarray:
        M = np.eye(4)
        M[:3, :3] = self.s * self.R
        M[:3, 3] = self.tvec
        return M

    def to_dict(self) -> dict:
        return {
            "R": self.R.tolist(),
            "t": self.tvec.tolist(),
            "s": self.s,
            "source": self.source.value,
            "target": self.target.value,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RigidTransform":
        return cls(
            R=d.get("R", np.eye(3)),
            tvec=d.get("t", np.zeros(3)),
            s=d.get("s", 1.0),
            source=d.get("source", FrameId.TRACKER_WORLD),
            target=d.get("target", FrameId.GROUNDTRUTH_WORLD),
        )


def compose(T1: RigidTransform, T2: RigidTransform) -> RigidTransform:
    """``T1 o T2``: apply ``T2`` first. ``T2.target`` must equal ``T1.source``."""
    if T2.target != T1.source:
        raise FrameMismatch(f"cannot compose {T2.source.value}->{T2.target.value} into {T1.source.value}")
    R = T1.R @ T2.R
    # re-orthonormalise to keep round-off from accumulating across long chains
    U, _, Vt = np.linalg.svd(R)
    R = U @ Vt
    return RigidTransform(
        R=R,
        tvec=T1.s * T1.R @ T2.tvec + T1.tvec,
        s=T1.s * T2.s,
        source=T2.source,
        target=T1.target,
    )


def apply(T: RigidTransform, series: PoseSeries) -> PoseSeries:
    """Map a series into ``T.target``; timestamps and validity are untouched."""
    if series.frame != T.source:
        raise FrameMismatch(f"series is in {series.frame.value}, transform expects {T.source.value}")
    qR = matrix_to_quat(T.R)
    return PoseSeries(
        frame=T.target,
        t=series.t,
        p=T(series.p) if len(series) else series.p,
        q=quat_multiply(qR, series.q) if len(series) else series.q,
        valid=series.valid,
        nominal_rate=series.nominal_rate,
    )


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniformly distributed rotation matrix."""
    q = rng.normal(size=4)
    return quat_to_matrix(q / np.linalg.norm(q))


# --------------------------------------------------------------------------
# protocol


@dataclass(frozen=True)
class Event:
    kind: EventKind
    t_start: int
    t_end: int

    def __post_init__(self):
        object.__setattr__(self, "kind", EventKind(self.kind))
        if self.t_end < self.t_start:
            raise ValueError(f"{self.kind.value} event ends before it starts")

    @property
    def duration_s(self) -> float:
        return (self.t_end - self.t_start) / NS_PER_S


def check_event_overlap(events: Sequence[Event]) -> None:
    by_kind: dict[EventKind, list[Event]] = {}
    for ev in events:
        by_kind.setdefault(ev.kind, []).append(ev)
    for kind, evs in by_kind.items():
        evs = sorted(evs, key=lambda e: e.t_start)
        for a, b in zip(evs, evs[1:]):
            if b.t_start < a.t_end:
                raise ValueError(f"overlapping {kind.value} windows at t={b.t_start} ns")


@dataclass(frozen=True)
class TrialManifest:
    trial_id: str
    category: Category
    protocol_id: str
    hmd_position: HmdPosition
    speed: float
    repetitions: int = 1
    tracker_log: str = ""
    truth_log: str = ""
    events: tuple[Event, ...] = ()
    pose_id: str | None = None
    reference: dict | None = None
    custom: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "category", Category(self.category))
        object.__setattr__(self, "hmd_position", HmdPosition(self.hmd_position))
        object.__setattr__(self, "events", tuple(self.events))
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if self.category == Category.DYNAMIC_TRAJECTORY and not self.speed > 0:
            raise ValueError("dynamic trials need a positive speed")
        if self.speed < 0:
            raise ValueError("speed must be non-negative")
        check_event_overlap(self.events)

    @property
    def condition(self) -> str:
        return f"{self.hmd_position.value} ({self.speed:g} mm/s)"

    def events_of(self, *kinds: EventKind) -> list[Event]:
        return sorted((e for e in self.events if e.kind in kinds), key=lambda e: e.t_start)
