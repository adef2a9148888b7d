"""Reference poses and paths for the static and dynamic test protocol.

Paths are polylines in a local REFERENCE frame with at most 1 mm between
consecutive points; an optional placement transform puts them into the
ground-truth world. Closed paths do not repeat their first point; the
closing segment is implied.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from posebench.core import (
    NS_PER_S,
    Event,
    EventKind,
    FrameId,
    PoseSeries,
    Quaternion,
    RigidTransform,
)

CHORD_MM = 1.0
DIAGONAL_INSET = 0.1  # ISO 9283: diagonal points sit 10 % of the diagonal in from its ends


@dataclass(frozen=True, eq=False)
class ReferencePath:
    protocol_id: str
    points: np.ndarray
    closed: bool
    nominal_speed: float = 0.0
    kind: str = ""
    dims: dict = field(default_factory=dict)
    placement: RigidTransform | None = None

    def __post_init__(self):
        pts = np.array(self.points, dtype=float).reshape(-1, 3)
        if len(pts) < 2:
            raise ValueError("a path needs at least 2 points")
        if np.any(np.linalg.norm(np.diff(pts, axis=0), axis=1) == 0):
            raise ValueError("consecutive path points must be distinct")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def segments(self) -> tuple[np.ndarray, np.ndarray]:
        """Start and end points of every segment, including the closing one."""
        a = self.points
        b = np.roll(a, -1, axis=0) if self.closed else a[1:]
        if not self.closed:
            a = a[:-1]
        return a, b

    @property
    def arc_length(self) -> float:
        a, b = self.segments()
        return float(np.sum(np.linalg.norm(b - a, axis=1)))

    def world_points(self) -> np.ndarray:
        return self.placement(self.points) if self.placement is not None else self.points

    def placed(self, T: RigidTransform) -> "ReferencePath":
        """Same path with ``T`` applied after any existing placement."""
        from posebench.core import compose

        base = self.placement or RigidTransform.identity(FrameId.REFERENCE, T.source)
        return ReferencePath(
            protocol_id=self.protocol_id,
            points=self.points,
            closed=self.closed,
            nominal_speed=self.nominal_speed,
            kind=self.kind,
            dims=dict(self.dims),
            placement=compose(T, base),
        )

    def descriptor(self) -> dict:
        return {
            "protocol_id": self.protocol_id,
            "kind": self.kind,
            "dims": dict(self.dims),
            "closed": self.closed,
            "nominal_speed": self.nominal_speed,
            "arc_length_mm": self.arc_length,
            "placement": self.placement.to_dict() if self.placement is not None else None,
        }


@dataclass(frozen=True, eq=False)
class ReferencePose:
    label: str
    p: np.ndarray
    q: Quaternion


@dataclass(frozen=True, eq=False)
class ReferencePoseSet:
    protocol_id: str
    poses: tuple[ReferencePose, ...]

    def __post_init__(self):
        labels = [p.label for p in self.poses]
        if len(set(labels)) != len(labels):
            raise ValueError("pose labels must be unique")

    def __getitem__(self, label: str) -> ReferencePose:
        for p in self.poses:
            if p.label == label:
                return p
        raise KeyError(label)

    def labels(self) -> list[str]:
        return [p.label for p in self.poses]


# --------------------------------------------------------------------------
# static poses


def gen_iso_cube_poses(edge: float, incline_deg: float = 45.0, center=(0.0, 0.0, 0.0)) -> ReferencePoseSet:
    """SP01 (plane centre) and SP02-SP05 (diagonal points) on the cube's inclined plane.

    The measuring plane passes through the cube centre, tilted about the x
    axis by ``incline_deg``; at 45 deg it runs corner-edge to corner-edge.
    Its rectangle is clipped by the cube faces. Diagonal points sit 10 % of
    the diagonal length in from the rectangle corners. All orientations
    point along the plane normal.
    """
    if not edge > 0:
        raise ValueError("edge must be positive")
    if not 0.0 <= incline_deg <= 90.0:
        raise ValueError("incline must be within [0, 90] degrees")
    th = math.radians(incline_deg)
    half_u = edge / 2.0
    # extent along the tilted in-plane direction, limited by whichever face it meets first
    half_v = edge / 2.0 / max(math.cos(th), math.sin(th))
    u = np.array([1.0, 0.0, 0.0])
    v = np.array([0.0, math.cos(th), math.sin(th)])
    c = np.asarray(center, dtype=float)
    q = Quaternion.from_axis_angle(u, th)
    poses = [ReferencePose("SP01", c.copy(), q)]
    corners = [(-1, -1), (1, 1), (1, -1), (-1, 1)]  # SP02/SP03 and SP04/SP05 share a diagonal
    k = 1.0 - 2.0 * DIAGONAL_INSET
    for i, (su, sv) in enumerate(corners):
        p = c + k * (su * half_u * u + sv * half_v * v)
        poses.append(ReferencePose(f"SP0{i + 2}", p, q))
    return ReferencePoseSet("ISO9283-cube", tuple(poses))


# --------------------------------------------------------------------------
# paths


def _densify(vertices: np.ndarray, closed: bool, chord: float = CHORD_MM) -> np.ndarray:
    """Insert points so no segment exceeds ``chord``; vertices are kept exactly."""
    verts = np.asarray(vertices, dtype=float)
    ends = np.roll(verts, -1, axis=0) if closed else verts[1:]
    starts = verts if closed else verts[:-1]
    out = []
    for a, b in zip(starts, ends):
        n = max(1, math.ceil(np.linalg.norm(b - a) / chord - 1e-12))
        s = np.arange(n)[:, None] / n
        out.append(a + s * (b - a))
    if not closed:
        out.append(verts[-1:])
    return np.vstack(out)


def gen_line(length: float, protocol_id: str = "DT01") -> ReferencePath:
    if not length > 0:
        raise ValueError("length must be positive")
    pts = _densify(np.array([[0.0, 0.0, 0.0], [length, 0.0, 0.0]]), closed=False)
    return ReferencePath(protocol_id, pts, closed=False, kind="line", dims={"length": length})


def gen_circle(radius: float, protocol_id: str = "DT02") -> ReferencePath:
    """Counter-clockwise circle in the xy plane, starting at (R, 0, 0)."""
    if not radius > 0:
        raise ValueError("radius must be positive")
    # chord 2 R sin(pi / n) <= CHORD_MM
    n = max(8, math.ceil(math.pi / math.asin(min(1.0, CHORD_MM / (2 * radius)))))
    u = 2 * math.pi * np.arange(n) / n
    pts = np.stack([radius * np.cos(u), radius * np.sin(u), np.zeros(n)], axis=1)
    return ReferencePath(protocol_id, pts, closed=True, kind="circle", dims={"radius": radius})


def gen_square(side: float, protocol_id: str = "DT03") -> ReferencePath:
    """Counter-clockwise square centred on the origin, starting at (-S/2, -S/2)."""
    if not side > 0:
        raise ValueError("side must be positive")
    h = side / 2.0
    corners = np.array([[-h, -h, 0.0], [h, -h, 0.0], [h, h, 0.0], [-h, h, 0.0]])
    return ReferencePath(protocol_id, _densify(corners, closed=True), closed=True, kind="square", dims={"side": side})


def torus_point(R: float, r: float, u, v) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    rho = R + r * np.cos(v)
    return np.stack([rho * np.cos(u), rho * np.sin(u), r * np.sin(v)], axis=-1)


def gen_torus(R: float, r: float, turns: int = 1, protocol_id: str = "DT04-1") -> ReferencePath:
    """Helix on a torus: ``v = turns * u`` for one revolution of ``u``; closed."""
    if not (R > r > 0):
        raise ValueError("torus requires R > r > 0")
    if turns < 1:
        raise ValueError("turns must be >= 1")
    max_speed = math.hypot(R + r, r * turns)  # bound on |dP/du|
    n = max(16, math.ceil(2 * math.pi * max_speed / CHORD_MM))
    u = 2 * math.pi * np.arange(n) / n
    pts = torus_point(R, r, u, turns * u)
    return ReferencePath(protocol_id, pts, closed=True, kind="torus", dims={"R": R, "r": r, "turns": turns})


def gen_raster(width: float, height: float, lines: int, protocol_id: str = "DT04-2") -> ReferencePath:
    """Serpentine over a ``width`` x ``height`` area, lines parallel to x."""
    if lines < 2:
        raise ValueError("raster needs at least 2 lines")
    if not (width > 0 and height > 0):
        raise ValueError("raster area must be positive")
    spacing = height / (lines - 1)
    verts = []
    for j in range(lines):
        y = j * spacing
        xs = (0.0, width) if j % 2 == 0 else (width, 0.0)
        verts.append([xs[0], y, 0.0])
        verts.append([xs[1], y, 0.0])
    return ReferencePath(
        protocol_id,
        _densify(np.array(verts), closed=False),
        closed=False,
        kind="raster",
        dims={"width": width, "height": height, "lines": lines},
    )


_BUILDERS = {
    "line": lambda d, pid: gen_line(d["length"], pid),
    "circle": lambda d, pid: gen_circle(d["radius"], pid),
    "square": lambda d, pid: gen_square(d["side"], pid),
    "torus": lambda d, pid: gen_torus(d["R"], d["r"], int(d.get("turns", 1)), pid),
    "raster": lambda d, pid: gen_raster(d["width"], d["height"], int(d["lines"]), pid),
}

# protocol path dimensions
PROTOCOL_PATHS = {
    "DT01": ("line", {"length": 500.0}),
    "DT02": ("circle", {"radius": 200.0}),
    "DT03": ("square", {"side": 300.0}),
    "DT04-1": ("torus", {"R": 100.0, "r": 30.0, "turns": 1}),
    "DT04-2": ("raster", {"width": 100.0, "height": 100.0, "lines": 5}),
}


def gen_protocol_path(protocol_id: str) -> ReferencePath:
    try:
        kind, dims = PROTOCOL_PATHS[protocol_id]
    except KeyError:
        raise ValueError(f"unknown path protocol {protocol_id!r}; known: {sorted(PROTOCOL_PATHS)}") from None
    return _BUILDERS[kind](dims, protocol_id)


def path_from_descriptor(d: dict) -> ReferencePath:
    kind = d["kind"]
    if kind not in _BUILDERS:
        raise ValueError(f"unknown path kind {kind!r}")
    path = _BUILDERS[kind](d["dims"], d.get("protocol_id", ""))
    placement = d.get("placement")
    path = ReferencePath(
        protocol_id=path.protocol_id,
        points=path.points,
        closed=path.closed,
        nominal_speed=float(d.get("nominal_speed", 0.0)),
        kind=path.kind,
        dims=path.dims,
        placement=RigidTransform.from_dict(placement) if placement else None,
    )
    return path


# --------------------------------------------------------------------------
# timing


def _sample_polyline(vertices: np.ndarray, s: np.ndarray) -> np.ndarray:
    cum = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(vertices, axis=0), axis=1))])
    return np.stack([np.interp(s, cum, vertices[:, k]) for k in range(3)], axis=1)


def schedule(
    path: ReferencePath,
    speed: float,
    rate: float,
    t0_ns: int = 0,
    orientation: Quaternion | None = None,
    frame: FrameId = FrameId.GROUNDTRUTH_WORLD,
) -> PoseSeries:
    """Traverse ``path`` at constant ``speed`` sampled at ``rate`` Hz.

    Orientation is held constant. Closed paths end back at their start. If
    the arc length is not a whole number of steps the exact end point is
    appended at its true arrival time.
    """
    if not (speed > 0 and rate > 0):
        raise ValueError("speed and rate must be positive")
    verts = path.world_points()
    if path.closed:
        verts = np.vstack([verts, verts[:1]])
    arc = path.arc_length
    ds = speed / rate
    n_steps = int(math.floor(arc / ds + 1e-9))
    k = np.arange(n_steps + 1)
    s = k * ds
    t = t0_ns + np.round(k * (NS_PER_S / rate)).astype(np.int64)
    if arc - s[-1] > 1e-9:
        s = np.append(s, arc)
        t = np.append(t, t0_ns + int(round(arc / speed * NS_PER_S)))
        if t[-1] <= t[-2]:
            s, t = s[:-1], t[:-1]
            s[-1] = arc
    p = _sample_polyline(verts, s)
    q = (orientation or Quaternion.identity()).as_array()
    return PoseSeries(frame=frame, t=t, p=p, q=np.tile(q, (len(t), 1)), valid=np.ones(len(t), bool), nominal_rate=rate)


@dataclass(frozen=True, eq=False)
class StaticSchedule:
    series: PoseSeries
    events: tuple[Event, ...]  # REP_START windows covering each dwell


def static_schedule(
    target,
    orientation: Quaternion,
    repetitions: int,
    approach_speed: float,
    rate: float,
    dwell_s: float = 2.5,
    approach_mm: float = 50.0,
    approach_dir=(0.0, 0.0, 1.0),
    t0_ns: int = 0,
    frame: FrameId = FrameId.GROUNDTRUTH_WORLD,
) -> StaticSchedule:
    """Repeated approach-dwell-retreat cycles onto a static target.

    Each repetition starts ``approach_mm`` away along ``approach_dir``,
    moves in at ``approach_speed``, holds for ``dwell_s`` and backs out.
    The dwell of every repetition is annotated as a REP_START window.
    """
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    target = np.asarray(target, dtype=float)
    d = np.asarray(approach_dir, dtype=float)
    d = d / np.linalg.norm(d)
    away = target + approach_mm * d
    step_ns = NS_PER_S / rate
    move_n = max(1, int(math.ceil(approach_mm / approach_speed * rate)))
    dwell_n = int(round(dwell_s * rate))
    ps, events = [], []
    k = 0
    for _ in range(repetitions):
        s_in = np.minimum(np.arange(move_n) * approach_speed / rate, approach_mm)
        ps.append(away - s_in[:, None] * d)
        k += move_n
        start_k = k
        ps.append(np.tile(target, (dwell_n + 1, 1)))
        k += dwell_n + 1
        events.append(
            Event(
                EventKind.REP_START,
                t0_ns + int(round(start_k * step_ns)),
                t0_ns + int(round((k - 1) * step_ns)),
            )
        )
        s_out = np.minimum(np.arange(1, move_n + 1) * approach_speed / rate, approach_mm)
        ps.append(target + s_out[:, None] * d)
        k += move_n
    p = np.vstack(ps)
    t = t0_ns + np.round(np.arange(len(p)) * step_ns).astype(np.int64)
    q = np.tile(orientation.as_array(), (len(p), 1))
    series = PoseSeries(frame=frame, t=t, p=p, q=q, valid=np.ones(len(p), bool), nominal_rate=rate)
    return StaticSchedule(series=series, events=tuple(events))


def hold_schedule(
    position, orientation: Quaternion, duration_s: float, rate: float, t0_ns: int = 0,
    frame: FrameId = FrameId.GROUNDTRUTH_WORLD,
) -> PoseSeries:
    """Stationary series, e.g. for occlusion, initialisation or drift trials."""
    n = int(round(duration_s * rate)) + 1
    t = t0_ns + np.round(np.arange(n) * NS_PER_S / rate).astype(np.int64)
    p = np.tile(np.asarray(position, dtype=float), (n, 1))
    q = np.tile(orientation.as_array(), (n, 1))
    return PoseSeries(frame=frame, t=t, p=p, q=q, valid=np.ones(n, bool), nominal_rate=rate)
