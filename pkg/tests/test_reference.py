import math

import numpy as np
import pytest
from scipy.integrate import quad

from posebench.core import FrameId, RigidTransform, random_rotation
from posebench.reference import (
    PROTOCOL_PATHS,
    gen_circle,
    gen_iso_cube_poses,
    gen_line,
    gen_protocol_path,
    gen_raster,
    gen_square,
    gen_torus,
    path_from_descriptor,
    schedule,
)


def test_cube_diagonals_200():
    poses = gen_iso_cube_poses(200.0)
    # 45 deg plane through the cube: 200 x 200*sqrt(2) rectangle, points 10% in from the corners
    diag = math.hypot(200.0, 200.0 * math.sqrt(2))
    for a, b in (("SP02", "SP03"), ("SP04", "SP05")):
        assert np.linalg.norm(poses[a].p - poses[b].p) == pytest.approx(0.8 * diag, abs=1e-9)
    assert 0.8 * diag == pytest.approx(277.13, abs=0.01)
    np.testing.assert_allclose(poses["SP01"].p, 0.0, atol=1e-12)
    corners = np.array([poses[f"SP0{i}"].p for i in range(2, 6)])
    assert np.all(np.abs(corners) <= 100.0 + 1e-9)  # inside the cube


def test_cube_rejects_zero_edge():
    with pytest.raises(ValueError):
        gen_iso_cube_poses(0.0)


def test_cube_flat_plane():
    poses = gen_iso_cube_poses(200.0, incline_deg=0.0, center=(0, 0, 300))
    z = [p.p[2] for p in poses.poses]
    assert np.ptp(z) == 0.0 and z[0] == 300.0


def test_line_square_lengths():
    assert gen_line(500).arc_length == pytest.approx(500.0, abs=1e-9)
    assert gen_square(300).arc_length == pytest.approx(1200.0, abs=1e-9)


def test_circle_length_and_chord():
    c = gen_circle(200)
    assert len(c.points) == 1257
    assert c.arc_length == pytest.approx(2 * math.pi * 200, rel=1e-4)
    a, b = c.segments()
    assert np.linalg.norm(b - a, axis=1).max() <= 1.0


def test_torus_on_surface_and_length():
    R, r = 100.0, 30.0
    t = gen_torus(R, r, 1)
    p = t.points
    resid = (np.hypot(p[:, 0], p[:, 1]) - R) ** 2 + p[:, 2] ** 2 - r**2
    assert np.abs(resid).max() < 1e-9 * R * R

    def speed(u):  # |dP/du| with v = u
        return math.sqrt((R + r * math.cos(u)) ** 2 + r**2)

    length, _ = quad(speed, 0, 2 * math.pi)
    assert t.arc_length == pytest.approx(length, rel=1e-3)


def test_torus_rejects_degenerate():
    with pytest.raises(ValueError):
        gen_torus(100, 0)


def test_raster_geometry():
    r = gen_raster(100, 100, 5)
    ys, counts = np.unique(r.points[:, 1], return_counts=True)
    ys = ys[counts > 2]  # horizontal passes, not the densified connectors
    np.testing.assert_allclose(np.diff(ys), 25.0)
    assert r.arc_length == pytest.approx(5 * 100 + 4 * 25)
    u = gen_raster(80, 40, 2)
    assert u.arc_length == pytest.approx(2 * 80 + 40)
    assert u.points[0].tolist() == [0, 0, 0] and u.points[-1].tolist() == [0, 40, 0]
    assert r.points[:, 0].min() >= 0 and r.points[:, 0].max() <= 100
    assert r.points[:, 1].min() >= 0 and r.points[:, 1].max() <= 100


@pytest.mark.parametrize("pid", sorted(PROTOCOL_PATHS))
def test_chord_bound_and_descriptor_round_trip(pid, rng):
    p = gen_protocol_path(pid)
    a, b = p.segments()
    assert np.linalg.norm(b - a, axis=1).max() <= 1.0 + 1e-12
    T = RigidTransform(R=random_rotation(rng), tvec=rng.normal(size=3), source=FrameId.REFERENCE,
                       target=FrameId.GROUNDTRUTH_WORLD)
    placed = p.placed(T)
    back = path_from_descriptor(placed.descriptor())
    np.testing.assert_allclose(back.world_points(), placed.world_points(), atol=1e-9)


def test_line_schedule_counts():
    s = schedule(gen_line(500), 10.0, 50.0)
    assert len(s) == 2501
    assert (s.t[-1] - s.t[0]) / 1e9 == pytest.approx(50.0)
    np.testing.assert_allclose(np.diff(s.p[:, 0]), 0.2, atol=1e-9)


def test_schedule_one_second():
    s = schedule(gen_line(250), 250.0, 100.0)
    assert s.t[-1] == 1_000_000_000


def test_closed_schedule_returns_to_start():
    s = schedule(gen_circle(200), 50.0, 30.0)
    np.testing.assert_allclose(s.p[-1], s.p[0], atol=1e-9)
    assert s.t[-1] == pytest.approx(gen_circle(200).arc_length / 50.0 * 1e9, abs=1)
