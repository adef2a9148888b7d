import math

import numpy as np
import pytest

from posebench.core import FrameId, RigidTransform, random_rotation
from posebench.registration import RegistrationError, estimate_rigid, registration_quality
from posebench.simulator import default_tracker_frame, registration_block


def _pts(rng, n=4):
    return rng.uniform(-300, 300, size=(n, 3))


def test_identity(rng):
    p = _pts(rng)
    r = estimate_rigid(p, p)
    np.testing.assert_allclose(r.transform.R, np.eye(3), atol=1e-12)
    np.testing.assert_allclose(r.transform.tvec, 0, atol=1e-9)
    assert r.rms == pytest.approx(0, abs=1e-9)


def test_rot90_plus_translation(rng):
    p = _pts(rng)
    Rz = np.array([[0.0, -1, 0], [1, 0, 0], [0, 0, 1]])
    q = p @ Rz.T + [5, 0, 0]
    r = estimate_rigid(p, q)
    np.testing.assert_allclose(r.transform.R, Rz, atol=1e-9)
    np.testing.assert_allclose(r.transform.tvec, [5, 0, 0], atol=1e-9)


def test_noisy_recovery_monte_carlo():
    ok = 0
    for seed in range(1000):
        g = np.random.default_rng(seed)
        R, t = random_rotation(g), g.normal(size=3) * 500
        p = g.uniform(-200, 200, size=(4, 3))
        q = p @ R.T + t + g.normal(size=(4, 3)) * 0.1
        est = estimate_rigid(p, q).transform
        ok += np.linalg.norm(est.tvec - t) <= 0.5
    assert ok >= 990


def test_too_few_and_collinear():
    with pytest.raises(RegistrationError, match="at least 3"):
        estimate_rigid(np.eye(3)[:2], np.eye(3)[:2])
    line = np.array([[0, 0, 0], [1, 1, 1], [2, 2, 2], [5, 5, 5.0]])
    with pytest.raises(RegistrationError, match="collinear"):
        estimate_rigid(line, line)


def test_reflection_never_returned(rng):
    p = _pts(rng, 6)
    mirrored = p * [1, 1, -1]
    r = estimate_rigid(p, mirrored)
    assert np.linalg.det(r.transform.R) == pytest.approx(1.0)
    assert r.rms > 1.0 and r.warning


def test_similarity_scale(rng):
    p = _pts(rng, 5)
    R = random_rotation(rng)
    q = 1.25 * p @ R.T + [1, 2, 3]
    r = estimate_rigid(p, q, with_scale=True)
    assert r.transform.s == pytest.approx(1.25, abs=1e-12)
    assert r.rms == pytest.approx(0, abs=1e-9)


def test_holdout_quality(rng):
    R = random_rotation(rng)
    T = RigidTransform(R=R, tvec=np.array([10.0, 0, 0]), source=FrameId.TRACKER_WORLD, target=FrameId.GROUNDTRUTH_WORLD)
    h = _pts(rng, 5)
    assert registration_quality(T, h, T(h)) == pytest.approx(0, abs=1e-9)
    biased = RigidTransform(R=R, tvec=np.array([12.0, 0, 0]), source=T.source, target=T.target)
    assert registration_quality(biased, h, T(h)) == pytest.approx(2.0, abs=1e-9)
    with pytest.raises(RegistrationError):
        registration_quality(T, np.zeros((0, 3)), np.zeros((0, 3)))


@pytest.mark.parametrize("delta", [(2.0, 0, 0), (1.0, -1.5, 0.5), (0, 0, 4.0)])
def test_simulated_calibration_offset(delta):
    M = default_tracker_frame(3)
    block = registration_block(M, np.random.default_rng(0), noise_mm=0.05, calibration_offset=delta)
    src = [p["tracker"] for p in block["points"]]
    dst = [p["truth"] for p in block["points"]]
    T = estimate_rigid(src, dst).transform
    hs = [h["tracker"] for h in block["holdout"]]
    hd = [h["truth"] for h in block["holdout"]]
    rms = registration_quality(T, hs, hd)
    assert rms == pytest.approx(math.dist(delta, (0, 0, 0)), rel=0.10)
