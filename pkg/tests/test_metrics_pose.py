import math

import numpy as np
import pytest
from scipy.spatial import cKDTree
from scipy.spatial.transform import Rotation

from conftest import make_series
from posebench.core import Quaternion
from posebench.metrics_pose import (
    MetricError,
    drift_rate,
    dynamic_metrics,
    error_stats,
    jitter,
    paired_error_series,
    path_deviation,
    repeatability_from_points,
    static_metrics,
)
from posebench.reference import PROTOCOL_PATHS, gen_circle, gen_line, gen_protocol_path, schedule
from posebench.simulator import FaultConfig, simulate
from posebench.temporal import pair_nearest


def _reps(points, n=20, noise=None, rng=None):
    out = []
    for c in points:
        p = np.tile(c, (n, 1)).astype(float)
        if noise:
            p = p + rng.normal(size=p.shape) * noise
        out.append(make_series(p))
    return out


def test_constant_offset_static():
    truth = np.tile([10.0, 20.0, 30.0], (30, 1))
    r = static_metrics(_reps(truth + [0.5, 0, 0]), _reps(truth), "SP01")
    assert r.mean_acc == pytest.approx(0.5)
    assert r.max_error == pytest.approx(0.5)
    assert r.repeatability == pytest.approx(0.0, abs=1e-12)
    assert r.orient_acc == pytest.approx(0.0, abs=1e-6)
    assert r.jitter_pos == pytest.approx(0.0, abs=1e-12)


def test_repeatability_matches_sample_std_and_closed_form():
    sigma = 0.3
    vals = []
    for seed in range(200):
        pts = np.random.default_rng(seed).normal(size=(30, 3)) * sigma
        rep = repeatability_from_points(pts)
        # oracle: summed per-axis sample variances
        assert rep == pytest.approx(math.sqrt(np.var(pts, axis=0, ddof=1).sum()), rel=1e-12)
        vals.append(rep)
    assert np.mean(vals) == pytest.approx(math.sqrt(3) * sigma, rel=0.15)


def test_static_repeatability_ignores_common_bias(rng):
    truth = np.zeros((30, 3))
    offs = rng.normal(size=(30, 3)) * 0.2
    r = static_metrics(_reps(offs + [300, 0, 0]), _reps(truth))
    assert r.repeatability == pytest.approx(repeatability_from_points(offs), rel=1e-9)
    assert r.mean_acc > 299


def test_static_requires_matching_reps():
    with pytest.raises(MetricError):
        static_metrics(_reps(np.zeros((2, 3))), _reps(np.zeros((3, 3))))


def test_jitter_constant_and_gaussian(rng):
    assert jitter(make_series(np.ones((50, 3)))) == (0.0, 0.0)
    s = make_series(rng.normal(size=(1000, 3)) * 0.2)
    assert jitter(s)[0] == pytest.approx(0.2 * math.sqrt(3), rel=0.10)


def test_jitter_sinusoidal_wobble():
    n = 1000
    ang = np.radians(0.5) * np.sin(2 * np.pi * np.arange(n) / 100)
    q = np.roll(Rotation.from_rotvec(np.outer(ang, [0, 0, 1])).as_quat(), 1, axis=1)
    _, rot = jitter(make_series(np.zeros((n, 3)), q=q))
    assert rot == pytest.approx(0.5 / math.sqrt(2), rel=0.01)


def test_jitter_too_short():
    with pytest.raises(MetricError):
        jitter(make_series(np.zeros((5, 3))))


def _paired(trk_p, tru_p):
    return pair_nearest(make_series(trk_p), make_series(tru_p))


def test_error_series_examples(rng):
    z = np.zeros((10, 3))
    assert np.all(paired_error_series(_paired(z, z)).e3d == 0)
    assert np.allclose(paired_error_series(_paired(z + [1, 2, 2], z)).e3d, 3.0)
    a, b = rng.normal(size=(50, 3)), rng.normal(size=(50, 3))
    e = paired_error_series(_paired(a, b))
    np.testing.assert_allclose(e.e3d, [math.sqrt(sum((x - y) ** 2 for x, y in zip(r, s))) for r, s in zip(a, b)])


def test_error_stats_gaussian_and_identity(rng):
    n = 10_000
    st = error_stats(paired_error_series(_paired(rng.normal(size=(n, 3)), np.zeros((n, 3)))))
    for ax in "xyz":
        assert st.sigma1[ax] == pytest.approx(1.0, rel=0.05)
    assert st.rms["3d"] ** 2 == pytest.approx(sum(st.rms[a] ** 2 for a in "xyz"), abs=1e-9)
    assert st.sigma1["3d"] <= st.rms["3d"]


def test_error_stats_constant_bias():
    z = np.zeros((20, 3))
    st = error_stats(paired_error_series(_paired(z + [3, 0, 4], z)))
    assert st.sigma1["3d"] == pytest.approx(0, abs=1e-12)
    assert st.rms["3d"] == pytest.approx(5.0)
    assert st.max["x"] == 3.0


def test_path_deviation_on_and_off_circle():
    c = gen_circle(200)
    u = np.linspace(0, 2 * np.pi, 500, endpoint=False)
    on = np.column_stack([200 * np.cos(u), 200 * np.sin(u), np.zeros_like(u)])
    # vertices sit on the circle, chords fall inside it by at most R(1 - cos(pi/n))
    sag = 200 * (1 - math.cos(math.pi / len(c.points)))
    assert path_deviation(make_series(c.points), c).max == pytest.approx(0, abs=1e-12)
    assert path_deviation(make_series(on), c).max <= sag + 1e-12
    off = path_deviation(make_series(on * 201 / 200), c)
    assert np.abs(off.distances - 1.0).max() <= 2e-3


@pytest.mark.parametrize("pid", sorted(PROTOCOL_PATHS))
def test_path_deviation_dense_oracle(pid):
    ref = gen_protocol_path(pid)
    a, b = ref.segments()
    step = 2e-3
    dense = np.vstack([a_ + np.linspace(0, 1, max(2, int(np.ceil(np.linalg.norm(b_ - a_) / step)) + 1))[:, None] * (b_ - a_)
                       for a_, b_ in zip(a, b)])
    g = np.random.default_rng(hash(pid) % 2**32)
    base = ref.points[g.integers(0, len(ref.points), 60)]
    q = base + g.normal(size=base.shape) * 5.0
    got = path_deviation(make_series(q), ref).distances
    oracle, _ = cKDTree(dense).query(q)
    # dense sampling overestimates by at most step^2 / (8 d)
    assert np.all(got <= oracle + 1e-12)
    np.testing.assert_allclose(got, oracle, rtol=1e-6, atol=step**2 / 8 / np.maximum(got, 1e-3).min())


def test_drift_rate_examples():
    t = np.arange(0, 50 * 10**9, 20_000_000)
    assert drift_rate(t, np.full(len(t), 2.0)) == pytest.approx(0.0, abs=1e-15)
    assert drift_rate(t, 0.01 * t / 1e9) == pytest.approx(0.01, rel=1e-12)


def test_drift_recovery_table_magnitude():
    truth = schedule(gen_line(500), 10.0, 50.0)  # 50 s
    rates = []
    for seed in range(50):
        cfg = FaultConfig(rng_seed=seed, bias=(5.0, 0, 0), drift_ramp=0.0023, jitter_sigma=(0.5, 0, 0))
        res = simulate(truth, cfg)
        r = dynamic_metrics("x", pair_nearest(res.tracker, res.truth))
        rates.append(r.drift_3d)
    assert np.mean(rates) == pytest.approx(0.0023, rel=0.10)


def test_dynamic_metrics_fields():
    truth = schedule(gen_line(500), 10.0, 50.0)
    res = simulate(truth, FaultConfig(rng_seed=1, bias=(0, 1.0, 0)))
    r = dynamic_metrics("x", pair_nearest(res.tracker, res.truth), gen_line(500))
    assert r.path_dev_mean == pytest.approx(1.0)
    assert r.mean_3d == pytest.approx(1.0)
    assert r.n_samples == len(truth)
    assert r.orient_acc == pytest.approx(0.0, abs=1e-6)
