import numpy as np
import pytest

from conftest import make_series
from posebench.core import FrameId, Quaternion, apply
from posebench.metrics_pose import error_stats, paired_error_series
from posebench.reference import gen_line, hold_schedule, schedule
from posebench.simulator import (
    ConfidentWrong,
    FaultConfig,
    SimulationError,
    SpikeConfig,
    default_tracker_frame,
    simulate,
)
from posebench.temporal import pair_nearest


@pytest.fixture
def line():
    return schedule(gen_line(500), 10.0, 50.0)


def test_zero_faults_identity(line):
    res = simulate(line, FaultConfig(rng_seed=0))
    assert res.tracker.equals(line)


def test_zero_faults_resampled(line):
    res = simulate(line, FaultConfig(rng_seed=0, tracker_rate=30.0))
    # straight line at constant speed: resampled truth is x = 10 mm/s * t
    np.testing.assert_allclose(res.tracker.p[:, 0], res.tracker.t / 1e8, atol=1e-9)
    assert np.all(np.diff(res.tracker.t) > 0) and res.tracker.nominal_rate == 30.0


def test_deterministic_per_seed(line):
    cfg = FaultConfig(rng_seed=5, jitter_sigma=(1, 1, 1), timestamp_jitter_ms=2.0, spikes=SpikeConfig())
    a, b = simulate(line, cfg), simulate(line, cfg)
    assert a.tracker.equals(b.tracker) and a.labels == b.labels
    c = simulate(line, FaultConfig(rng_seed=6, jitter_sigma=(1, 1, 1)))
    assert not a.tracker.equals(c.tracker, pos_tol=1e-3)


def test_jitter_sigma_recovered():
    truth = hold_schedule([0, 0, 0], Quaternion.identity(), 199.98, 50.0)  # 10000 samples
    res = simulate(truth, FaultConfig(rng_seed=1, jitter_sigma=(1, 1, 1)))
    assert len(res.tracker) == 10000
    st = error_stats(paired_error_series(pair_nearest(res.tracker, res.truth)))
    for ax in "xyz":
        assert st.sigma1[ax] == pytest.approx(1.0, rel=0.05)


def test_latency_shifts_along_motion(line):
    res = simulate(line, FaultConfig(rng_seed=0, latency_ms=100.0))
    e = res.tracker.p - line.p
    # steady state: the device reports where the target was 0.1 s ago, 1 mm behind
    np.testing.assert_allclose(e[10:, 0], -1.0, atol=1e-9)


def test_bias_and_drift_ramp(line):
    res = simulate(line, FaultConfig(rng_seed=0, bias=(0, 3, 4), drift_ramp=0.1))
    e = res.tracker.p - line.p
    t = (line.t - line.t[0]) / 1e9
    np.testing.assert_allclose(np.linalg.norm(e, axis=1), 5.0 + 0.1 * t, atol=1e-9)


def test_confident_wrong_only_on_listed_pose(line):
    cw = ConfidentWrong(offset=(300.0, 0, 0), scatter=0.3, pose_ids=("SP05",))
    hit = simulate(line, FaultConfig(rng_seed=0, confident_wrong=cw), pose_id="SP05")
    miss = simulate(line, FaultConfig(rng_seed=0, confident_wrong=cw), pose_id="SP01")
    assert hit.labels["confident_wrong"] and not miss.labels["confident_wrong"]
    assert np.abs(hit.tracker.p[:, 0] - line.p[:, 0] - 300).max() < 3
    assert miss.tracker.equals(line)


def test_dropouts_and_labels(line):
    res = simulate(line, FaultConfig(rng_seed=0, dropout_windows=((10, 15),)))
    a, b = res.labels["dropout_windows_ns"][0]
    assert not np.any((res.tracker.t >= a) & (res.tracker.t <= b))
    assert len(res.tracker) == len(line) - 251


def test_energy_save_and_wake():
    rate = 50.0
    n_rest, n_move = 500, 250  # 10 s still, then 5 s at 10 mm/s
    p = np.zeros((n_rest + n_move, 3))
    p[n_rest:, 0] = np.arange(1, n_move + 1) * 10.0 / rate
    truth = make_series(p, rate=rate)
    res = simulate(truth, FaultConfig(rng_seed=0, energy_save_after=5.0))
    t = res.tracker.t / 1e9
    # sample 499 (t = 9.98 s) is the first whose step moves: the device wakes there
    assert t[t < 9.98 - 1e-9].max() < 5.0 + 1e-9
    assert 9.98 in np.round(t, 9)
    (w,) = res.labels["energy_save_windows_ns"]
    assert w[0] == 5_000_000_000


def test_spike_labels(line):
    cfg = FaultConfig(rng_seed=3, spikes=SpikeConfig(rate=0.01, include_mm=(34.72,)))
    res = simulate(line, cfg)
    labelled = set(res.labels["spike_t_ns"])
    assert len(labelled) == round(0.01 * len(line))
    e3d = np.linalg.norm(res.tracker.p - line.p, axis=1)
    spikes = np.isin(res.tracker.t, list(labelled))
    assert np.all(e3d[~spikes] == 0)
    assert e3d[spikes].min() >= 30.0 and np.any(np.isclose(e3d[spikes], 34.72))


def test_tracker_frame_mapping(line):
    M = default_tracker_frame(2)
    res = simulate(line, FaultConfig(rng_seed=0), tracker_frame=M)
    assert res.tracker.frame == FrameId.TRACKER_WORLD
    back = apply(M.inverse(), res.tracker)
    np.testing.assert_allclose(back.p, line.p, atol=1e-9)
    with pytest.raises(SimulationError):
        simulate(line, FaultConfig(rng_seed=0), tracker_frame=M.inverse())


def test_validation_errors(line):
    with pytest.raises(SimulationError):
        FaultConfig(rng_seed=None)
    with pytest.raises(SimulationError):
        FaultConfig(rng_seed=0, jitter_sigma=(-1, 0, 0))
    with pytest.raises(SimulationError):
        simulate(line, FaultConfig(rng_seed=0, tracker_rate=0.01))


def test_fault_config_round_trip():
    cfg = FaultConfig(
        rng_seed=9, jitter_sigma=(1, 2, 3), bias=(0.5, 0, 0), dropout_windows=((1, 2),), latency_ms=3,
        confident_wrong=ConfidentWrong((1, 2, 3), 0.4, ("SP05",)), spikes=SpikeConfig(0.02, 31, 50, (34.72,)),
        energy_save_after=5.0,
    )
    assert FaultConfig.from_dict(cfg.to_dict()).to_dict() == cfg.to_dict()
