import warnings

import numpy as np
import pytest

from conftest import make_series
from posebench.cleaning import (
    CleaningConfig,
    Stage,
    error_magnitudes,
    iqr_filter,
    kinematic_filter,
    kinematic_filter_series,
    run_pipeline,
    zscore_filter,
)
from posebench.reference import gen_line, schedule
from posebench.simulator import FaultConfig, SpikeConfig, simulate
from posebench.temporal import pair_nearest


def test_zscore_examples():
    assert zscore_filter([1, 1, 1, 1], 3).rejected == 0
    r = zscore_filter([0] * 9 + [100], 3)
    # mean 10, population std 30: 100 sits exactly on the 3 sigma boundary and is kept
    assert r.kept.all()
    # one more zero: mean 9.09, std 28.75, |100 - mean| = 3.16 sigma
    r = zscore_filter([0] * 10 + [100], 3)
    assert list(np.flatnonzero(~r.kept)) == [10]


def test_zscore_gaussian_rate():
    rates = [zscore_filter(np.random.default_rng(s).normal(size=10_000), 3).rejected / 10_000 for s in range(20)]
    assert np.mean(rates) == pytest.approx(0.0027, abs=0.0015)


def test_iqr_examples():
    assert iqr_filter([1, 2, 3, 4], 1.5).rejected == 0
    r = iqr_filter([1, 2, 3, 4, 1000], 1.5)
    # quartiles 2 and 4, fence [-1, 7]
    assert r.stats["q1"] == 2 and r.stats["q3"] == 4
    assert list(np.flatnonzero(~r.kept)) == [4]


def test_iqr_uniform_rate():
    v = np.random.default_rng(1).uniform(size=10_000)
    assert iqr_filter(v).rejected / 10_000 < 0.001


def test_iqr_degenerate_fence():
    r = iqr_filter([5, 5, 5, 5, 5, 5, 7], 1.5)
    assert list(np.flatnonzero(~r.kept)) == [6]


def test_kinematic_static_keeps_all():
    s = make_series(np.ones((50, 3)) * 7)
    assert kinematic_filter_series(s, 1e-6).rejected == 0


def test_kinematic_teleport():
    p = np.column_stack([np.arange(100) * 0.2, np.zeros(100), np.zeros(100)])  # 10 mm/s at 50 Hz
    p[40, 1] += 500.0
    s = make_series(p)
    r = kinematic_filter_series(s, 100.0)
    assert list(np.flatnonzero(~r.kept)) == [40]


def test_kinematic_duplicate_timestamp():
    r = kinematic_filter([0, 10, 10, 20], np.zeros((4, 3)), 100.0)
    assert list(r.kept) == [True, True, False, True]
    assert r.stats["duplicates"] == 1


def _line_trial(cfg):
    truth = schedule(gen_line(1000.0), 10.0, 50.0)
    res = simulate(truth, cfg)
    return res, pair_nearest(res.tracker, res.truth)


def test_large_spike_survives_zscore_not_kinematic():
    # slow 0->60 mm error ramp widens the error distribution; spike rides on top
    cfg = FaultConfig(rng_seed=4, bias=(1.0, 0, 0), drift_ramp=0.6, jitter_sigma=(0.1, 0.1, 0.1),
                      spikes=SpikeConfig(rate=1e-9, include_mm=(34.72,)))
    res, paired = _line_trial(cfg)
    (ts,) = res.labels["spike_t_ns"]
    i = int(np.flatnonzero(paired.t == ts)[0])
    assert zscore_filter(error_magnitudes(paired), 3.0).kept[i]
    only_z = run_pipeline(paired, CleaningConfig(enabled_stages=(Stage.ZSCORE,)), speed=10.0)
    assert only_z.kept[i]
    full = run_pipeline(paired, CleaningConfig(), speed=10.0)
    assert not full.kept[i]
    assert full.report.total_rejected == 1


def test_all_inlier_trial_no_rejections():
    res, paired = _line_trial(FaultConfig(rng_seed=0, bias=(0.5, 0.2, 0.0)))
    out = run_pipeline(paired, CleaningConfig(), speed=10.0)
    assert out.report.total_rejected == 0


def test_empty_stage_set_identity():
    res, paired = _line_trial(FaultConfig(rng_seed=2, jitter_sigma=(1, 1, 1)))
    out = run_pipeline(paired, CleaningConfig(enabled_stages=()), speed=10.0)
    assert out.kept.all()
    np.testing.assert_array_equal(out.paired.tracker.p, paired.tracker.p)
    np.testing.assert_array_equal(out.paired.truth.p, paired.truth.p)


def test_stage_order_and_report():
    res, paired = _line_trial(FaultConfig(rng_seed=3, jitter_sigma=(0.3, 0.3, 0.3), spikes=SpikeConfig(rate=0.01)))
    out = run_pipeline(paired, CleaningConfig(enabled_stages=("KINEMATIC", "ZSCORE", "IQR")), speed=10.0)
    assert [s for s, _ in out.report.stages] == ["KINEMATIC", "ZSCORE", "IQR"]
    assert sum(c for _, c in out.report.stages) == out.report.total_rejected
    assert out.report.vmax == 100.0
    assert np.all(np.diff(out.paired.t) > 0)


def test_vmax_default():
    assert CleaningConfig().resolve_vmax(50.0) == 500.0
    assert CleaningConfig().resolve_vmax(5.0) == 100.0
    assert CleaningConfig(vmax=42).resolve_vmax(50.0) == 42.0


def test_heavy_rejection_warns():
    p = np.zeros((20, 3))
    p[::2, 0] = 1000.0  # every other sample teleports
    paired = pair_nearest(make_series(p), make_series(np.zeros((20, 3))))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        out = run_pipeline(paired, CleaningConfig(enabled_stages=(Stage.KINEMATIC,)), speed=10.0)
    assert out.report.rejected_fraction > 0.3 and out.report.warning


def test_invalid_config():
    with pytest.raises(ValueError):
        CleaningConfig(enabled_stages=("ZSCORE", "ZSCORE"))
    with pytest.raises(ValueError):
        CleaningConfig(vmax=0)
