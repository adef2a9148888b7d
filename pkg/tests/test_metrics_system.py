import warnings

import numpy as np
import pytest

from conftest import make_series
from posebench.core import NS_PER_S, Event, EventKind, Quaternion
from posebench.metrics_system import (
    EventSkipped,
    SpanTooShort,
    StabilityRule,
    detect_gaps,
    initialization_time,
    long_term_drift,
    occlusion_metrics,
    reacquisition_time,
)
from posebench.reference import hold_schedule
from posebench.simulator import FaultConfig, simulate
from posebench.temporal import pair_nearest

S = NS_PER_S


def _hold(seconds, rate, **faults):
    truth = hold_schedule([0, 0, 300], Quaternion.identity(), seconds, rate)
    return simulate(truth, FaultConfig(rng_seed=faults.pop("seed", 0), **faults))


def test_no_gaps_in_continuous_series():
    assert detect_gaps(make_series(np.zeros((500, 3)), rate=50)) == []


def test_five_second_hole_at_30hz():
    t = np.round(np.arange(900) * S / 30).astype(np.int64)
    keep = (t < 10 * S) | (t > 15 * S)
    s = make_series(np.zeros((keep.sum(), 3)), t=t[keep], rate=30)
    (g,) = detect_gaps(s)
    assert (g[1] - g[0]) / S == pytest.approx(5.0, abs=1 / 30)


def test_invalid_run_is_a_gap():
    v = np.ones(100, bool)
    v[20:30] = False
    (g,) = detect_gaps(make_series(np.zeros((100, 3)), rate=10, valid=v))
    assert g == (2 * S, 3 * S)


def test_simulated_dropouts_match_labels():
    res = _hold(30, 30.0, dropout_windows=((5, 8), (14.5, 16)))
    gaps = detect_gaps(res.tracker)
    period = S / 30
    assert len(gaps) == 2
    for (a, b), (la, lb) in zip(gaps, res.labels["dropout_windows_ns"]):
        assert abs(a - la) <= period and abs(b - lb) <= period


def _occl(a, b, kind=EventKind.OCCLUSION_FULL):
    return Event(kind, int(a * S), int(b * S))


def test_instant_recovery_osr_100():
    res = _hold(30, 30.0, dropout_windows=((10, 15),), jitter_sigma=(0.1, 0.1, 0.1))
    occ = occlusion_metrics(res.tracker, [_occl(10, 15)])
    assert occ.osr == 100.0
    assert occ.rot[0] <= 1.5 / 30


def test_no_recovery_osr_0():
    res = _hold(30, 30.0, dropout_windows=((10, 30),))
    occ = occlusion_metrics(res.tracker, [_occl(10, 15)], span=(0, 30 * S))
    assert occ.osr == 0.0 and occ.rot == [None]


def test_delayed_recovery():
    res = _hold(30, 50.0, dropout_windows=((10, 15.8),), jitter_sigma=(0.1, 0.1, 0.1))
    occ = occlusion_metrics(res.tracker, [_occl(10, 15)])
    assert occ.rot[0] == pytest.approx(0.8, abs=1 / 50)


def test_event_outside_span_skipped():
    s = make_series(np.zeros((100, 3)), rate=10)
    with pytest.warns(EventSkipped):
        occ = occlusion_metrics(s, [_occl(2, 3), _occl(50, 55)])
    assert occ.skipped == 1 and occ.osr == 100.0


def test_initialization_time():
    s = make_series(np.zeros((100, 3)), rate=50)
    assert initialization_time(s, 0) == 0.0
    res = _hold(10, 50.0, start_delay_s=0.6, jitter_sigma=(0.1, 0.1, 0.1))
    assert initialization_time(res.tracker, 0) == pytest.approx(0.6, abs=1 / 50)
    noisy = make_series(np.random.default_rng(0).normal(size=(200, 3)) * 50, rate=50)
    assert initialization_time(noisy, 0) is None


def test_reacquisition_time():
    ev = [Event(EventKind.EXIT_VOLUME, 2 * S, 2 * S), Event(EventKind.ENTER_VOLUME, 4 * S, 4 * S)]
    res = _hold(10, 30.0, dropout_windows=((2, 4),))
    assert reacquisition_time(res.tracker, ev).rot[0] <= 1 / 30
    res = _hold(10, 30.0, dropout_windows=((2, 4.5),))
    assert reacquisition_time(res.tracker, ev).rot[0] == pytest.approx(0.5, abs=1 / 30)


def test_drift_constant_and_ramp():
    res = _hold(1800, 1.0, bias=(1.0, 0, 0))
    d = long_term_drift(pair_nearest(res.tracker, res.truth))
    assert d.pos_mm_per_min == pytest.approx(0.0, abs=1e-12)
    assert d.rot_deg_per_min == pytest.approx(0.0, abs=1e-12)
    slopes = []
    for seed in range(20):
        res = _hold(1800, 1.0, seed=seed, bias=(1.0, 0, 0), drift_ramp=0.02 / 60, jitter_sigma=(0.1, 0.1, 0.1))
        slopes.append(long_term_drift(pair_nearest(res.tracker, res.truth)).pos_mm_per_min)
    assert np.mean(slopes) == pytest.approx(0.02, rel=0.05)


def test_drift_span_too_short_after_energy_save():
    res = _hold(60, 30.0, energy_save_after=5.0)
    assert (res.tracker.t[-1] - res.tracker.t[0]) / S <= 5.0 + 1 / 30
    with pytest.raises(SpanTooShort):
        long_term_drift(pair_nearest(res.tracker, res.truth))


def test_rule_validation():
    with pytest.raises(ValueError):
        StabilityRule(k=1)
