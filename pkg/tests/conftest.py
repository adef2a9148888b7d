import numpy as np
import pytest

from posebench.core import NS_PER_S, FrameId, PoseSeries


def make_series(p, rate=50.0, t0_ns=0, q=None, valid=None, frame=FrameId.GROUNDTRUTH_WORLD, t=None):
    p = np.asarray(p, dtype=float).reshape(-1, 3)
    n = len(p)
    if t is None:
        t = t0_ns + np.round(np.arange(n) * NS_PER_S / rate).astype(np.int64)
    if q is None:
        q = np.tile([1.0, 0.0, 0.0, 0.0], (n, 1))
    if valid is None:
        valid = np.ones(n, bool)
    return PoseSeries(frame=frame, t=np.asarray(t, dtype=np.int64), p=p, q=np.asarray(q, float), valid=valid,
                      nominal_rate=rate)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def static_result(scenario, seed):
    """Simulate a static preset and score it directly (no files, no registration)."""
    from posebench.ingest import repetition_windows
    from posebench.metrics_pose import static_metrics

    res = scenario.run(seed)
    windows = repetition_windows(res.truth, scenario.trial)
    reps = [res.tracker.window(a, b) for a, b in windows]
    truth_reps = [res.truth.window(a, b) for a, b in windows]
    q = np.asarray(scenario.trial.meta["reference_orientation"])
    return static_metrics(reps, truth_reps, scenario.trial.pose_id, reference_orientation=q)


def dynamic_result(scenario, seed, clean=True):
    from posebench.cleaning import run_pipeline
    from posebench.metrics_pose import dynamic_metrics
    from posebench.temporal import pair_nearest

    res = scenario.run(seed)
    paired = pair_nearest(res.tracker, res.truth)
    if clean:
        paired = run_pipeline(paired, speed=scenario.trial.speed).paired
    return dynamic_metrics(scenario.name, paired, scenario.reference)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("AC")[1].split(":")[0])):
            terminalreporter.write_line(line)
