import json
import math

import numpy as np
import pytest

from conftest import dynamic_result, static_result
from posebench.ingest import parse_manifest
from posebench.scenarios import (
    DYNAMIC_AVERAGES,
    DYNAMIC_TABLE,
    SESSIONS,
    STATIC_CONDITIONS,
    STATIC_OUTLIERS,
    STATIC_TABLE,
    UnknownScenario,
    _mean_norm,
    bias_for_mean,
    load_scenario_file,
    paper_scenario,
    preset_names,
    write_session,
)


def test_unknown_preset_lists_names():
    with pytest.raises(UnknownScenario) as exc:
        paper_scenario("T99")
    assert "T10" in str(exc.value) and "SP02-F2-50" in str(exc.value)


def test_published_targets():
    t10 = paper_scenario("T10")
    assert t10.reference.kind == "line" and t10.trial.hmd_position.value == "S3" and t10.trial.speed == 10
    assert (t10.targets["sigma1"]["3d"], t10.targets["rms"]["3d"], t10.targets["max_error"]["3d"]) == (0.380, 0.880, 2.100)
    sp = paper_scenario("SP02-F2-50").targets
    assert (sp["mean_acc"], sp["max_error"], sp["repeatability"]) == (0.5, 1.0, 0.4)
    assert paper_scenario("raster-avg").targets["rms"]["3d"] == 16.268


def test_static_table_averages():
    # column averages with the flagged cells excluded from mean and max, kept for repeatability
    avg = {"F1-25": (3.4, 5.0, 0.9), "S3-25": (5.1, 5.5, 0.3), "S4-25": (2.0, 2.5, 0.4)}
    for cond, want in avg.items():
        k = STATIC_CONDITIONS.index(cond)
        cells = [(p, STATIC_TABLE[p][k]) for p in STATIC_TABLE]
        keep = [c for p, c in cells if (p, cond) not in STATIC_OUTLIERS]
        got = (np.mean([c[0] for c in keep]), np.mean([c[1] for c in keep]), np.mean([c[2] for _, c in cells]))
        np.testing.assert_allclose(got, want, atol=0.051)


def test_dynamic_average_rows():
    for name, (traj, sigma, rms, mx, _) in DYNAMIC_AVERAGES.items():
        rows = [r for r in DYNAMIC_TABLE.values() if r[0] == traj]
        assert np.mean([r[3][3] for r in rows]) == pytest.approx(sigma[3], abs=6e-4)
        assert np.mean([r[4][3] for r in rows]) == pytest.approx(rms[3], abs=6e-4)


def test_mean_norm_monte_carlo():
    g = np.random.default_rng(0)
    for mu, s in ((0.0, 1.0), (0.5, 0.3), (3.0, 1.0), (20.0, 2.0)):
        x = g.normal(size=(200_000, 3)) * s + [mu, 0, 0]
        assert _mean_norm(mu, s) == pytest.approx(np.linalg.norm(x, axis=1).mean(), rel=5e-3)
    assert _mean_norm(bias_for_mean(2.6, 0.23), 0.23) == pytest.approx(2.6, abs=1e-9)
    assert bias_for_mean(0.1, 1.0) == 0.0  # unreachable: noise alone exceeds it


@pytest.mark.parametrize("pose", sorted(STATIC_TABLE))
def test_static_presets_hit_mean(pose):
    k = STATIC_CONDITIONS.index("F2-25")
    target = STATIC_TABLE[pose][k]
    vals = [static_result(paper_scenario(f"{pose}-F2-25"), s) for s in range(5)]
    assert np.mean([v.mean_acc for v in vals]) == pytest.approx(target[0], abs=0.3)
    assert np.mean([v.repeatability for v in vals]) == pytest.approx(target[2], abs=0.15)


def test_confident_wrong_signature():
    r = static_result(paper_scenario("SP06-S3"), 0)
    assert 340 <= r.mean_acc <= 355 and 0.2 <= r.repeatability <= 0.6


def test_t10_single_seed_close():
    r = dynamic_result(paper_scenario("T10"), 0)
    assert r.rms["3d"] == pytest.approx(0.880, rel=0.2)


def test_session_round_trip(tmp_path):
    path = write_session(["T10", "SP05-S3", "RT03-10"], tmp_path, seed=4, session_name="mini")
    s = parse_manifest(path)
    assert [t.trial_id for t in s.trials] == ["T10", "SP05-S3-25", "RT03-10"]
    doc = json.loads(path.read_text())
    assert doc["trials"][1]["meta"]["labels"]["confident_wrong"] is True
    assert len(doc["registration"]["points"]) == 4


def test_scenario_file_overrides(tmp_path):
    f = tmp_path / "sc.json"
    f.write_text(json.dumps({"seed": 2, "config": {"cleaning": {"zscore_k": 4}},
                             "trials": [{"preset": "T10", "trial_id": "mine", "faults": {"jitter_sigma": [0, 0, 0]}}]}))
    (sc,), cfg = load_scenario_file(f)
    assert sc.trial.trial_id == "mine" and sc.faults.jitter_sigma == (0, 0, 0) and sc.faults.rng_seed == 2
    assert cfg == {"cleaning": {"zscore_k": 4}}


def test_bundled_session_size():
    names = SESSIONS["paper32"]
    assert len(names) == 32 and len(set(names)) == 32
    assert set(names) <= set(preset_names())
