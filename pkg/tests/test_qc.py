import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mrigen_eval.exceptions import CalibrationError, InputError
from mrigen_eval.qc import (
    DEFAULT_QC_REGIONS,
    GateConfig,
    ModelGateResult,
    QCGate,
    QCRecord,
    calibrate_threshold,
    format_qc_csv,
    gate_model,
    gate_mri,
    parse_qc_csv,
    qc_distribution,
    threshold_grid,
)


def records_from_mins(mins, seed=0):
    """One record per minimum; the other regions score in [0.9, 1]."""
    rng = np.random.default_rng(seed)
    out = []
    for i, m in enumerate(mins):
        scores = dict(zip(DEFAULT_QC_REGIONS, rng.uniform(0.9, 1.0, len(DEFAULT_QC_REGIONS))))
        scores[DEFAULT_QC_REGIONS[i % len(DEFAULT_QC_REGIONS)]] = m
        out.append(QCRecord(f"s{i}", scores))
    return out


def test_gate_mri_is_strict():
    r = QCRecord("x", dict.fromkeys(DEFAULT_QC_REGIONS, 0.65))
    assert gate_mri(r) == (True, [])
    r.scores["thalamus"] = 0.6499999
    assert gate_mri(r) == (False, ["thalamus"])


def test_gate_model_counts():
    recs = records_from_mins([0.5, 0.7, 0.9, 0.2])
    recs[0].scores["brainstem"] = 0.1
    res = gate_model(recs)
    assert (res.total, res.failed_mris, res.failed_roi_events) == (4, 2, 3)
    assert res.pass_rate == 0.5 and res.verdict == "too-unreliable"


def test_pass_rate_boundary_is_assessable():
    recs = records_from_mins([0.5] * 5 + [0.9] * 95)
    res = gate_model(recs)
    assert res.pass_rate == 0.95 and res.assessable


def test_threshold_grid():
    grid = threshold_grid(0.01)
    assert grid[0] == 0.01 and grid[-1] == 0.99 and len(grid) == 99
    assert 0.65 in grid  # rounding keeps exact grid values
    with pytest.raises(InputError):
        threshold_grid(0)


def test_calibration_picks_largest_admissible():
    # 0.55 fails 2 of 100; 0.56 fails 6, above the 5% target
    mins = [0.3] * 2 + [0.55] * 4 + [0.95] * 94
    assert calibrate_threshold(records_from_mins(mins)) == 0.55
    assert calibrate_threshold(records_from_mins(mins), target_fail=0.02) == 0.55
    assert calibrate_threshold(records_from_mins(mins), target_fail=0.01) == 0.3


def test_calibration_impossible():
    with pytest.raises(CalibrationError):
        calibrate_threshold(records_from_mins([0.0] * 10), target_fail=0.05)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=5, max_size=60), st.sampled_from([0.01, 0.02, 0.05]),
       st.sampled_from([0.05, 0.1, 0.25]))
def test_calibration_is_maximal(mins, step, target):
    recs = records_from_mins(mins)
    n = len(mins)
    try:
        t = calibrate_threshold(recs, target, step)
    except CalibrationError:
        assert sum(m < step for m in mins) > target * n
        return
    arr = np.array([min(r.scores.values()) for r in recs])
    assert (arr < t).sum() <= target * n + 1e-9
    nxt = round(t + step, 12)
    if nxt < 1:
        assert (arr < nxt).sum() > target * n


def test_qc_distribution_quartiles():
    recs = [QCRecord(f"s{i}", dict.fromkeys(DEFAULT_QC_REGIONS, v)) for i, v in enumerate([0.1, 0.2, 0.3, 0.4, 0.5])]
    d = qc_distribution(recs, threshold=0.25)
    s = d["thalamus"]
    assert (s["min"], s["q1"], s["median"], s["q3"], s["max"]) == pytest.approx((0.1, 0.2, 0.3, 0.4, 0.5))
    assert s["fraction_below"] == 0.4


def test_qc_record_validation():
    with pytest.raises(InputError):
        QCRecord("x", {"thalamus": 0.5}).validate(DEFAULT_QC_REGIONS)
    with pytest.raises(InputError):
        QCRecord("x", dict.fromkeys(DEFAULT_QC_REGIONS, 1.5)).validate(DEFAULT_QC_REGIONS)


def test_gate_config_defaults():
    cfg = GateConfig()
    assert cfg.min_model_pass_rate == pytest.approx(0.95)
    with pytest.raises(InputError):
        GateConfig(region_names=("a", "a"))


def test_csv_round_trip():
    recs = records_from_mins([0.3, 0.8])
    back = parse_qc_csv(format_qc_csv(recs))
    assert [r.scores for r in back] == [r.scores for r in recs]
    with pytest.raises(InputError):
        parse_qc_csv("id,a\n1,2\n")


def test_gate_result_dict_round_trip():
    res = gate_model(records_from_mins([0.3, 0.8]))
    assert ModelGateResult.from_dict(res.to_dict()) == res


def test_qc_gate_estimator():
    mins = [0.3] * 2 + [0.55] * 4 + [0.95] * 94
    X = np.array([[r.scores[n] for n in DEFAULT_QC_REGIONS] for r in records_from_mins(mins)])
    gate = QCGate().fit(X)
    assert gate.threshold_ == 0.55 and gate.real_fail_fraction_ == 0.02
    assert gate.predict(X).sum() == 98
    assert gate.gate(X).assessable
    assert QCGate(threshold=0.6).fit(X).threshold_ == 0.6
    assert "target_fail" in gate.get_params()
    with pytest.raises(InputError):
        gate.predict(X[:, :3])
