import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pcplus.bench import (
    CSV_COLUMNS,
    HIST_BINS,
    BenchResult,
    aggregate_detection,
    amse,
    detection_metrics,
    detection_tolerance,
    match_changes,
    replication_seeds,
    results_to_csv,
    results_to_json,
    run_bench,
)
from pcplus.model import OLSHEN_CHANGES, Scenario, StepFunction, olshen_signal, standard_signals


def test_amse_examples():
    h = np.linspace(0, 1, 10)
    assert amse(h, h) == 0.0
    assert amse(h + 1, h) == pytest.approx(1.0)
    assert amse([1.0, 3.0], [0.0, 0.0]) == pytest.approx(5.0)
    with pytest.raises(ValueError):
        amse([1.0], [1.0, 2.0])


def test_tolerances():
    assert detection_tolerance(OLSHEN_CHANGES) == 3
    assert detection_tolerance([50]) == 3
    assert detection_tolerance([10, 14, 40]) == 2
    assert detection_tolerance([10, 13]) == 1
    assert detection_tolerance([10, 11]) == 1
    assert detection_tolerance(standard_signals("blocks", 2048).true_changes) == 3


def test_detection_examples():
    truth = list(OLSHEN_CHANGES)
    d = detection_metrics(truth, truth)
    assert d.mean_bias == 0 and d.pct_detected == 100.0
    assert d.histogram[HIST_BINS.index("0")] == 1.0
    d = detection_metrics([], truth)
    assert d.mean_bias == -6 and d.pct_detected == 0.0
    assert d.histogram[HIST_BINS.index("<-2")] == 1.0
    d = detection_metrics(StepFunction(497, [141], [0.0, 1.0]), truth)
    assert d.pct_detected == 0.0  # distance 3 is not below the tolerance
    d = detection_metrics([140, 226, 300, 400], truth)
    assert d.pct_detected == pytest.approx(100 * 3 / 6)
    assert d.histogram[HIST_BINS.index("-2")] == 1.0


def test_greedy_matching_is_one_to_one():
    # a single estimate halfway between two close changes certifies only one
    assert match_changes([12], [11, 13], tol=2) in ([(11, 12)], [(13, 12)])
    d = detection_metrics([12], [11, 13], tol=2)
    assert d.pct_detected == 50.0
    pairs = match_changes([10, 11], [10, 12], tol=3)
    assert sorted(pairs) == [(10, 10), (12, 11)]
    pairs = match_changes([5, 6, 7], [6], tol=3)
    assert pairs == [(6, 6)]


@given(st.lists(st.integers(1, 99), max_size=12, unique=True), st.lists(st.integers(1, 99), min_size=1, max_size=8, unique=True))
def test_detection_invariants(est, truth):
    truth = sorted(truth)
    d = detection_metrics(sorted(est), truth)
    assert sum(d.histogram) == pytest.approx(1.0, abs=1e-9)
    assert 0 <= d.pct_detected <= 100
    tol = detection_tolerance(truth)
    used = [e for _, e in match_changes(sorted(est), truth, tol)]
    assert len(used) == len(set(used))
    superset = sorted(set(est) | set(truth))
    assert detection_metrics(superset, truth).pct_detected == 100.0


def test_aggregate():
    a = detection_metrics([1, 2], [1])
    b = detection_metrics([], [1])
    agg = aggregate_detection([a, b])
    assert agg.mean_bias == 0.0
    assert sum(agg.histogram) == pytest.approx(1.0)
    assert agg.pct_detected == 50.0
    with pytest.raises(ValueError):
        aggregate_detection([])


def test_oracle_noise_free_is_exact():
    sc = Scenario("clean", StepFunction(40, [10, 30], [0.0, 1.0, -1.0]).to_vector(), [10, 30], 0.0)
    (res,) = run_bench(sc, ["oracle"], reps=1, seed=0)
    assert res.amse == 0.0
    assert res.detection.pct_detected == 100.0


def test_run_bench_determinism_and_errors():
    sc = olshen_signal(0.0, 0.0)
    a = run_bench(sc, ["pelt", "kernsmooth_loocv"], reps=3, seed=11)
    b = run_bench(sc, ["pelt", "kernsmooth_loocv"], reps=3, seed=11)
    assert [r.amse for r in a] == [r.amse for r in b]
    assert [r.detection for r in a] == [r.detection for r in b]
    c = run_bench(sc, ["pelt"], reps=3, seed=11, threads=3)
    assert c[0].amse == a[0].amse and c[0].detection == a[0].detection
    # kernel smoothers report no change-points
    assert a[1].detection.mean_bias == -6
    assert replication_seeds(11, 3) == replication_seeds(11, 3)
    assert len(set(replication_seeds(11, 50))) == 50
    with pytest.raises(ValueError):
        run_bench(sc, ["nope"], reps=1)
    with pytest.raises(ValueError):
        run_bench(sc, ["pelt"], reps=0)
    with pytest.raises(ValueError):
        BenchResult("x", "pelt", 0.0, a[0].detection, reps=0, seed=0)


def test_serialisation():
    sc = olshen_signal(0.0, 0.0)
    res = run_bench(sc, ["pelt", "oracle"], reps=2, seed=1)
    text = results_to_csv(res)
    lines = text.strip().split("\n")
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert len(lines) == 3
    assert lines[1].split(",")[2] == "pelt"
    js = results_to_json(res)
    assert js[0]["method"] == "pelt" and set(js[0]["detection"]["histogram"]) == set(HIST_BINS)
