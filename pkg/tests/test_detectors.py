import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from rlmsad import detectors as det
from rlmsad.dataio import TimeSeries, make_windows
from rlmsad.detectors.ecdf import copod_scores, ecod_scores, fit_tables, skewness
from rlmsad.detectors.iforest import average_path_length, fit_iforest, iforest_scores
from oracles import c_brute, copod_brute, ecod_brute, skew_brute


def windows(X, W=1):
    return make_windows(TimeSeries(np.asarray(X, dtype=float)), W)


def test_ecod_worked_example():
    # n=4 training values [1,2,3,4], test 10: left=1, right=floor 1/5
    tables = fit_tables(np.array([[1.0], [2.0], [3.0], [4.0]]))
    assert ecod_scores(tables, [[10.0]])[0] == pytest.approx(math.log(5), abs=1e-12)
    # test 2.5: left 2/4, right 2/4
    assert ecod_scores(tables, [[2.5]])[0] == pytest.approx(math.log(2), abs=1e-12)


def test_ecod_copod_match_brute_force():
    rng = np.random.default_rng(0)
    for trial in range(20):
        n, d = int(rng.integers(2, 201)), int(rng.integers(1, 6))
        train = rng.gamma(2.0, size=(n, d)) * rng.choice([-1, 1], d)
        if trial % 4 == 0:
            train = np.round(train)  # ties
        test = np.vstack([rng.normal(size=(5, d)) * 4, train[:3]])
        tables = fit_tables(train)
        e, c = ecod_scores(tables, test), copod_scores(tables, test)
        for i, x in enumerate(test):
            assert abs(e[i] - ecod_brute(train, x)) <= 1e-9
            assert abs(c[i] - copod_brute(train, x)) <= 1e-9


def test_skewness_matches_brute():
    X = np.random.default_rng(1).exponential(size=(50, 3))
    for j in range(3):
        assert skewness(X)[j] == pytest.approx(skew_brute(list(X[:, j])), rel=1e-12)
    assert skewness(np.ones((5, 1)))[0] == 0.0


@settings(max_examples=40, deadline=None)
@given(arrays(float, st.tuples(st.integers(8, 30), st.integers(1, 4)),
              elements=st.floats(-100, 100, allow_nan=False)),
       st.integers(0, 2**31 - 1))
def test_ecdf_scores_non_negative_and_duplication_invariant(train, seed):
    rng = np.random.default_rng(seed)
    test = train[rng.integers(0, len(train), 5)]
    t1, t2 = fit_tables(train), fit_tables(np.vstack([train, train]))
    e = ecod_scores(t1, test)
    assert np.all(e >= 0)
    assert np.all(copod_scores(t1, test) >= 0)
    # for points inside the training range the floor never binds
    assert np.allclose(e, ecod_scores(t2, test), atol=1e-12)


def test_average_path_length():
    assert average_path_length(1) == 0.0
    assert average_path_length(2) == 1.0
    for n in (3, 10, 256):
        assert average_path_length(n) == pytest.approx(c_brute(n), rel=1e-12)


def test_iforest_ranks_far_outlier_above_median():
    hits = 0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(64, 3))
        model = fit_iforest(X, rng, n_trees=100, max_samples=64)
        train_scores = iforest_scores(model, X)
        outlier = iforest_scores(model, [[12.0, -12.0, 12.0]])[0]
        hits += outlier > np.median(train_scores)
    assert hits == 20


def test_iforest_scores_in_unit_interval():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(40, 2))
    s = iforest_scores(fit_iforest(X, rng, 20, 32), rng.normal(size=(30, 2)) * 5)
    assert np.all((s > 0) & (s <= 1))


def test_threshold_flags_about_contamination():
    for n in (50, 100, 1000, 5000):
        s = np.random.default_rng(n).permutation(n).astype(float)
        out = det.threshold_scores(s, 0.12)
        assert abs(int(out.labels.sum()) - math.floor(0.12 * n)) <= 1


def test_threshold_is_strict_and_consistent():
    out = det.threshold_scores(np.ones(10), 0.12)
    assert out.labels.sum() == 0
    assert out.threshold_scaled == 0.5
    assert np.all(out.scaled_scores == 0.5)
    out = det.threshold_scores([0.0, 1.0, 2.0, 3.0], 0.12)
    assert np.array_equal(out.labels, (out.raw_scores > out.threshold_raw).astype(np.int8))
    assert out.scaled_scores.min() == 0.0 and out.scaled_scores.max() == 1.0


@settings(max_examples=50, deadline=None)
@given(arrays(float, st.integers(1, 60), elements=st.floats(-1e6, 1e6, allow_nan=False)),
       st.floats(0.01, 0.5))
def test_threshold_invariants(scores, c):
    out = det.threshold_scores(scores, c)
    assert set(np.unique(out.labels)) <= {0, 1}
    assert np.array_equal(out.labels == 1, out.raw_scores > out.threshold_raw)
    assert np.all((out.scaled_scores >= 0) & (out.scaled_scores <= 1))


def test_threshold_rejects_bad_input():
    for bad in ([], [np.nan, 1.0]):
        with pytest.raises(det.DetectorError):
            det.threshold_scores(bad, 0.12)
    with pytest.raises(det.DetectorError):
        det.threshold_scores([1.0, 2.0], 1.0)


def test_pool_validation():
    assert det.check_pool(["ecod", "copod"]) == (det.DetectorKind.ECOD, det.DetectorKind.COPOD)
    for bad in (["ecod"], ["ecod", "ecod"], ["ecod", "lof"]):
        with pytest.raises(det.DetectorError):
            det.check_pool(bad)


def test_too_few_rows_and_feature_mismatch():
    with pytest.raises(det.DetectorError):
        det.fit("ecod", windows(np.zeros((5, 2))))
    fitted = det.fit("ecod", windows(np.random.default_rng(0).normal(size=(20, 2))))
    with pytest.raises(det.DetectorError):
        det.score(fitted, windows(np.zeros((4, 3))))


def test_unknown_hyper():
    with pytest.raises(det.DetectorError):
        det.resolve_hyper("iforest", {"depth": 3})


@pytest.mark.parametrize("kind", [k.value for k in det.DetectorKind])
def test_fit_score_deterministic_and_round_trip(kind):
    rng = np.random.default_rng(5)
    X = rng.normal(size=(60, 3))
    W = det.window_length_for(kind, {"window": 4} if kind == "autoencoder" else None)
    hyper = {"window": 4, "epochs": 3} if kind == "autoencoder" else None
    a = det.fit(kind, windows(X, W), hyper, seed=7)
    b = det.fit(kind, windows(X, W), hyper, seed=7)
    test = windows(rng.normal(size=(20, 3)), W)
    sa = det.score(a, test)
    assert sa.tobytes() == det.score(b, test).tobytes()
    assert sa.shape == (20 - W + 1,) and np.all(np.isfinite(sa))
    back = det.deserialize(det.serialize(a))
    assert det.score(back, test).tobytes() == sa.tobytes()


def test_deserialize_rejects_version():
    fitted = det.fit("copod", windows(np.random.default_rng(0).normal(size=(20, 2))))
    text = det.serialize(fitted).replace('"format_version": 1', '"format_version": 99')
    with pytest.raises(det.DetectorError):
        det.deserialize(text)
    with pytest.raises(det.DetectorError):
        det.deserialize("{not json")


def test_autoencoder_scores_window_outlier_higher():
    t = np.arange(400.0)
    X = np.column_stack([np.sin(t / 5), np.cos(t / 5)])
    fitted = det.fit("autoencoder", windows(X, 6), {"window": 6, "epochs": 60}, seed=0)
    Y = X[:60].copy()
    Y[40:46] = -Y[40:46] + 0.5
    s = det.score(fitted, windows(Y, 6))
    assert s[40 - 5:46].max() > np.median(s[:30])
