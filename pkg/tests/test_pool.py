import numpy as np
import pytest

from rlmsad import dataio, pool
from rlmsad import detectors as det
from helpers import pool_from_scores

FAST = {"iforest": {"n_trees": 10}, "ocsvm_sgd": {"epochs": 2},
        "autoencoder": {"window": 3, "epochs": 2}}


@pytest.fixture(scope="module")
def small_pool():
    cfg = dataio.SynthConfig(t_train=300, t_test=300, d=3, min_segment=5, max_segment=10)
    train, test = dataio.generate_synthetic(cfg)
    return pool.build_pool(train, test, hyper=FAST, seed=1, block=2)


def test_alignment(small_pool):
    # block 2 leaves 150 rows; window 3 drops 2 context rows
    assert small_pool.length == 148
    assert small_pool.size == 5
    assert small_pool.state_table().shape == (148, 5, 5)
    assert small_pool.timesteps[0] == 300 + 2 * 2


def test_state_table_columns(small_pool):
    table = small_pool.state_table()
    labels = small_pool.labels()
    assert np.array_equal(table[:, :, 2], labels)
    pc = table[:, :, 4]
    assert np.all((pc >= 1 / 5) & (pc <= 1))
    for m, o in enumerate(small_pool.outputs):
        assert np.all(table[:, m, 1] == o.threshold_scaled)
        assert np.array_equal(table[:, m, 3] > 0, labels[:, m] == 1)


def test_score_file_round_trip(tmp_path, small_pool):
    path = tmp_path / "scores.csv"
    pool.write_scores(small_pool, path)
    back = pool.read_scores(path)
    assert back.kinds == small_pool.kinds
    assert np.array_equal(back.state_table(), small_pool.state_table())
    assert np.array_equal(back.truth, small_pool.truth)
    pool.write_scores(back, tmp_path / "again.csv")
    assert (tmp_path / "again.csv").read_bytes() == path.read_bytes()


def test_score_file_rejects_tampered_labels(tmp_path, small_pool):
    path = tmp_path / "scores.csv"
    pool.write_scores(small_pool, path)
    lines = path.read_text().splitlines()
    row = lines[-1].split(",")
    row[4] = str(1 - int(row[4]))
    lines[-1] = ",".join(row)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(dataio.DataError):
        pool.read_scores(path)


def test_build_pool_deterministic():
    cfg = dataio.SynthConfig(t_train=200, t_test=200, d=2, min_segment=5, max_segment=10)
    train, test = dataio.generate_synthetic(cfg)
    a = pool.build_pool(train, test, hyper=FAST, seed=3, block=1)
    b = pool.build_pool(train, test, hyper=FAST, seed=3, block=1)
    assert a.state_table().tobytes() == b.state_table().tobytes()


def test_detector_seeds_distinct():
    seeds = {pool.detector_seed(s, k) for s in range(5) for k in range(5)}
    assert len(seeds) == 25


def test_unlabelled_test_rejected():
    ts = dataio.TimeSeries(np.zeros((20, 2)))
    with pytest.raises(dataio.DataError):
        pool.preprocess(ts, ts)


def test_misaligned_outputs_rejected():
    p = pool_from_scores(np.random.default_rng(0).normal(size=(10, 2)), np.zeros(10))
    with pytest.raises(ValueError):
        pool.PoolOutputs(p.kinds, p.outputs, np.zeros(9), np.arange(9))
    with pytest.raises(ValueError):
        pool.PoolOutputs(p.kinds[:1], p.outputs[:1], p.truth, p.timesteps)
