import csv
import math

import numpy as np
import pytest

from conftest import make_cohort
from enrolboost.boosting import HyperParams, fit_gbm, mean_deviance, Loss
from enrolboost.errors import InvalidConfig, KTooLarge
from enrolboost.seeds import CV_BAG, derive_seed
from enrolboost.tuning import HyperGrid, assign_folds, cross_validate, select_best


def test_fold_shapes():
    assert np.bincount(assign_folds(10, 10, 0)).tolist() == [1] * 10
    assert sorted(np.bincount(assign_folds(101, 10, 3))) == [10] * 9 + [11]
    with pytest.raises(KTooLarge):
        assign_folds(5, 6, 0)
    with pytest.raises(InvalidConfig):
        assign_folds(5, 1, 0)
    np.testing.assert_array_equal(assign_folds(50, 5, 9), assign_folds(50, 5, 9))


def test_stratified_folds():
    y = np.r_[np.ones(300), np.zeros(700)]
    np.random.default_rng(0).shuffle(y)
    folds = assign_folds(1000, 10, 4, strata=y)
    pos = np.bincount(folds[y == 1], minlength=10)
    assert np.all(np.abs(pos - 30) <= 1)
    assert np.ptp(np.bincount(folds)) <= 1


def _noise(n, seed):
    r = np.random.default_rng(seed)
    return make_cohort(x=r.normal(size=n), z=r.uniform(size=n),
                       g=list(r.choice(["a", "b", "c"], n)), y=r.integers(0, 2, n))


def test_two_fold_hand_average():
    c = _noise(40, 1)
    grid = HyperGrid(shrinkage=(0.5,), max_depth=(2,), n_trees=1, bag_fraction=(1.0,),
                     min_node=(3,))
    res = cross_validate(c, "y", grid, k=2, seed=17)
    y = c["y"]
    devs = []
    for f in range(2):
        tr, va = np.flatnonzero(res.folds != f), np.flatnonzero(res.folds == f)
        m = fit_gbm(c.take(tr), "y", HyperParams(1, 0.5, 2, 3, 1.0,
                                                 derive_seed(17, CV_BAG, f)))
        devs.append(mean_deviance(Loss.BERNOULLI, y[va], m.predict(c.take(va))))
    assert res.traces.shape == (1, 1)
    assert res.traces[0, 0] == pytest.approx(np.mean(devs), abs=1e-12)


def test_noise_cannot_beat_chance():
    c = _noise(5000, 2)
    grid = HyperGrid(shrinkage=(0.1,), max_depth=(2, 3), n_trees=60, bag_fraction=(0.5,))
    res = cross_validate(c, "y", grid, k=5, seed=0)
    assert res.best_deviance >= -2 * math.log(0.5) - 0.05


def test_duplicates_threads_and_order(synth_small):
    c = synth_small.cohort
    grid = HyperGrid(shrinkage=(0.1, 0.1), max_depth=(2,), n_trees=40, bag_fraction=(0.5,))
    res = cross_validate(c, "enrolled", grid, k=4, seed=5)
    np.testing.assert_array_equal(res.traces[0], res.traces[1])
    assert res.best_index == 0

    grid = HyperGrid(shrinkage=(0.05, 0.2), max_depth=(1, 3), n_trees=40, bag_fraction=(0.5,))
    a = cross_validate(c, "enrolled", grid, k=4, seed=5)
    b = cross_validate(c, "enrolled", grid, k=4, seed=5, threads=3)
    np.testing.assert_array_equal(a.fold_traces, b.fold_traces)
    rev = HyperGrid(shrinkage=(0.2, 0.05), max_depth=(3, 1), n_trees=40, bag_fraction=(0.5,))
    r = cross_validate(c, "enrolled", rev, k=4, seed=5)
    assert r.best_config == a.best_config and r.best_deviance == a.best_deviance


def test_result_invariants(synth_small, tmp_path):
    c = synth_small.cohort
    grid = HyperGrid(shrinkage=(0.1,), max_depth=(2, 3), n_trees=30, bag_fraction=(1.0,))
    res = cross_validate(c, "enrolled", grid, k=3, seed=1)
    assert np.bincount(res.folds).sum() == c.n
    assert res.traces[res.best_index, res.best_iteration - 1] == res.best_deviance
    assert res.best_deviance == np.nanmin(res.traces)
    np.testing.assert_allclose(res.traces, res.fold_traces.mean(axis=1), rtol=0, atol=0)
    assert res.best_config.n_trees == res.best_iteration <= 30
    res.to_csv(tmp_path / "cv.csv")
    rows = list(csv.reader(open(tmp_path / "cv.csv")))
    assert rows[0] == ["config_id", "iteration", "mean_valid_deviance"]
    assert len(rows) == 1 + 2 * 30
    assert res.summary()["k"] == 3


def test_failing_config_is_dropped(synth_small):
    c = synth_small.cohort.take(np.arange(200))
    grid = HyperGrid(shrinkage=(0.1,), max_depth=(2,), n_trees=5, bag_fraction=(0.5,),
                     min_node=(10, 60))
    res = cross_validate(c, "enrolled", grid, k=2, seed=0)
    assert np.isnan(res.traces[1]).all()
    assert res.diagnostics and "config 1" in res.diagnostics[0]
    assert res.best_index == 0


def test_tie_break_order():
    configs = HyperGrid(shrinkage=(0.1, 0.01), max_depth=(3, 2), n_trees=2,
                        bag_fraction=(1.0,)).configs()
    traces = np.ones((4, 2))
    c, it, _ = select_best(configs, traces)
    assert it == 1
    assert (configs[c].shrinkage, configs[c].max_depth) == (0.01, 2)


def test_grid_dict_round_trip():
    g = HyperGrid()
    assert HyperGrid.from_dict(g.to_dict()) == g
    assert len(g.configs()) == 12
    with pytest.raises(InvalidConfig):
        HyperGrid(shrinkage=())
    with pytest.raises(InvalidConfig):
        HyperGrid.from_dict({"depth": [2]})
