from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from enrolboost.errors import InvalidConfig, TooFewRows
from enrolboost.tree import NEWTON_EPS, RegressionTree, TreeData, TreeFitParams, \
    fit_regression_tree, predict_tree


def _fit(X, g, h=None, is_cat=None, depth=1, min_node=1, rows=None):
    X = np.asarray(X, dtype=float).reshape(len(g), -1)
    is_cat = [False] * X.shape[1] if is_cat is None else is_cat
    data = TreeData(X, is_cat)
    rows = np.arange(len(g)) if rows is None else rows
    h = np.ones(len(rows)) if h is None else h
    return fit_regression_tree(rows, data, np.asarray(g, float), np.asarray(h, float),
                               TreeFitParams(depth, min_node)), data


def _sse(v):
    return float(np.sum((v - v.mean()) ** 2)) if len(v) else 0.0


def test_four_row_stump():
    tree, _ = _fit([1, 2, 3, 4], [-1, -1, 1, 1])
    assert tree.n_nodes == 3
    assert tree.split_rule(0) == (0, 2.5)
    assert tree.value[tree.left[0]] == pytest.approx(-1, abs=1e-11)
    assert tree.value[tree.right[0]] == pytest.approx(1, abs=1e-11)
    assert tree.improvement[0] == pytest.approx(4.0)
    for x, want in [(2.5, -1), (2.4, -1), (2.6, 1), (1, -1), (4, 1)]:
        assert predict_tree(tree, [x]) == pytest.approx(want, abs=1e-11)


def test_constant_residuals_give_single_leaf():
    tree, _ = _fit(np.arange(10), np.full(10, 0.3), depth=3)
    assert tree.n_nodes == 1
    assert tree.value[0] == pytest.approx(0.3, abs=1e-12)
    h = np.full(10, 0.25)
    tree, _ = _fit(np.arange(10), np.full(10, 0.3), h=h, depth=3)
    assert tree.value[0] == pytest.approx(3.0 / (2.5 + NEWTON_EPS), rel=1e-14)
    assert tree.predict(np.array([[100.0], [-5.0]])).tolist() == [tree.value[0]] * 2


def test_too_few_rows_and_bad_params():
    with pytest.raises(TooFewRows):
        _fit([1, 2, 3], [0, 1, 0], min_node=2)
    with pytest.raises(InvalidConfig):
        TreeFitParams(max_depth=9)
    with pytest.raises(InvalidConfig):
        TreeFitParams(min_node=0)


def _brute_best_gain(X, g, is_cat, min_node):
    best = 0.0
    total = _sse(g)
    for j in range(X.shape[1]):
        x = X[:, j]
        vals = np.unique(x)
        if is_cat[j]:
            cands = [np.isin(x, s) for r in range(1, len(vals))
                     for s in combinations(vals, r)]
        else:
            cands = [x <= (a + b) / 2 for a, b in zip(vals, vals[1:])]
        for m in cands:
            if m.sum() < min_node or (~m).sum() < min_node:
                continue
            best = max(best, total - _sse(g[m]) - _sse(g[~m]))
    return best


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(8, 40), st.integers(1, 3))
def test_split_is_optimal_against_brute_force(seed, n, min_node):
    r = np.random.default_rng(seed)
    X = np.c_[r.integers(0, 12, n), r.integers(0, 4, n), r.normal(size=n).round(1)]
    g = r.normal(size=n)
    is_cat = [False, True, False]
    tree, _ = _fit(X, g, is_cat=is_cat, min_node=min_node)
    want = _brute_best_gain(X, g, is_cat, min_node)
    got = tree.improvement[0] if tree.n_nodes > 1 else 0.0
    assert got == pytest.approx(want, rel=1e-9, abs=1e-9)


def test_newton_leaves_from_membership(rng):
    n = 200
    X = np.c_[rng.normal(size=n), rng.integers(0, 3, n), rng.uniform(size=n)]
    g = rng.normal(size=n)
    h = rng.uniform(0.05, 0.25, n)
    tree, data = _fit(X, g, h=h, is_cat=[False, True, False], depth=3, min_node=5)
    assert tree.depth() <= 3
    leaf = tree.apply(data.X)
    for node in np.unique(leaf):
        m = leaf == node
        assert tree.value[node] == pytest.approx(g[m].sum() / (h[m].sum() + NEWTON_EPS),
                                                 abs=1e-12)
        assert tree.n_rows[node] == m.sum() >= 5


def test_leaf_sums_telescope(rng):
    n = 300
    X = rng.normal(size=(n, 3))
    g = rng.normal(size=n)
    tree, data = _fit(X, g, depth=4, min_node=3)
    leaf = tree.apply(data.X)
    total = sum(np.sum(leaf == k) * g[leaf == k].mean() for k in np.unique(leaf))
    assert total == pytest.approx(g.sum(), abs=1e-9)


def test_subset_rows_and_feature_subset(rng):
    n = 100
    X = rng.normal(size=(n, 2))
    g = 3 * X[:, 0] + rng.normal(size=n) * 0.1
    rows = np.sort(rng.choice(n, 60, replace=False))
    data = TreeData(X, [False, False])
    tree = fit_regression_tree(rows, data, g[rows], np.ones(60),
                               TreeFitParams(2, 5, feature_subset=(1,)))
    assert set(tree.feature[tree.feature >= 0]) <= {1}
    assert tree.n_rows[0] == 60


def test_ties_go_to_lowest_feature():
    x = np.array([1.0, 2.0, 3.0, 4.0])
    tree, _ = _fit(np.c_[x, x], [-1, -1, 1, 1])
    assert tree.feature[0] == 0


def test_categorical_split_routes_unseen_level_right():
    X = np.array([0, 0, 1, 1, 0, 1], dtype=float)
    g = np.array([-1, -1, 1, 1, -1, 1.0])
    data = TreeData(X.reshape(-1, 1), [True], [3])
    tree = fit_regression_tree(np.arange(6), data, g, np.ones(6), TreeFitParams(1, 1))
    j, levels = tree.split_rule(0)
    assert j == 0 and levels == (0,)
    assert tree.predict(np.array([[2.0]]))[0] == tree.value[tree.right[0]]


def test_deterministic_and_serializable(rng):
    n = 150
    X = np.c_[rng.normal(size=n), rng.integers(0, 3, n)]
    g = rng.normal(size=n)
    a, data = _fit(X, g, is_cat=[False, True], depth=3, min_node=4)
    b, _ = _fit(X, g, is_cat=[False, True], depth=3, min_node=4)
    for name in ("feature", "threshold", "left", "right", "value", "improvement", "catmask"):
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name))
    c = RegressionTree.from_dict(a.to_dict(), data.is_cat, data.n_levels)
    np.testing.assert_array_equal(a.predict(data.X), c.predict(data.X))
    assert c.to_dict() == a.to_dict()
