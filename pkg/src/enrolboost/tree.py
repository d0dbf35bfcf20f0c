"""Depth-limited least-squares regression trees with Newton leaf values."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import InvalidConfig, TooFewRows

NEWTON_EPS = 1e-12
MAX_DEPTH_LIMIT = 8


@dataclass(frozen=True)
class TreeFitParams:
    max_depth: int = 3
    min_node: int = 10
    feature_subset: tuple[int, ...] | None = None

    def __post_init__(self):
        if not 1 <= self.max_depth <= MAX_DEPTH_LIMIT:
            raise InvalidConfig(f"max_depth must be in [1, {MAX_DEPTH_LIMIT}]")
        if self.min_node < 1:
            raise InvalidConfig("min_node must be >= 1")


class TreeData:
    """Encoded feature matrix plus per-feature presort, shared by every tree
    fit on the same rows."""

    def __init__(self, X, is_categorical, n_levels=None):
        self.X = np.ascontiguousarray(X, dtype=np.float64)
        self.is_cat = np.asarray(is_categorical, dtype=np.bool_)
        if n_levels is None:
            n_levels = [int(self.X[:, j].max()) + 1 if c and len(self.X) else 0
                         for j, c in enumerate(self.is_cat)]
        self.n_levels = np.asarray(n_levels, dtype=np.int64)
        n, p = self.X.shape
        self.Xt = np.ascontiguousarray(self.X.T)
        self.orders = np.empty((p, n), dtype=np.int64)
        for j in range(p):
            self.orders[j] = np.arange(n) if self.is_cat[j] else np.argsort(self.X[:, j], kind="stable")
        self._workspace = None

    def workspace(self):
        """Scratch arrays reused across tree fits; not shared between threads."""
        if self._workspace is None:
            n, p = self.X.shape
            self._workspace = (np.empty(n, dtype=np.int64), np.empty(n, dtype=np.int64),
                               np.empty((p, n), dtype=np.int64), np.empty((p, n)))
        return self._workspace

    @classmethod
    def from_cohort(cls, cohort) -> "TreeData":
        feats = cohort.schema.features
        return cls(cohort.feature_matrix(), [f.is_categorical for f in feats],
                   [len(f.levels) if f.is_categorical else 0 for f in feats])

    @property
    def n_features(self) -> int:
        return self.X.shape[1]


class RegressionTree:
    """Flat binary tree. ``feature[i] == -1`` marks a leaf.

    Numeric splits send ``x <= threshold`` left; categorical splits send rows
    whose level is flagged in ``catmask[i]`` left. Levels never seen in a node
    during fitting are not flagged, so they route right.
    """

    def __init__(self, feature, threshold, left, right, value, improvement, n_rows,
                 catmask, is_cat):
        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=np.float64)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.value = np.asarray(value, dtype=np.float64)
        self.improvement = np.asarray(improvement, dtype=np.float64)
        self.n_rows = np.asarray(n_rows, dtype=np.int64)
        self.catmask = np.ascontiguousarray(catmask, dtype=np.bool_)
        self.is_cat = np.asarray(is_cat, dtype=np.bool_)
        for a in (self.feature, self.threshold, self.left, self.right, self.value,
                  self.improvement, self.n_rows, self.catmask):
            a.setflags(write=False)

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def is_leaf(self) -> np.ndarray:
        return self.feature < 0

    def depth(self) -> int:
        best, stack = 0, [(0, 0)]
        while stack:
            node, d = stack.pop()
            if self.feature[node] < 0:
                best = max(best, d)
            else:
                stack += [(self.left[node], d + 1), (self.right[node], d + 1)]
        return best

    def apply(self, X) -> np.ndarray:
        """Leaf index for every row of ``X``."""
        X = np.ascontiguousarray(X, dtype=np.float64)
        out = np.empty(len(X), dtype=np.int64)
        _kernels.leaf_index(X, self.is_cat, self.feature, self.threshold, self.left,
                            self.right, self.catmask, out)
        return out

    def predict(self, X) -> np.ndarray:
        return self.value[self.apply(X)]

    def split_rule(self, node: int):
        j = int(self.feature[node])
        if j < 0:
            return None
        if self.is_cat[j]:
            return j, tuple(int(v) for v in np.flatnonzero(self.catmask[node]))
        return j, float(self.threshold[node])

    # -- serialization, preorder ----------------------------------------------

    def to_dict(self) -> dict:
        nodes = []

        def visit(i):
            pos = len(nodes)
            entry = {"n": int(self.n_rows[i]), "value": float(self.value[i])}
            nodes.append(entry)
            if self.feature[i] >= 0:
                j, rule = self.split_rule(i)
                entry["feature"] = j
                entry["improvement"] = float(self.improvement[i])
                if self.is_cat[j]:
                    entry["levels_left"] = list(rule)
                else:
                    entry["threshold"] = rule
                entry["left"] = visit(self.left[i])
                entry["right"] = visit(self.right[i])
            return pos

        visit(0)
        return {"nodes": nodes}

    @classmethod
    def from_dict(cls, d: dict, is_cat, n_levels) -> "RegressionTree":
        nodes = d["nodes"]
        m = len(nodes)
        width = max(1, int(np.max(n_levels)) if len(n_levels) else 1)
        feat = np.full(m, -1)
        thr = np.zeros(m)
        left = np.full(m, -1)
        right = np.full(m, -1)
        value = np.zeros(m)
        imp = np.zeros(m)
        n_rows = np.zeros(m, dtype=np.int64)
        catmask = np.zeros((m, width), dtype=bool)
        for i, e in enumerate(nodes):
            value[i] = e["value"]
            n_rows[i] = e["n"]
            if "feature" in e:
                feat[i] = e["feature"]
                imp[i] = e["improvement"]
                left[i], right[i] = e["left"], e["right"]
                if "levels_left" in e:
                    catmask[i, e["levels_left"]] = True
                else:
                    thr[i] = e["threshold"]
        return cls(feat, thr, left, right, value, imp, n_rows, catmask, is_cat)


def predict_tree(tree: RegressionTree, row) -> float:
    """Value of the leaf a single encoded row routes to."""
    return float(tree.predict(np.asarray(row, dtype=np.float64).reshape(1, -1))[0])


def fit_regression_tree(rows, data: TreeData, residuals, hessians,
                        params: TreeFitParams = TreeFitParams()) -> RegressionTree:
    """Greedy exact least-squares growth on ``rows`` of ``data``.

    ``residuals`` and ``hessians`` are aligned with ``rows``. Splits maximise
    the squared-error reduction of the residuals over midpoints of consecutive
    distinct values (numeric) or mean-residual-ordered level prefixes
    (categorical); leaves take the Newton value
    sum(residuals) / (sum(hessians) + 1e-12). Ties go to the lowest feature
    index, then the lowest threshold or shortest ordered prefix.
    """
    rows = np.asarray(rows, dtype=np.int64)
    if rows.size < 2 * params.min_node:
        raise TooFewRows(f"{rows.size} rows, need at least {2 * params.min_node}")
    residuals = np.asarray(residuals, dtype=np.float64)
    hessians = np.asarray(hessians, dtype=np.float64)
    if residuals.shape != rows.shape or hessians.shape != rows.shape:
        raise ValueError("residuals and hessians must align with rows")
    if np.any(hessians < 0):
        raise ValueError("hessians must be non-negative")
    n_all, p = data.X.shape
    g = np.zeros(n_all)
    g[rows] = residuals
    h = np.zeros(n_all)
    h[rows] = hessians
    features = np.arange(p) if params.feature_subset is None else np.unique(params.feature_subset)
    width = max(1, int(data.n_levels.max()) if p else 1)
    out = _kernels.grow_tree(data.Xt, data.is_cat, data.n_levels, data.orders,
                             features.astype(np.int64), rows, g, h, params.max_depth,
                             params.min_node, width, *data.workspace())
    feat, thr, left, right, value, imp, n_rows, catmask = out
    return RegressionTree(feat, thr, left, right, value, imp, n_rows, catmask, data.is_cat)
