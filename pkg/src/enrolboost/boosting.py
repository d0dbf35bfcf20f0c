"""Stochastic gradient boosting for binary (and squared-error) targets."""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass
from enum import Enum
from pathlib import Path

import numpy as np
from scipy.special import expit

from . import _kernels
from .data_model import Cohort, FeatureSchema
from .errors import InvalidConfig, InvalidTarget, SchemaMismatch, TooFewRows, UnknownLevel
from .tree import RegressionTree, TreeData, TreeFitParams, fit_regression_tree

PROB_CLAMP = 1e-12
ARTIFACT_VERSION = "enrolboost-gbm/1"


class Loss(str, Enum):
    BERNOULLI = "bernoulli"
    SQUARED_ERROR = "squared_error"


def _clamp(p):
    return np.clip(p, PROB_CLAMP, 1 - PROB_CLAMP)


def sigmoid(f):
    return expit(f)


def initial_score(targets, loss: Loss = Loss.BERNOULLI) -> float:
    y = np.asarray(targets, dtype=np.float64)
    if y.size == 0:
        raise InvalidTarget("empty target")
    if Loss(loss) is Loss.SQUARED_ERROR:
        return float(y.mean())
    ybar = float(_clamp(y.mean()))
    return math.log(ybar / (1 - ybar))


def negative_gradient(loss: Loss, y, f) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    f = np.asarray(f, dtype=np.float64)
    if Loss(loss) is Loss.SQUARED_ERROR:
        return y - f
    return y - sigmoid(f)


def hessian(loss: Loss, f) -> np.ndarray:
    f = np.asarray(f, dtype=np.float64)
    if Loss(loss) is Loss.SQUARED_ERROR:
        return np.ones_like(f)
    p = sigmoid(f)
    return p * (1 - p)


def deviance_terms(loss: Loss, y, f) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    f = np.asarray(f, dtype=np.float64)
    if Loss(loss) is Loss.SQUARED_ERROR:
        return (y - f) ** 2
    p = _clamp(sigmoid(f))
    return -2.0 * (y * np.log(p) + (1 - y) * np.log1p(-p))


def mean_deviance(loss: Loss, y, f) -> float:
    """Bernoulli: -2 mean log-likelihood (clamped); squared error: mean squared residual."""
    return float(np.mean(deviance_terms(loss, y, f), axis=-1))


@dataclass(frozen=True)
class HyperParams:
    n_trees: int = 100
    shrinkage: float = 0.1
    max_depth: int = 3
    min_node: int = 10
    bag_fraction: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise InvalidConfig("n_trees must be >= 1")
        if not 0 < self.shrinkage <= 1:
            raise InvalidConfig("shrinkage must be in (0, 1]")
        if not 0 < self.bag_fraction <= 1:
            raise InvalidConfig("bag_fraction must be in (0, 1]")
        TreeFitParams(self.max_depth, self.min_node)


class GbmModel:
    """f0 plus shrunken trees; raw score = f0 + shrinkage * sum of tree outputs."""

    def __init__(self, f0, trees, shrinkage, loss, schema: FeatureSchema, train_trace,
                 seen_levels=None, params: HyperParams | None = None, target=None):
        self.f0 = float(f0)
        self.trees = list(trees)
        self.shrinkage = float(shrinkage)
        self.loss = Loss(loss)
        self.schema = schema
        self.schema_fingerprint = schema.fingerprint()
        self.train_trace = np.asarray(train_trace, dtype=np.float64)
        self.seen_levels = seen_levels or {}
        self.params = params
        self.target = target
        self.is_cat = np.array([f.is_categorical for f in schema.features], dtype=np.bool_)
        self._pack()

    def _pack(self):
        width = max([1] + [len(f.levels) for f in self.schema.features if f.is_categorical])
        offsets, off = [], 0
        for t in self.trees:
            offsets.append(off)
            off += t.n_nodes
        self._roots = np.asarray(offsets, dtype=np.int64)
        if self.trees:
            shift = lambda a, o: np.where(a >= 0, a + o, -1)  # noqa: E731
            self._feat = np.concatenate([t.feature for t in self.trees])
            self._thr = np.concatenate([t.threshold for t in self.trees])
            self._left = np.concatenate([shift(t.left, o) for t, o in zip(self.trees, offsets)])
            self._right = np.concatenate([shift(t.right, o) for t, o in zip(self.trees, offsets)])
            self._value = np.concatenate([t.value for t in self.trees])
            mask = np.zeros((off, width), dtype=np.bool_)
            for t, o in zip(self.trees, offsets):
                mask[o:o + t.n_nodes, :t.catmask.shape[1]] = t.catmask[:, :width]
            self._catmask = mask
        else:
            self._feat = np.full(1, -1, dtype=np.int64)
            self._thr = np.zeros(1)
            self._left = self._right = np.full(1, -1, dtype=np.int64)
            self._value = np.zeros(1)
            self._catmask = np.zeros((1, width), dtype=np.bool_)

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def _check_trees(self, n_trees):
        if n_trees is None:
            return self.n_trees
        if not 0 <= n_trees <= self.n_trees:
            raise InvalidConfig(f"n_trees must be in [0, {self.n_trees}]")
        return int(n_trees)

    def raw_scores(self, X, n_trees: int | None = None) -> np.ndarray:
        """Raw (log-odds) scores for an encoded matrix in schema order."""
        b = self._check_trees(n_trees)
        X = np.ascontiguousarray(X, dtype=np.float64)
        out = np.empty(len(X))
        _kernels.predict_ensemble(X, self.is_cat, self._feat, self._thr, self._left,
                                  self._right, self._value, self._catmask, self._roots, b,
                                  self.f0, self.shrinkage, out)
        return out

    def staged_raw_scores(self, X, n_trees: int | None = None) -> np.ndarray:
        """(B + 1, n) matrix; row b holds scores after the first b trees."""
        b = self._check_trees(n_trees)
        X = np.ascontiguousarray(X, dtype=np.float64)
        out = np.empty((b + 1, len(X)))
        _kernels.predict_staged(X, self.is_cat, self._feat, self._thr, self._left,
                                self._right, self._value, self._catmask, self._roots, b,
                                self.f0, self.shrinkage, out)
        return out

    def check_levels(self, X, strict: bool = False) -> int:
        """Count rows with categorical levels unseen at fit time."""
        bad = np.zeros(len(X), dtype=bool)
        for j, f in enumerate(self.schema.features):
            seen = self.seen_levels.get(f.name)
            if seen is None:
                continue
            bad |= ~np.isin(X[:, j].astype(np.int64), seen)
        count = int(bad.sum())
        if count:
            if strict:
                raise UnknownLevel(f"{count} rows carry categorical levels unseen at fit time")
            warnings.warn(f"{count} rows carry categorical levels unseen at fit time; "
                          "they route right at those splits", stacklevel=3)
        return count

    def predict(self, rows: Cohort, n_trees: int | None = None, output: str = "raw",
                strict: bool = False) -> np.ndarray:
        if rows.schema.fingerprint() != self.schema_fingerprint:
            raise SchemaMismatch("cohort schema does not match the model's schema")
        X = rows.feature_matrix()
        self.check_levels(X, strict)
        raw = self.raw_scores(X, n_trees)
        if output == "raw":
            return raw
        if output == "probability":
            return sigmoid(raw)
        raise InvalidConfig(f"unknown output {output!r}")

    # -- artifact -------------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format": ARTIFACT_VERSION,
            "loss": self.loss.value,
            "target": self.target,
            "shrinkage": self.shrinkage,
            "f0": self.f0,
            "schema_fingerprint": self.schema_fingerprint,
            "schema": self.schema.to_dict(),
            "params": asdict(self.params) if self.params else None,
            "seen_levels": {k: [int(v) for v in vs] for k, vs in self.seen_levels.items()},
            "train_trace": [float(v) for v in self.train_trace],
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GbmModel":
        if d.get("format") != ARTIFACT_VERSION:
            raise SchemaMismatch(f"unsupported model artifact format {d.get('format')!r}")
        schema = FeatureSchema.from_dict(d["schema"])
        if schema.fingerprint() != d["schema_fingerprint"]:
            raise SchemaMismatch("artifact schema fingerprint does not match its schema")
        is_cat = [f.is_categorical for f in schema.features]
        n_lv = [len(f.levels) if f.is_categorical else 0 for f in schema.features]
        trees = [RegressionTree.from_dict(t, is_cat, n_lv) for t in d["trees"]]
        params = HyperParams(**d["params"]) if d.get("params") else None
        return cls(d["f0"], trees, d["shrinkage"], d["loss"], schema, d["train_trace"],
                   {k: np.asarray(v) for k, v in d["seen_levels"].items()}, params,
                   d.get("target"))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def load(cls, path) -> "GbmModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def target_array(cohort: Cohort, target: str, loss: Loss = Loss.BERNOULLI) -> np.ndarray:
    y = np.asarray(cohort[target], dtype=np.float64)
    if np.isnan(y).any():
        raise InvalidTarget(f"target {target!r} has missing values; subset the cohort first")
    if Loss(loss) is Loss.BERNOULLI and not np.isin(y, (0.0, 1.0)).all():
        raise InvalidTarget(f"target {target!r} must be binary for bernoulli loss")
    return y


def fit_gbm(train: Cohort, target: str, params: HyperParams = HyperParams(),
            loss: Loss = Loss.BERNOULLI, feature_subset=None, data: TreeData | None = None,
            y=None) -> GbmModel:
    """Functional gradient descent with shrinkage and per-iteration subsampling.

    Each iteration draws ceil(bag_fraction * n) rows without replacement, fits a
    tree to the negative gradient on that sample (Newton leaves with hessian
    p(1 - p) or 1), and moves every score by shrinkage * tree(x).
    ``data``/``y`` may be passed to reuse an already encoded matrix.
    """
    loss = Loss(loss)
    if y is None:
        y = target_array(train, target, loss)
    if data is None:
        data = TreeData.from_cohort(train)
    n = len(y)
    m = math.ceil(params.bag_fraction * n)
    if m < 2 * params.min_node:
        raise TooFewRows(f"bag of {m} rows is smaller than 2 * min_node")
    tparams = TreeFitParams(params.max_depth, params.min_node,
                            tuple(feature_subset) if feature_subset is not None else None)
    rng = np.random.default_rng(params.seed)
    f0 = initial_score(y, loss)
    F = np.full(n, f0)
    trees, trace = [], []
    full = np.arange(n)
    for _ in range(params.n_trees):
        rows = full if m == n else np.sort(rng.permutation(n)[:m])
        r = negative_gradient(loss, y[rows], F[rows])
        h = hessian(loss, F[rows])
        tree = fit_regression_tree(rows, data, r, h, tparams)
        F += params.shrinkage * tree.predict(data.X)
        trees.append(tree)
        trace.append(mean_deviance(loss, y, F))

    schema = train.schema
    seen = {f.name: np.unique(data.X[:, j].astype(np.int64))
            for j, f in enumerate(schema.features) if f.is_categorical}
    return GbmModel(f0, trees, params.shrinkage, loss, schema, trace, seen, params, target)


def predict(model: GbmModel, rows: Cohort, n_trees: int | None = None, output: str = "raw",
            strict: bool = False) -> np.ndarray:
    return model.predict(rows, n_trees, output, strict)
