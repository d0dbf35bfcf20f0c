"""k-fold cross-validation with staged evaluation over a hyperparameter grid."""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from itertools import product

import numpy as np

from .boosting import HyperParams, Loss, deviance_terms, fit_gbm, target_array
from .data_model import Cohort
from .errors import EnrolBoostError, InvalidConfig, KTooLarge
from .seeds import CV_BAG, FOLDS, derive_seed
from .tree import TreeData

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class HyperGrid:
    shrinkage: tuple = (0.01, 0.1)
    max_depth: tuple = (2, 3, 4)
    n_trees: int = 2000
    bag_fraction: tuple = (0.5, 1.0)
    min_node: tuple = (10,)

    def __post_init__(self):
        for name in ("shrinkage", "max_depth", "bag_fraction", "min_node"):
            if len(getattr(self, name)) == 0:
                raise InvalidConfig(f"grid list {name!r} is empty")
        if self.n_trees < 1:
            raise InvalidConfig("n_trees must be >= 1")

    def configs(self, seed: int = 0) -> list[HyperParams]:
        return [HyperParams(self.n_trees, s, d, m, b, seed)
                for s, d, b, m in product(self.shrinkage, self.max_depth,
                                          self.bag_fraction, self.min_node)]

    @classmethod
    def from_dict(cls, d: dict) -> "HyperGrid":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise InvalidConfig(f"unknown grid keys {sorted(unknown)}")
        return cls(**{k: (tuple(v) if isinstance(v, list) else v) for k, v in d.items()})

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}


def assign_folds(n: int, k: int, seed: int = 0, strata=None) -> np.ndarray:
    """Fold id per row. Rows are shuffled (within class when ``strata`` is
    given, classes taken in sorted order) and dealt round-robin, so fold sizes
    differ by at most one and each class is spread as evenly as possible."""
    if k < 2:
        raise InvalidConfig("k must be >= 2")
    if k > n:
        raise KTooLarge(f"k={k} exceeds n={n}")
    rng = np.random.default_rng(seed)
    if strata is None:
        dealt = rng.permutation(n)
    else:
        strata = np.asarray(strata)
        if strata.shape != (n,):
            raise InvalidConfig("strata must have one entry per row")
        dealt = np.concatenate([rng.permutation(np.flatnonzero(strata == c))
                                for c in np.unique(strata)])
    folds = np.empty(n, dtype=np.int64)
    folds[dealt] = np.arange(n) % k
    return folds


@dataclass
class CvResult:
    configs: list
    traces: np.ndarray             # (n_configs, B) mean validation deviance over folds
    fold_traces: np.ndarray        # (n_configs, k, B)
    folds: np.ndarray
    best_index: int
    best_iteration: int
    best_deviance: float
    diagnostics: list = field(default_factory=list)

    @property
    def best_config(self) -> HyperParams:
        return replace(self.configs[self.best_index], n_trees=self.best_iteration)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["config_id", "iteration", "mean_valid_deviance"])
            for c, trace in enumerate(self.traces):
                for b, v in enumerate(trace, start=1):
                    w.writerow([c, b, repr(float(v))])

    def summary(self) -> dict:
        return {
            "best_config_id": self.best_index,
            "best_iteration": self.best_iteration,
            "best_mean_valid_deviance": self.best_deviance,
            "best_config": asdict(self.best_config),
            "configs": [asdict(c) for c in self.configs],
            "k": int(self.folds.max()) + 1,
            "diagnostics": list(self.diagnostics),
        }


def select_best(configs, traces):
    """Minimum mean deviance; ties go to fewer trees, lower shrinkage, lower depth."""
    finite = np.where(np.isfinite(traces), traces, np.inf)
    best = finite.min()
    if not np.isfinite(best):
        raise EnrolBoostError("every configuration failed during cross-validation")
    candidates = []
    for c, b in zip(*np.nonzero(finite == best)):
        p = configs[c]
        candidates.append((b + 1, p.shrinkage, p.max_depth, p.bag_fraction, p.min_node, c))
    it, *_rest, c = min(candidates)
    return int(c), int(it), float(best)


def _fold_job(X, y, schema_cohort, folds, fold, params, loss):
    tr = np.flatnonzero(folds != fold)
    va = np.flatnonzero(folds == fold)
    data = TreeData(X[tr], schema_cohort.is_cat, schema_cohort.n_levels)
    model = fit_gbm(schema_cohort.cohort, None, params, loss, data=data, y=y[tr])
    staged = model.staged_raw_scores(X[va])[1:]
    return deviance_terms(loss, y[va][None, :], staged).mean(axis=1)


class _SchemaView:
    """Carries schema and encoding info to fold jobs without copying columns."""

    def __init__(self, cohort: Cohort):
        self.cohort = cohort.take(np.arange(0))
        feats = cohort.schema.features
        self.is_cat = [f.is_categorical for f in feats]
        self.n_levels = [len(f.levels) if f.is_categorical else 0 for f in feats]


def cross_validate(train: Cohort, target: str, grid: HyperGrid = HyperGrid(), k: int = 10,
                   seed: int = 0, threads: int = 1, stratified: bool = True,
                   loss: Loss = Loss.BERNOULLI) -> CvResult:
    """Fit every config on k-1 folds and score the held-out fold after each
    iteration. Bagging seeds depend on the fold only, so duplicated configs
    give identical traces and results do not depend on grid order."""
    loss = Loss(loss)
    y = target_array(train, target, loss)
    X = train.feature_matrix()
    n = len(y)
    folds = assign_folds(n, k, derive_seed(seed, FOLDS), strata=y if stratified else None)
    configs = grid.configs()
    view = _SchemaView(train)
    jobs = [(c, f) for c in range(len(configs)) for f in range(k)]

    def run(job):
        c, f = job
        params = replace(configs[c], seed=derive_seed(seed, CV_BAG, f))
        try:
            return _fold_job(X, y, view, folds, f, params, loss), None
        except EnrolBoostError as exc:
            return None, f"config {c} fold {f}: {exc}"

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(j) for j in jobs]

    B = grid.n_trees
    fold_traces = np.full((len(configs), k, B), np.nan)
    diagnostics = []
    for (c, f), (trace, err) in zip(jobs, results):
        if err is not None:
            diagnostics.append(err)
            log.warning("cross-validation: %s", err)
            continue
        fold_traces[c, f] = trace
    # a failing fold aborts its whole config
    failed = np.isnan(fold_traces).any(axis=(1, 2))
    traces = fold_traces.mean(axis=1)
    traces[failed] = np.nan
    best_index, best_iteration, best_dev = select_best(configs, traces)
    return CvResult(configs, traces, fold_traces, folds, best_index, best_iteration,
                    best_dev, diagnostics)
