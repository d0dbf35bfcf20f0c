"""Two-model enrollment study: enrollment on the full cohort, then STEM choice
among the enrolled, each with split, CV tuning, test ROC and interpretation."""

from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .boosting import GbmModel, fit_gbm, target_array
from .data_model import STUDY_SCHEMA, Cohort, filter_zero_scores, load_csv, \
    summarize_marginals, train_test_split, write_csv
from .errors import EnrolBoostError, InvalidConfig, StageError
from .evaluation import RocCurve, roc_curve
from .interpret import FacetedPdp, InfluenceTable, ale_1d, pdp_faceted, \
    relative_influence
from .seeds import PDP_ROWS, REFIT_BAG, SPLIT, derive_seed
from .synth import SynthConfig, SynthResult, generate_cohort, ground_truth_proba
from .tuning import CvResult, HyperGrid, cross_validate

log = logging.getLogger(__name__)

# Results on the administrative data, carried into the summary for context only.
ORIGINAL_STUDY_REFERENCE = {
    "note": "administrative-data results; context only, never compared against",
    "model1_test_auc": 0.71,
    "model2_test_auc": 0.69,
    "model1_influence": {"italian_score": 0.356, "math_score": 0.327, "hs_ses": 0.168},
    "model2_influence": {"hs_curriculum": 0.410, "math_score": 0.278},
    "zero_score_share": 0.0026,
}

MODELS = (
    (1, "enrolled", "enroll"),
    (2, "stem", "stem"),
)


@dataclass(frozen=True)
class StudyConfig:
    seed: int = 0
    data_path: str | None = None
    synth: SynthConfig | None = None
    split_fraction: float = 0.75
    cv_k: int = 10
    grid: HyperGrid = field(default_factory=HyperGrid)
    ale_k: int = 40
    ale_features: tuple = ("hs_ses", "italian_score", "math_score")
    pdp_grid: tuple = (50, 50)
    pdp_pair: tuple = ("italian_score", "math_score")
    pdp_facets: tuple = ("gender", "hs_curriculum")
    pdp_max_rows: int | None = 400
    threads: int = 1
    strict: bool = False
    output_dir: str | None = None

    def __post_init__(self):
        if (self.data_path is None) == (self.synth is None):
            raise InvalidConfig("exactly one of data_path and synth must be set")
        if not 0 < self.split_fraction < 1:
            raise InvalidConfig("split_fraction must be in (0, 1)")
        if self.cv_k < 2:
            raise InvalidConfig("cv_k must be >= 2")
        if self.threads < 1:
            raise InvalidConfig("threads must be >= 1")
        if self.synth is not None and self.synth.seed != self.seed:
            # the run seed drives the generator too
            object.__setattr__(self, "synth", replace(self.synth, seed=self.seed))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["grid"] = self.grid.to_dict()
        d["synth"] = self.synth.to_dict() if self.synth else None
        for k in ("ale_features", "pdp_grid", "pdp_pair", "pdp_facets"):
            d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "StudyConfig":
        d = dict(d)
        unknown = set(d) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise InvalidConfig(f"unknown study config keys {sorted(unknown)}")
        if d.get("synth") is not None:
            d["synth"] = SynthConfig.from_dict(d["synth"])
        if "grid" in d:
            d["grid"] = HyperGrid.from_dict(d["grid"])
        for k in ("ale_features", "pdp_grid", "pdp_pair", "pdp_facets"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d)

    def result_dict(self) -> dict:
        """Config minus execution knobs (threads, output_dir) that cannot change results."""
        d = self.to_dict()
        for k in ("threads", "output_dir"):
            d.pop(k)
        return d

    def config_hash(self) -> str:
        d = self.result_dict()
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class ModelReport:
    index: int
    target: str
    model: GbmModel
    cv: CvResult
    train_indices: np.ndarray     # into the model's population
    test_indices: np.ndarray
    population_rows: np.ndarray   # into the filtered cohort
    test_labels: np.ndarray
    test_scores: np.ndarray
    roc: RocCurve
    ceiling_auc: float | None
    influence: InfluenceTable
    ales: list
    pdp: FacetedPdp

    def summary(self) -> dict:
        return {
            "target": self.target,
            "population_rows": int(len(self.population_rows)),
            "train_rows": int(len(self.train_indices)),
            "test_rows": int(len(self.test_indices)),
            "chosen_hyperparameters": asdict(self.model.params),
            "cv": self.cv.summary(),
            "test_auc": self.roc.auc,
            "ceiling_auc": self.ceiling_auc,
            "relative_influence": dict(self.influence.ranked()),
            "ale": {a.feature: {"k": a.k, "centered_range": [float(a.centered.min()),
                                                             float(a.centered.max())]}
                    for a in self.ales},
            "pdp_facets": [s.facet_label() for s in self.pdp],
            "pdp_empty_facets": [str(f) for f in self.pdp.empty_facets],
        }


@dataclass
class StudyReport:
    config: StudyConfig
    cohort: Cohort                 # as loaded, before filtering
    synth: SynthResult | None
    models: list
    provenance: dict

    def summary(self) -> dict:
        return {
            "config_hash": self.config.config_hash(),
            "provenance": self.provenance,
            "models": {f"model{m.index}": m.summary() for m in self.models},
            "original_study_reference": ORIGINAL_STUDY_REFERENCE,
        }


def _stage(name, provenance, out_dir):
    """Context manager tagging failures with the stage and persisting provenance."""

    class _Ctx:
        def __enter__(self):
            provenance["stages"].append(name)
            log.info("stage %s", name)

        def __exit__(self, exc_type, exc, tb):
            if exc is None:
                return False
            provenance["failed_stage"] = name
            if out_dir is not None:
                Path(out_dir).mkdir(parents=True, exist_ok=True)
                (Path(out_dir) / "provenance.json").write_text(
                    json.dumps(provenance, indent=1, sort_keys=True) + "\n")
            if isinstance(exc, StageError):
                return False
            raise StageError(name, exc) from exc

    return _Ctx()


def model_population(cohort: Cohort, target: str) -> np.ndarray:
    """Rows eligible for ``target``: all rows, or those whose parent target is 1."""
    parent = cohort.schema.parent_of(target)
    if parent is None:
        return np.arange(cohort.n)
    return np.flatnonzero(cohort[parent] == 1)


def _fit_one(config, idx, target, outcome, pop_rows, pop, synth_cfg):
    s = derive_seed(config.seed, idx)
    split = train_test_split(pop, config.split_fraction, derive_seed(s, SPLIT))
    train = pop.take(split.train_indices)
    test = pop.take(split.test_indices)
    cv = cross_validate(train, target, config.grid, config.cv_k, seed=s,
                        threads=config.threads)
    params = replace(cv.best_config, seed=derive_seed(s, REFIT_BAG))
    model = fit_gbm(train, target, params)
    y_test = target_array(test, target)
    scores = model.predict(test, output="probability", strict=config.strict)
    roc = roc_curve(y_test, scores)
    ceiling = None
    if synth_cfg is not None:
        ceiling = roc_curve(y_test, ground_truth_proba(synth_cfg, test, outcome)).auc
    influence = relative_influence(model)
    ales = [ale_1d(model, train, f, config.ale_k) for f in config.ale_features]
    pdp = pdp_faceted(model, train, config.pdp_pair, config.pdp_facets, config.pdp_grid,
                      hull=True, max_rows=config.pdp_max_rows,
                      seed=derive_seed(s, PDP_ROWS))
    return ModelReport(idx, target, model, cv, split.train_indices, split.test_indices,
                       pop_rows, y_test, scores, roc, ceiling, influence, ales, pdp)


def run_study(config: StudyConfig) -> StudyReport:
    provenance = {"seed": config.seed, "config_hash": config.config_hash(), "stages": [],
                  "row_counts": {}}
    out_dir = config.output_dir
    counts = provenance["row_counts"]
    synth = None

    with _stage("load", provenance, out_dir):
        if config.synth is not None:
            synth = generate_cohort(config.synth)
            cohort = synth.cohort
            provenance["zero_scores_injected"] = int(len(synth.zero_rows))
        else:
            cohort = load_csv(config.data_path, STUDY_SCHEMA)
        counts["loaded"] = cohort.n

    with _stage("filter_zero_scores", provenance, out_dir):
        kept_mask = (cohort["math_score"] != 0) & (cohort["italian_score"] != 0)
        filtered, removed = filter_zero_scores(cohort)
        provenance["zero_score_removed"] = removed
        provenance["zero_score_share"] = removed / cohort.n if cohort.n else 0.0
        counts["after_zero_filter"] = filtered.n
        log.info("removed %d rows with a zero score (%.2f%%)", removed,
                 100 * provenance["zero_score_share"])
    kept_rows = np.flatnonzero(kept_mask)

    synth_cfg = synth.config if synth is not None else None
    reports = []
    for idx, target, outcome in MODELS:
        with _stage(f"model{idx}", provenance, out_dir):
            t0 = time.perf_counter()
            pop_local = model_population(filtered, target)
            pop = filtered.take(pop_local)
            counts[f"model{idx}_population"] = pop.n
            rep = _fit_one(config, idx, target, outcome, kept_rows[pop_local], pop, synth_cfg)
            counts[f"model{idx}_train"] = int(len(rep.train_indices))
            counts[f"model{idx}_test"] = int(len(rep.test_indices))
            reports.append(rep)
            log.info("model%d done in %.1fs: test AUC %.4f", idx, time.perf_counter() - t0,
                     rep.roc.auc)
    return StudyReport(config, cohort, synth, reports, provenance)


# -- outputs ------------------------------------------------------------------

def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_predictions(rep: ModelReport, path: Path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("cohort_row,label,probability\n")
        rows = rep.population_rows[rep.test_indices]
        for r, y, p in zip(rows, rep.test_labels, rep.test_scores):
            fh.write(f"{int(r)},{int(y)},{float(p)!r}\n")


def emit_outputs(report: StudyReport, out_dir, figures: bool = True) -> dict:
    """Write CSVs, SVG figures, model artifacts and a JSON summary, then a
    manifest of every file with its SHA-256. Files listed in a previous
    manifest but missing on disk are reported under ``regenerated``."""
    from . import plotting

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest_path = out / "manifest.json"
    previous = []
    if manifest_path.exists():
        try:
            previous = [f["path"] for f in json.loads(manifest_path.read_text())["files"]]
        except (ValueError, KeyError):
            previous = []
    missing = sorted(p for p in previous if not (out / p).exists())

    written, errors = [], []

    def emit(name, writer):
        try:
            writer(out / name)
            written.append(name)
        except OSError as exc:
            errors.append(f"{name}: {exc}")

    emit("summary.json", lambda p: p.write_text(
        json.dumps(report.summary(), indent=1, sort_keys=True) + "\n"))
    emit("study_config.json", lambda p: p.write_text(
        json.dumps(report.config.result_dict(), indent=1, sort_keys=True) + "\n"))
    emit("cohort.csv", lambda p: write_csv(report.cohort, p))
    if report.synth is not None:
        emit("truth.csv", lambda p: report.synth.write(out / "cohort.csv", p))
    emit("marginals.csv", lambda p: _write_marginals(report.cohort, p))

    for rep in report.models:
        tag = f"model{rep.index}"
        title = "Model 1: university enrollment" if rep.index == 1 else "Model 2: STEM enrollment"
        emit(f"{tag}.json", rep.model.save)
        emit(f"{tag}_cv_trace.csv", rep.cv.to_csv)
        emit(f"{tag}_test_predictions.csv", lambda p, r=rep: _write_predictions(r, p))
        emit(f"{tag}_roc.csv", rep.roc.to_csv)
        emit(f"{tag}_influence.csv", rep.influence.to_csv)
        for a in rep.ales:
            emit(f"{tag}_ale_{a.feature}.csv", a.to_csv)
        emit(f"{tag}_pdp.csv", rep.pdp.to_csv)
        if figures:
            emit(f"{tag}_roc.svg", lambda p, r=rep, t=title: plotting.plot_roc(r.roc, p, t))
            emit(f"{tag}_influence.svg",
                 lambda p, r=rep, t=title: plotting.plot_influence(r.influence, p, t))
            for a in rep.ales:
                emit(f"{tag}_ale_{a.feature}.svg",
                     lambda p, a=a, t=title: plotting.plot_ale(a, p, t))
            if len(rep.pdp):
                emit(f"{tag}_pdp.svg", lambda p, r=rep, t=title: plotting.plot_pdp(r.pdp, p, t))

    files = [{"path": name, "sha256": _sha256(out / name), "bytes": (out / name).stat().st_size}
             for name in sorted(set(written))]
    manifest = {"files": files, "regenerated": missing, "errors": errors}
    manifest_path.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    if errors:
        raise EnrolBoostError(f"failed to write {len(errors)} output files: {errors}")
    return manifest


def _write_marginals(cohort: Cohort, path):
    rows = summarize_marginals(cohort)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("variable,category,gender,total,pct_not_enrolled,pct_non_stem,pct_stem\n")
        for r in rows:
            a, b, c = r.rounded(1)
            fh.write(f"{r.variable},{r.category},{r.gender},{r.total},{a},{b},{c}\n")
