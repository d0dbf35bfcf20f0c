"""Interpretable gradient boosting for two-stage enrollment studies."""

from .boosting import GbmModel, HyperParams, Loss, fit_gbm, predict
from .data_model import STUDY_SCHEMA, Cohort, FeatureSchema, filter_zero_scores, load_csv, \
    train_test_split, write_csv
from .evaluation import auc_pair_oracle, roc_curve
from .interpret import ale_1d, pdp_faceted, relative_influence
from .synth import SynthConfig, generate_cohort, ground_truth_proba
from .tuning import HyperGrid, cross_validate

__version__ = "0.1.0"

__all__ = [
    "Cohort", "FeatureSchema", "GbmModel", "HyperGrid", "HyperParams", "Loss", "STUDY_SCHEMA",
    "SynthConfig", "ale_1d", "auc_pair_oracle", "cross_validate", "filter_zero_scores",
    "fit_gbm", "generate_cohort", "ground_truth_proba", "load_csv", "pdp_faceted", "predict",
    "relative_influence", "roc_curve", "train_test_split", "write_csv",
]
