"""ROC curves, AUC and confusion counts."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import SingleClass


@dataclass(frozen=True)
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray  # first entry is +inf (nothing classified positive)
    auc: float

    @property
    def points(self):
        return list(zip(self.fpr.tolist(), self.tpr.tolist(), self.thresholds.tolist()))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["fpr", "tpr", "threshold"])
            for f, t, th in self.points:
                w.writerow([repr(f), repr(t), repr(th)])


def _check(labels, scores):
    y = np.asarray(labels)
    s = np.asarray(scores, dtype=np.float64)
    if y.shape != s.shape:
        raise ValueError("labels and scores must align")
    y = y.astype(bool)
    if y.all() or not y.any():
        raise SingleClass("both classes must be present")
    return y, s


def roc_curve(labels, scores) -> RocCurve:
    """Sweep thresholds over distinct scores, descending; a row is positive when
    score >= threshold. Tied scores collapse to one point. AUC is the trapezoid
    area, accumulated in integer counts so it agrees exactly with pair counting."""
    y, s = _check(labels, scores)
    order = np.argsort(-s, kind="stable")
    s_sorted = s[order]
    y_sorted = y[order]
    tp = np.cumsum(y_sorted)
    fp = np.cumsum(~y_sorted)
    # last index of each run of equal scores
    last = np.r_[np.flatnonzero(np.diff(s_sorted) != 0), len(s_sorted) - 1]
    tp = np.r_[0, tp[last]].astype(np.int64)
    fp = np.r_[0, fp[last]].astype(np.int64)
    thresholds = np.r_[np.inf, s_sorted[last]]
    n_pos, n_neg = int(tp[-1]), int(fp[-1])
    numer = int(np.sum((fp[1:] - fp[:-1]) * (tp[1:] + tp[:-1])))
    auc = numer / (2 * n_pos * n_neg)
    return RocCurve(fp / n_neg, tp / n_pos, thresholds, auc)


def auc_pair_oracle(labels, scores) -> float:
    """Exhaustive concordant-pair count; ties count one half."""
    y, s = _check(labels, scores)
    pos = s[y]
    neg = s[~y]
    diff = pos[:, None] - neg[None, :]
    doubled = 2 * int(np.sum(diff > 0)) + int(np.sum(diff == 0))
    return doubled / (2 * pos.size * neg.size)


@dataclass(frozen=True)
class Confusion:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def sensitivity(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def specificity(self) -> float:
        return self.tn / (self.tn + self.fp) if self.tn + self.fp else 0.0


def confusion_at(labels, scores, threshold: float) -> Confusion:
    y = np.asarray(labels).astype(bool)
    pred = np.asarray(scores, dtype=np.float64) >= threshold
    return Confusion(int(np.sum(pred & y)), int(np.sum(pred & ~y)),
                     int(np.sum(~pred & ~y)), int(np.sum(~pred & y)))
