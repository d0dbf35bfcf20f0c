import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from enrolboost.errors import SingleClass
from enrolboost.evaluation import auc_pair_oracle, confusion_at, roc_curve


def test_oracle_hand_cases():
    assert auc_pair_oracle([1, 0], [2, 1]) == 1.0
    assert auc_pair_oracle([1, 0], [1, 1]) == 0.5
    assert auc_pair_oracle([1, 1, 0], [3, 1, 2]) == 0.5
    with pytest.raises(SingleClass):
        auc_pair_oracle([1, 1], [0.2, 0.3])


def test_separating_and_constant():
    assert roc_curve([0, 0, 1, 1], [0.1, 0.2, 0.8, 0.9]).auc == 1.0
    roc = roc_curve([0, 1, 0, 1], [0.5] * 4)
    assert roc.auc == 0.5
    assert [p[:2] for p in roc.points] == [(0.0, 0.0), (1.0, 1.0)]
    with pytest.raises(SingleClass):
        roc_curve([0, 0], [1, 2])


def test_random_instance_matches_oracle(rng):
    y = rng.integers(0, 2, 200)
    s = rng.normal(size=200)
    assert roc_curve(y, s).auc == pytest.approx(auc_pair_oracle(y, s), abs=1e-12)


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(2, 120), st.booleans())
def test_roc_properties(seed, n, ties):
    r = np.random.default_rng(seed)
    y = r.integers(0, 2, n)
    y[:2] = [0, 1]
    s = r.integers(0, 5, n).astype(float) if ties else r.normal(size=n)
    roc = roc_curve(y, s)
    assert (roc.fpr[0], roc.tpr[0]) == (0.0, 0.0)
    assert (roc.fpr[-1], roc.tpr[-1]) == (1.0, 1.0)
    assert np.all(np.diff(roc.fpr) >= 0) and np.all(np.diff(roc.tpr) >= 0)
    assert roc.auc == auc_pair_oracle(y, s)
    assert roc.auc + roc_curve(y, -s).auc == pytest.approx(1.0, abs=1e-12)
    assert roc_curve(y, np.exp(s / 3) * 2 + 1).auc == roc.auc
    npos, nneg = int(y.sum()), int((1 - y).sum())
    for f, t, th in roc.points[1:]:
        c = confusion_at(y, s, th)
        assert (c.tp / npos, c.fp / nneg) == (t, f)


def test_confusion_extremes_and_hand_table():
    y = np.array([1, 0, 1, 1, 0, 0])
    s = np.array([0.9, 0.6, 0.4, 0.5, 0.2, 0.5])
    lo = confusion_at(y, s, -1)
    assert (lo.sensitivity, lo.specificity) == (1.0, 0.0)
    hi = confusion_at(y, s, 2)
    assert (hi.sensitivity, hi.specificity) == (0.0, 1.0)
    c = confusion_at(y, s, 0.5)
    assert (c.tp, c.fp, c.tn, c.fn) == (2, 2, 1, 1)
    assert c.sensitivity == pytest.approx(2 / 3)
    assert c.specificity == pytest.approx(1 / 3)


def test_csv(tmp_path, rng):
    roc = roc_curve(rng.integers(0, 2, 30), rng.normal(size=30))
    roc.to_csv(tmp_path / "roc.csv")
    lines = (tmp_path / "roc.csv").read_text().splitlines()
    assert lines[0] == "fpr,tpr,threshold"
    assert lines[1] == "0.0,0.0,inf"
    assert len(lines) == len(roc.fpr) + 1
