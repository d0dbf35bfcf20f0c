"""Columnar cohort storage, CSV ingestion, filtering, splitting and summaries."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass
from itertools import product
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DegenerateSplit,
    InsufficientRows,
    InsufficientVariance,
    InvalidConfig,
    InvalidTarget,
    MissingColumn,
    NonFiniteNumeric,
    RaggedRow,
    SchemaMismatch,
    UnknownCategoryLevel,
)

NA_TOKEN = "NA"


@dataclass(frozen=True)
class Feature:
    name: str
    levels: tuple[str, ...] | None = None  # None means numeric

    @property
    def is_categorical(self) -> bool:
        return self.levels is not None


def numeric(name: str) -> Feature:
    return Feature(name)


def categorical(name: str, levels: Sequence[str]) -> Feature:
    return Feature(name, tuple(levels))


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered features plus binary targets.

    ``conditional`` holds ``(target, parent)`` pairs: the target is only
    defined on rows where ``parent == 1`` and is ``NA`` elsewhere.
    """

    features: tuple[Feature, ...]
    targets: tuple[str, ...] = ()
    conditional: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        names = [f.name for f in self.features] + list(self.targets)
        if len(set(names)) != len(names):
            raise InvalidConfig(f"duplicate column names in schema: {names}")
        for f in self.features:
            if f.is_categorical:
                if not f.levels:
                    raise InvalidConfig(f"categorical {f.name!r} has no levels")
                if len(set(f.levels)) != len(f.levels):
                    raise InvalidConfig(f"categorical {f.name!r} has duplicate levels")
        for target, parent in self.conditional:
            if target not in self.targets or parent not in self.targets:
                raise InvalidConfig(f"conditional target {target!r}|{parent!r} not declared")

    @property
    def feature_names(self) -> list[str]:
        return [f.name for f in self.features]

    @property
    def column_names(self) -> list[str]:
        return self.feature_names + list(self.targets)

    def feature(self, name: str) -> Feature:
        for f in self.features:
            if f.name == name:
                return f
        raise MissingColumn(name)

    def index(self, name: str) -> int:
        return self.feature_names.index(name)

    def parent_of(self, target: str) -> str | None:
        for t, p in self.conditional:
            if t == target:
                return p
        return None

    def to_dict(self) -> dict:
        return {
            "features": [
                {"name": f.name, "levels": list(f.levels) if f.levels else None}
                for f in self.features
            ],
            "targets": list(self.targets),
            "conditional": [list(c) for c in self.conditional],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSchema":
        feats = tuple(
            Feature(f["name"], tuple(f["levels"]) if f.get("levels") else None)
            for f in d["features"]
        )
        return cls(feats, tuple(d.get("targets", ())),
                   tuple(tuple(c) for c in d.get("conditional", ())))

    def fingerprint(self) -> str:
        """Hash of the feature part of the schema (targets excluded)."""
        payload = json.dumps(self.to_dict()["features"], sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


STUDY_SCHEMA = FeatureSchema(
    features=(
        categorical("gender", ("F", "M")),
        categorical("hs_macroregion", ("North", "Center", "SouthIslands")),
        categorical("hs_type", ("Public", "Private")),
        categorical("hs_curriculum", ("Humanistic", "TradScientific", "AppliedSciences")),
        numeric("hs_ses"),
        numeric("math_score"),
        numeric("italian_score"),
    ),
    targets=("enrolled", "stem"),
    conditional=(("stem", "enrolled"),),
)


class Cohort:
    """Immutable column store.

    Categorical columns hold integer level codes (position in the schema's
    level list), numeric columns hold float64, targets hold float64 with
    NaN for ``NA``.
    """

    def __init__(self, schema: FeatureSchema, columns: dict, validate: bool = True):
        self.schema = schema
        cols = {}
        for f in schema.features:
            if f.name not in columns:
                raise MissingColumn(f.name)
            dtype = np.int64 if f.is_categorical else np.float64
            cols[f.name] = np.asarray(columns[f.name], dtype=dtype)
        for t in schema.targets:
            if t not in columns:
                raise MissingColumn(t)
            cols[t] = np.asarray(columns[t], dtype=np.float64)
        lengths = {len(v) for v in cols.values()}
        if len(lengths) > 1:
            raise SchemaMismatch(f"columns have different lengths: {sorted(lengths)}")
        self.n = lengths.pop() if lengths else 0
        for v in cols.values():
            v.setflags(write=False)
        self._columns = cols
        if validate:
            self._validate()

    def _validate(self):
        for f in self.schema.features:
            col = self._columns[f.name]
            if f.is_categorical:
                bad = np.flatnonzero((col < 0) | (col >= len(f.levels)))
                if bad.size:
                    raise UnknownCategoryLevel(int(bad[0]), f.name, int(col[bad[0]]))
            else:
                bad = np.flatnonzero(~np.isfinite(col))
                if bad.size:
                    raise NonFiniteNumeric(int(bad[0]), f.name, float(col[bad[0]]))
        for t in self.schema.targets:
            col = self._columns[t]
            parent = self.schema.parent_of(t)
            defined = np.ones(self.n, bool) if parent is None else self._columns[parent] == 1
            bad = np.flatnonzero(defined & ~np.isin(col, (0.0, 1.0)))
            if bad.size:
                raise InvalidTarget(f"row {int(bad[0])}: target {t!r} must be 0 or 1")
            bad = np.flatnonzero(~defined & ~np.isnan(col))
            if bad.size:
                raise InvalidTarget(
                    f"row {int(bad[0])}: target {t!r} must be NA where {parent!r} != 1")

    # -- access ---------------------------------------------------------------

    def __len__(self):
        return self.n

    def __getitem__(self, name: str) -> np.ndarray:
        try:
            return self._columns[name]
        except KeyError:
            raise MissingColumn(name) from None

    @property
    def columns(self) -> dict:
        return dict(self._columns)

    def decoded(self, name: str) -> np.ndarray:
        """Level names for a categorical column."""
        f = self.schema.feature(name)
        return np.asarray(f.levels, dtype=object)[self._columns[name]]

    def feature_matrix(self) -> np.ndarray:
        """(n, p) float64 design with categorical codes, in schema order."""
        X = np.empty((self.n, len(self.schema.features)), dtype=np.float64)
        for j, f in enumerate(self.schema.features):
            X[:, j] = self._columns[f.name]
        return X

    def take(self, indices) -> "Cohort":
        idx = np.asarray(indices)
        return Cohort(self.schema, {k: v[idx] for k, v in self._columns.items()},
                      validate=False)

    def equals(self, other: "Cohort") -> bool:
        if self.schema != other.schema or self.n != other.n:
            return False
        return all(
            np.array_equal(self._columns[k], other._columns[k], equal_nan=True)
            for k in self._columns
        )

    def content_hash(self) -> str:
        h = hashlib.sha256()
        for k in self.schema.column_names:
            h.update(k.encode())
            h.update(np.ascontiguousarray(self._columns[k]).tobytes())
        return h.hexdigest()

    @classmethod
    def from_values(cls, schema: FeatureSchema, values: dict) -> "Cohort":
        """Build from human-readable values (level names, ``NA`` or None for missing)."""
        cols = {}
        for f in schema.features:
            raw = values[f.name] if f.name in values else None
            if raw is None:
                raise MissingColumn(f.name)
            if f.is_categorical:
                lookup = {lv: i for i, lv in enumerate(f.levels)}
                codes = []
                for r, v in enumerate(raw):
                    if v not in lookup:
                        raise UnknownCategoryLevel(r, f.name, v)
                    codes.append(lookup[v])
                cols[f.name] = np.array(codes, dtype=np.int64)
            else:
                cols[f.name] = np.array(raw, dtype=np.float64)
        for t in schema.targets:
            if t not in values:
                raise MissingColumn(t)
            cols[t] = np.array(
                [np.nan if v is None or v == NA_TOKEN else float(v) for v in values[t]],
                dtype=np.float64)
        return cls(schema, cols)


# -- CSV ----------------------------------------------------------------------

def _format_number(x: float) -> str:
    return repr(float(x))


def write_csv(cohort: Cohort, path) -> None:
    """Write in canonical schema order; numerics at full precision."""
    schema = cohort.schema
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(schema.column_names)
        decoded = {
            f.name: cohort.decoded(f.name) for f in schema.features if f.is_categorical
        }
        for i in range(cohort.n):
            row = []
            for f in schema.features:
                if f.is_categorical:
                    row.append(decoded[f.name][i])
                else:
                    row.append(_format_number(cohort[f.name][i]))
            for t in schema.targets:
                v = cohort[t][i]
                row.append(NA_TOKEN if np.isnan(v) else str(int(v)))
            w.writerow(row)


def load_csv(path, schema: FeatureSchema = STUDY_SCHEMA) -> Cohort:
    """Read a header-first UTF-8 CSV and validate it against ``schema``.

    Row numbers in errors are 0-based data-row indices (header excluded).
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MissingColumn(schema.column_names[0]) from None
        header = [h.strip() for h in header]
        for name in schema.column_names:
            if name not in header:
                raise MissingColumn(name)
        extra = [h for h in header if h not in schema.column_names]
        if extra:
            raise SchemaMismatch(f"unexpected columns {extra}")
        pos = {name: header.index(name) for name in schema.column_names}
        lookups = {
            f.name: {lv: i for i, lv in enumerate(f.levels)}
            for f in schema.features if f.is_categorical
        }
        raw = {name: [] for name in schema.column_names}
        width = len(header)
        for r, line in enumerate(reader):
            if not line:
                continue
            if len(line) != width:
                raise RaggedRow(r)
            for f in schema.features:
                cell = line[pos[f.name]]
                if f.is_categorical:
                    code = lookups[f.name].get(cell)
                    if code is None:
                        raise UnknownCategoryLevel(r, f.name, cell)
                    raw[f.name].append(code)
                else:
                    try:
                        v = float(cell)
                    except ValueError:
                        raise NonFiniteNumeric(r, f.name, cell) from None
                    if not math.isfinite(v):
                        raise NonFiniteNumeric(r, f.name, cell)
                    raw[f.name].append(v)
            for t in schema.targets:
                cell = line[pos[t]].strip()
                if cell == NA_TOKEN:
                    raw[t].append(np.nan)
                elif cell in ("0", "1"):
                    raw[t].append(float(cell))
                else:
                    raise InvalidTarget(f"row {r}: target {t!r} has value {cell!r}")
    return Cohort(schema, raw)


# -- filtering and splitting --------------------------------------------------

def filter_zero_scores(cohort: Cohort, columns=("math_score", "italian_score")):
    """Drop rows where any score column is exactly 0."""
    keep = np.ones(cohort.n, dtype=bool)
    for c in columns:
        keep &= cohort[c] != 0
    removed = int(cohort.n - keep.sum())
    if removed == 0:
        return cohort, 0
    return cohort.take(np.flatnonzero(keep)), removed


@dataclass(frozen=True)
class SplitAssignment:
    train_indices: np.ndarray
    test_indices: np.ndarray
    seed: int


def train_test_split(cohort, train_fraction: float = 0.75, seed: int = 0) -> SplitAssignment:
    """Uniform random permutation, then a prefix split; indices returned sorted."""
    n = cohort if isinstance(cohort, (int, np.integer)) else len(cohort)
    if not 0 < train_fraction < 1:
        raise InvalidConfig(f"train_fraction must be in (0, 1), got {train_fraction}")
    n_train = int(math.floor(train_fraction * n + 0.5))
    if n < 2 or n_train == 0 or n_train == n:
        raise DegenerateSplit(f"n={n}, train_fraction={train_fraction} leaves an empty side")
    perm = np.random.default_rng(seed).permutation(n)
    return SplitAssignment(np.sort(perm[:n_train]), np.sort(perm[n_train:]), seed)


# -- descriptive summaries ----------------------------------------------------

@dataclass(frozen=True)
class MarginalRow:
    variable: str
    category: str
    gender: str
    total: int
    pct_not_enrolled: float
    pct_non_stem: float
    pct_stem: float

    def rounded(self, digits: int = 1) -> tuple[float, float, float]:
        return (round(self.pct_not_enrolled, digits), round(self.pct_non_stem, digits),
                round(self.pct_stem, digits))


def _band(values: np.ndarray, cutpoints: Sequence[float]) -> np.ndarray:
    # band b holds cut[b-1] <= x < cut[b]
    return np.searchsorted(np.asarray(cutpoints, dtype=float), values, side="right")


def _band_labels(k: int) -> list[str]:
    return ["Low", "Medium", "High"] if k == 3 else [f"Band{i + 1}" for i in range(k)]


def summarize_marginals(cohort: Cohort, ses_quartiles: bool = True,
                        proficiency_cutpoints: Sequence[float] = (170.0, 230.0)):
    """Per (variable, category, gender) outcome percentages in the layout of a
    cohort-characteristics table: not enrolled / enrolled non-STEM / STEM.

    SES is banded Low (<= Q1), Medium (Q1, Q3], High (> Q3) using the cohort's
    own quartiles. Scores are banded by ``proficiency_cutpoints``.
    Empty cells are reported with zero counts and zero percentages.
    """
    cuts = list(proficiency_cutpoints)
    if any(b <= a for a, b in zip(cuts, cuts[1:])):
        raise InvalidConfig("proficiency cutpoints must be strictly increasing")

    enrolled = cohort["enrolled"]
    stem = cohort["stem"]
    gender = cohort.decoded("gender")

    groupings: list[tuple[str, np.ndarray, list[str]]] = []
    for name in ("hs_macroregion", "hs_ses", "hs_type", "hs_curriculum",
                 "math_score", "italian_score"):
        if name == "hs_ses":
            if not ses_quartiles:
                continue
            ses = cohort["hs_ses"]
            if cohort.n:
                q1, q3 = np.quantile(ses, [0.25, 0.75])
            else:
                q1 = q3 = 0.0
            codes = np.where(ses <= q1, 0, np.where(ses <= q3, 1, 2))
            groupings.append((name, codes, ["Low", "Medium", "High"]))
        elif name in ("math_score", "italian_score"):
            groupings.append((name, _band(cohort[name], cuts), _band_labels(len(cuts) + 1)))
        else:
            f = cohort.schema.feature(name)
            groupings.append((name, cohort[name], list(f.levels)))
    groupings.append(("Total", np.zeros(cohort.n, dtype=np.int64), ["Total"]))

    rows = []
    for name, codes, labels in groupings:
        for c, label in enumerate(labels):
            for g in cohort.schema.feature("gender").levels:
                m = (codes == c) & (gender == g)
                total = int(m.sum())
                if total == 0:
                    rows.append(MarginalRow(name, label, g, 0, 0.0, 0.0, 0.0))
                    continue
                not_enr = float(np.sum(enrolled[m] == 0))
                is_stem = float(np.sum(stem[m] == 1))
                non_stem = total - not_enr - is_stem
                rows.append(MarginalRow(name, label, g, total, 100 * not_enr / total,
                                        100 * non_stem / total, 100 * is_stem / total))
    return rows


def marginal_lookup(rows, variable, category, gender) -> MarginalRow:
    for r in rows:
        if (r.variable, r.category, r.gender) == (variable, category, gender):
            return r
    raise KeyError((variable, category, gender))


def score_correlation(cohort: Cohort, by: Iterable[str] = (),
                      columns=("math_score", "italian_score")) -> dict:
    """Pearson correlation of the two score columns within each facet.

    Keys are tuples of level names (empty tuple when ``by`` is empty).
    Facet combinations absent from the data are skipped.
    """
    by = list(by)
    a, b = (cohort[c] for c in columns)
    if not by:
        facets = {(): np.arange(cohort.n)}
    else:
        decoded = [cohort.decoded(v) for v in by]
        levels = [cohort.schema.feature(v).levels for v in by]
        facets = {}
        for combo in product(*levels):
            m = np.ones(cohort.n, dtype=bool)
            for d, lv in zip(decoded, combo):
                m &= d == lv
            idx = np.flatnonzero(m)
            if idx.size:
                facets[combo] = idx
    out = {}
    for key, idx in facets.items():
        if idx.size < 2:
            raise InsufficientRows(key, int(idx.size))
        x, y = a[idx], b[idx]
        if np.ptp(x) == 0 or np.ptp(y) == 0:
            raise InsufficientVariance(key)
        r = float(np.corrcoef(x, y)[0, 1])
        out[key] = min(1.0, max(-1.0, r))
    return out
