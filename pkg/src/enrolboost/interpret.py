"""Relative influence, accumulated local effects and faceted partial dependence.

``model`` arguments only need a ``raw_scores(X)`` method taking an encoded
feature matrix in schema order, so hand-built scorers work as well as
:class:`~enrolboost.boosting.GbmModel`.
"""

from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass
from itertools import product

import numpy as np
from scipy.special import expit

from .data_model import Cohort
from .errors import ConstantFeature, InvalidConfig

log = logging.getLogger(__name__)


# -- relative influence -------------------------------------------------------

@dataclass(frozen=True)
class InfluenceTable:
    features: tuple[str, ...]
    values: np.ndarray  # normalised, sums to 1 unless the model never split

    def as_dict(self) -> dict:
        return {f: float(v) for f, v in zip(self.features, self.values)}

    def ranked(self) -> list[tuple[str, float]]:
        order = sorted(range(len(self.features)), key=lambda i: (-self.values[i], i))
        return [(self.features[i], float(self.values[i])) for i in order]

    def top(self, k: int) -> set:
        return {f for f, _ in self.ranked()[:k]}

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["feature", "relative_influence"])
            for f, v in self.ranked():
                w.writerow([f, repr(v)])


def relative_influence(model, n_trees: int | None = None) -> InfluenceTable:
    """Sum of recorded split improvements per feature over the first
    ``n_trees`` trees, normalised to one."""
    b = model.n_trees if n_trees is None else int(n_trees)
    if not 0 <= b <= model.n_trees:
        raise InvalidConfig(f"n_trees must be in [0, {model.n_trees}]")
    names = tuple(model.schema.feature_names)
    totals = np.zeros(len(names))
    for tree in model.trees[:b]:
        internal = tree.feature >= 0
        np.add.at(totals, tree.feature[internal], tree.improvement[internal])
    s = totals.sum()
    return InfluenceTable(names, totals / s if s > 0 else totals)


# -- ALE ----------------------------------------------------------------------

@dataclass(frozen=True)
class AleCurve:
    feature: str
    boundaries: np.ndarray        # z_0 = min .. z_K = max
    interval_counts: np.ndarray   # rows per interval, length K
    uncentered: np.ndarray        # accumulated effect at each boundary, 0 at z_0
    centered: np.ndarray          # raw (log-odds) scale, data-weighted mean zero
    centered_probability: np.ndarray  # sigmoid(mean raw score + centered), for display

    @property
    def k(self) -> int:
        return len(self.interval_counts)

    def slopes(self) -> np.ndarray:
        return np.diff(self.uncentered) / np.diff(self.boundaries)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["boundary", "uncentered", "centered", "interval_count",
                        "centered_probability"])
            counts = np.r_[0, self.interval_counts]
            for row in zip(self.boundaries, self.uncentered, self.centered, counts,
                           self.centered_probability):
                w.writerow([repr(float(row[0])), repr(float(row[1])), repr(float(row[2])),
                            int(row[3]), repr(float(row[4]))])


def _interval_index(x, z):
    # interval k covers (z[k-1], z[k]]; rows at the minimum join interval 1
    return np.maximum(np.searchsorted(z, x, side="left"), 1)


def ale_1d(model, data: Cohort, feature: str, k_intervals: int = 40) -> AleCurve:
    """First-order ALE on the raw score scale.

    Boundaries are linear-interpolation quantiles at levels k/K with z_0 the
    observed minimum (minimum-valued rows belong to the first interval).
    Duplicate quantiles collapse and an empty interval is merged into the one
    before it.
    """
    f = data.schema.feature(feature)
    if f.is_categorical:
        raise InvalidConfig(f"ALE needs a numeric feature, {feature!r} is categorical")
    if k_intervals < 1:
        raise InvalidConfig("k_intervals must be >= 1")
    j = data.schema.index(feature)
    X = data.feature_matrix()
    x = X[:, j]
    if np.unique(x).size < 2:
        raise ConstantFeature(f"{feature!r} has fewer than two distinct values")

    z = np.unique(np.quantile(x, np.arange(k_intervals + 1) / k_intervals))
    while True:
        idx = _interval_index(x, z)
        counts = np.bincount(idx, minlength=len(z))[1:]
        empty = np.flatnonzero(counts == 0)
        if empty.size == 0:
            break
        # merging interval k into k-1 drops their shared boundary z[k-1]
        z = np.delete(z, empty[0])

    X_hi = X.copy()
    X_lo = X.copy()
    X_hi[:, j] = z[idx]
    X_lo[:, j] = z[idx - 1]
    diff = model.raw_scores(X_hi) - model.raw_scores(X_lo)
    K = len(z) - 1
    local = np.bincount(idx - 1, weights=diff, minlength=K) / counts
    g = np.r_[0.0, np.cumsum(local)]
    centered = g - np.sum(counts * g[1:]) / len(x)
    mean_raw = float(np.mean(model.raw_scores(X)))
    return AleCurve(feature, z, counts, g, centered, expit(mean_raw + centered))


# -- convex hull --------------------------------------------------------------

def _cross(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull(points) -> np.ndarray:
    """Counter-clockwise hull vertices (monotone chain), collinear points dropped."""
    pts = sorted(set(map(tuple, np.asarray(points, dtype=float).tolist())))
    if len(pts) <= 2:
        return np.array(pts, dtype=float).reshape(-1, 2)
    lower, upper = [], []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    for p in reversed(pts):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1], dtype=float)


def points_in_hull(hull: np.ndarray, query, tol: float = 1e-9) -> np.ndarray:
    """Boundary-inclusive containment. Fewer than three hull vertices means a
    degenerate (collinear or single-point) set, handled by distance to the
    segment."""
    q = np.asarray(query, dtype=float).reshape(-1, 2)
    if len(hull) >= 3:
        a = hull
        b = np.roll(hull, -1, axis=0)
        edge = b - a
        rel = q[:, None, :] - a[None, :, :]
        cross = edge[None, :, 0] * rel[:, :, 1] - edge[None, :, 1] * rel[:, :, 0]
        scale = np.linalg.norm(edge, axis=1)[None, :] * np.maximum(
            1.0, np.linalg.norm(rel, axis=2))
        return np.all(cross >= -tol * scale, axis=1)
    a = hull[0]
    b = hull[-1]
    ab = b - a
    denom = float(ab @ ab)
    t = np.zeros(len(q)) if denom == 0 else np.clip((q - a) @ ab / denom, 0, 1)
    nearest = a + t[:, None] * ab
    extent = max(1.0, float(np.abs(hull).max()))
    return np.linalg.norm(q - nearest, axis=1) <= tol * extent


def convex_hull_mask(points, axes) -> np.ndarray:
    """``masked[i, j]`` is True when grid centre (axes[0][i], axes[1][j]) lies
    outside the convex hull of ``points``."""
    a, b = (np.asarray(v, dtype=float) for v in axes)
    hull = convex_hull(points)
    aa, bb = np.meshgrid(a, b, indexing="ij")
    inside = points_in_hull(hull, np.c_[aa.ravel(), bb.ravel()])
    return ~inside.reshape(len(a), len(b))


# -- partial dependence -------------------------------------------------------

@dataclass(frozen=True)
class PdpSurface:
    pair: tuple[str, str]
    facet: dict
    axis_a: np.ndarray
    axis_b: np.ndarray
    values: np.ndarray            # (len(axis_a), len(axis_b)) mean predicted probability
    masked: np.ndarray            # True outside the facet's convex hull
    hull: np.ndarray              # hull vertices of the facet's observed pairs
    n_rows: int                   # facet rows in the data
    n_averaged: int               # rows averaged per cell

    def facet_label(self) -> str:
        return ", ".join(f"{k}={v}" for k, v in self.facet.items()) or "all"


class FacetedPdp(list):
    """List of surfaces; ``empty_facets`` names facet combinations with no rows."""

    def __init__(self, surfaces=(), empty_facets=()):
        super().__init__(surfaces)
        self.empty_facets = list(empty_facets)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            if not self:
                w.writerow(["a", "b", "value", "masked"])
                return
            facet_names = list(self[0].facet)
            a_name, b_name = self[0].pair
            w.writerow(facet_names + [a_name, b_name, "value", "masked"])
            for s in self:
                levels = [s.facet[k] for k in facet_names]
                for i, av in enumerate(s.axis_a):
                    for jj, bv in enumerate(s.axis_b):
                        w.writerow(levels + [repr(float(av)), repr(float(bv)),
                                             repr(float(s.values[i, jj])),
                                             int(s.masked[i, jj])])


def _pdp_grid(model, X, ja, jb, axis_a, axis_b):
    m = len(X)
    nb = len(axis_b)
    values = np.empty((len(axis_a), nb))
    block = np.repeat(X, nb, axis=0)           # row r repeated for each b
    block[:, jb] = np.tile(axis_b, m)
    for i, av in enumerate(axis_a):
        block[:, ja] = av
        p = expit(model.raw_scores(block)).reshape(m, nb)
        values[i] = p.mean(axis=0)
    return values


def pdp_faceted(model, data: Cohort, pair=("italian_score", "math_score"),
                facets=("gender", "hs_curriculum"), grid=(50, 50), hull: bool = True,
                max_rows: int | None = None, seed: int = 0) -> FacetedPdp:
    """Two-feature partial dependence of the predicted probability, one surface
    per combination of facet levels.

    Each cell averages the model over the facet's rows with the pair
    overwritten and every other covariate left as observed. Grid axes span the
    facet's observed range of each pair feature. With ``hull`` the cells whose
    centre falls outside the convex hull of the facet's observed pairs are
    flagged in ``masked``. ``max_rows`` caps the rows averaged per facet using a
    seeded subsample (the hull always uses every facet row).
    """
    schema = data.schema
    a_name, b_name = pair
    for name in pair:
        if schema.feature(name).is_categorical:
            raise InvalidConfig(f"PDP pair feature {name!r} must be numeric")
    for name in facets:
        if not schema.feature(name).is_categorical:
            raise InvalidConfig(f"facet variable {name!r} must be categorical")
    ga, gb = grid
    if ga < 1 or gb < 1:
        raise InvalidConfig("grid dimensions must be >= 1")
    ja, jb = schema.index(a_name), schema.index(b_name)
    X = data.feature_matrix()
    rng = np.random.default_rng(seed)

    out = FacetedPdp()
    level_lists = [schema.feature(f).levels for f in facets]
    for combo in product(*level_lists):
        mask = np.ones(len(X), dtype=bool)
        for name, lv in zip(facets, combo):
            mask &= data[name] == schema.feature(name).levels.index(lv)
        facet = dict(zip(facets, combo))
        idx = np.flatnonzero(mask)
        if idx.size == 0:
            msg = f"facet {facet} has no rows; surface omitted"
            warnings.warn(msg, stacklevel=2)
            log.warning(msg)
            out.empty_facets.append(facet)
            continue
        Xf = X[idx]
        pts = Xf[:, [ja, jb]]
        axis_a = np.linspace(pts[:, 0].min(), pts[:, 0].max(), ga)
        axis_b = np.linspace(pts[:, 1].min(), pts[:, 1].max(), gb)
        used = Xf
        if max_rows is not None and len(idx) > max_rows:
            used = Xf[np.sort(rng.permutation(len(idx))[:max_rows])]
        values = _pdp_grid(model, used, ja, jb, axis_a, axis_b)
        if hull:
            masked = convex_hull_mask(pts, (axis_a, axis_b))
            hull_pts = convex_hull(pts)
        else:
            masked = np.zeros((ga, gb), dtype=bool)
            hull_pts = np.empty((0, 2))
        out.append(PdpSurface((a_name, b_name), facet, axis_a, axis_b, values, masked,
                              hull_pts, int(idx.size), int(len(used))))
    return out

