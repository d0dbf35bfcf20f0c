"""Synthetic student cohorts with known logistic ground truth.

Categoricals are drawn independently from their marginals (defaults are the
grand-total shares of the 2018/19 fifth-year cohort). Math and Italian scores
are bivariate normal on the Rasch metric (mean 200, sd 40) with
curriculum-dependent mean shifts. School SES is normal, shifted by
macroregion. Both outcomes are Bernoulli draws from sigmoid(beta . x) over the
design encoding in :data:`DESIGN_TERMS`. All defaults are synthetic choices,
not estimates of the Italian population.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit

from .data_model import STUDY_SCHEMA, Cohort, write_csv
from .errors import InvalidConfig, SchemaMismatch

# one-of-K with reference levels F, North, Public, Humanistic; scores enter as (x - 200) / 40
DESIGN_TERMS = (
    "intercept",
    "gender=M",
    "hs_macroregion=Center",
    "hs_macroregion=SouthIslands",
    "hs_type=Private",
    "hs_curriculum=TradScientific",
    "hs_curriculum=AppliedSciences",
    "hs_ses",
    "math_score",
    "italian_score",
)
SCORE_CENTER = 200.0
SCORE_SCALE = 40.0

# shares of the grand totals (F 70458, M 71190; macroregion, school type and
# curriculum counts summed over both genders)
_TOTAL = 141648
DEFAULT_MARGINALS = {
    "gender": {"F": 70458 / _TOTAL, "M": 71190 / _TOTAL},
    "hs_macroregion": {"North": 51845 / _TOTAL, "Center": 29763 / _TOTAL,
                       "SouthIslands": 60040 / _TOTAL},
    "hs_type": {"Public": 131049 / _TOTAL, "Private": 10599 / _TOTAL},
    "hs_curriculum": {"Humanistic": 28937 / _TOTAL, "TradScientific": 82954 / _TOTAL,
                      "AppliedSciences": 29757 / _TOTAL},
}

DEFAULT_SCORE_SHIFTS = {
    "Humanistic": {"math": 0.0, "italian": 10.0},
    "TradScientific": {"math": 10.0, "italian": 0.0},
    "AppliedSciences": {"math": 15.0, "italian": 0.0},
}

DEFAULT_SES_SHIFTS = {"North": 0.2, "Center": 0.0, "SouthIslands": -0.3}

# Enrollment driven mostly by Italian then math, then school SES.
DEFAULT_BETA_ENROLL = {
    "intercept": 1.9,
    "gender=M": -0.15,
    "hs_macroregion=Center": -0.15,
    "hs_macroregion=SouthIslands": -0.25,
    "hs_type=Private": -0.5,
    "hs_curriculum=TradScientific": -0.1,
    "hs_curriculum=AppliedSciences": -0.2,
    "hs_ses": 0.3,
    "math_score": 0.6,
    "italian_score": 0.75,
}

# STEM choice driven by curriculum track then math.
DEFAULT_BETA_STEM = {
    "intercept": -1.4,
    "gender=M": 0.4,
    "hs_macroregion=Center": -0.1,
    "hs_macroregion=SouthIslands": -0.2,
    "hs_type=Private": -0.3,
    "hs_curriculum=TradScientific": 1.2,
    "hs_curriculum=AppliedSciences": 2.0,
    "hs_ses": -0.1,
    "math_score": 0.7,
    "italian_score": -0.1,
}


@dataclass(frozen=True)
class SynthConfig:
    n: int = 10000
    seed: int = 0
    marginals: dict = field(default_factory=lambda: {k: dict(v) for k, v in DEFAULT_MARGINALS.items()})
    score_mean: float = 200.0
    score_sd: float = 40.0
    rho: float = 0.5
    score_shifts: dict = field(default_factory=lambda: {k: dict(v) for k, v in DEFAULT_SCORE_SHIFTS.items()})
    ses_shifts: dict = field(default_factory=lambda: dict(DEFAULT_SES_SHIFTS))
    ses_sd: float = 1.0
    beta_enroll: dict = field(default_factory=lambda: dict(DEFAULT_BETA_ENROLL))
    beta_stem: dict = field(default_factory=lambda: dict(DEFAULT_BETA_STEM))
    # optional per-gender target rates; intercepts are solved to hit them
    enroll_rate_targets: dict | None = None
    stem_rate_targets: dict | None = None
    zero_score_fraction: float = 0.0

    def __post_init__(self):
        if self.n < 1:
            raise InvalidConfig("n must be >= 1")
        for f in STUDY_SCHEMA.features:
            if not f.is_categorical:
                continue
            probs = self.marginals.get(f.name)
            if probs is None or set(probs) != set(f.levels):
                raise InvalidConfig(f"marginals for {f.name!r} must cover {f.levels}")
            if any(p < 0 for p in probs.values()) or abs(sum(probs.values()) - 1) > 1e-9:
                raise InvalidConfig(f"marginals for {f.name!r} must be >= 0 and sum to 1")
        if not self.score_sd > 0 or not self.ses_sd > 0:
            raise InvalidConfig("standard deviations must be > 0")
        if not abs(self.rho) < 1:
            raise InvalidConfig("|rho| must be < 1")
        if not 0 <= self.zero_score_fraction <= 0.05:
            raise InvalidConfig("zero_score_fraction must be in [0, 0.05]")
        for name in ("beta_enroll", "beta_stem"):
            unknown = set(getattr(self, name)) - set(DESIGN_TERMS)
            if unknown:
                raise InvalidConfig(f"{name} has unknown terms {sorted(unknown)}")
        for name in ("enroll_rate_targets", "stem_rate_targets"):
            targets = getattr(self, name)
            if targets is not None:
                if set(targets) - {"F", "M"}:
                    raise InvalidConfig(f"{name} keys must be genders F/M")
                if not all(0 < v < 1 for v in targets.values()):
                    raise InvalidConfig(f"{name} values must be in (0, 1)")

    def beta_vector(self, outcome: str) -> np.ndarray:
        beta = self.beta_enroll if outcome == "enroll" else self.beta_stem
        return np.array([float(beta.get(t, 0.0)) for t in DESIGN_TERMS])

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise InvalidConfig(f"unknown synth config keys {sorted(unknown)}")
        return cls(**d)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "SynthConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


def design_matrix(rows: Cohort) -> np.ndarray:
    """Truth design in :data:`DESIGN_TERMS` order."""
    if rows.schema.fingerprint() != STUDY_SCHEMA.fingerprint():
        raise SchemaMismatch("ground truth is defined on the study schema only")
    n = rows.n
    D = np.empty((n, len(DESIGN_TERMS)))
    for j, term in enumerate(DESIGN_TERMS):
        if term == "intercept":
            D[:, j] = 1.0
        elif "=" in term:
            var, level = term.split("=")
            code = STUDY_SCHEMA.feature(var).levels.index(level)
            D[:, j] = rows[var] == code
        elif term == "hs_ses":
            D[:, j] = rows[term]
        else:
            D[:, j] = (rows[term] - SCORE_CENTER) / SCORE_SCALE
    return D


def ground_truth_proba(config: SynthConfig, rows: Cohort, outcome: str = "enroll") -> np.ndarray:
    """Exact sigmoid(beta . x) for each row; ``outcome`` is 'enroll' or 'stem'."""
    if outcome not in ("enroll", "stem"):
        raise InvalidConfig(f"outcome must be 'enroll' or 'stem', got {outcome!r}")
    return expit(design_matrix(rows) @ config.beta_vector(outcome))


@dataclass(frozen=True)
class SynthResult:
    cohort: Cohort
    p_enroll: np.ndarray
    p_stem: np.ndarray
    config: SynthConfig          # resolved: calibrated intercepts folded into the betas
    zero_rows: np.ndarray        # rows whose score was overwritten with 0

    def write(self, cohort_path, truth_path=None, config_path=None) -> None:
        write_csv(self.cohort, cohort_path)
        if truth_path is not None:
            with open(truth_path, "w", encoding="utf-8") as fh:
                fh.write("row_id,p_enroll,p_stem\n")
                for i, (a, b) in enumerate(zip(self.p_enroll, self.p_stem)):
                    fh.write(f"{i},{float(a)!r},{float(b)!r}\n")
        if config_path is not None:
            self.config.save(config_path)


def _calibrate(beta: dict, eta: np.ndarray, male: np.ndarray, targets: dict) -> dict:
    """Shift intercept / gender coefficient so each gender's mean probability hits its target."""
    beta = dict(beta)
    offsets = {}
    for g, mask in (("F", ~male), ("M", male)):
        if g not in targets or not mask.any():
            offsets[g] = 0.0
            continue
        e = eta[mask]
        offsets[g] = brentq(lambda d: float(expit(e + d).mean()) - targets[g], -50, 50,
                            xtol=1e-14)
    beta["intercept"] = beta.get("intercept", 0.0) + offsets["F"]
    beta["gender=M"] = beta.get("gender=M", 0.0) + offsets["M"] - offsets["F"]
    return beta


def generate_cohort(config: SynthConfig) -> SynthResult:
    rng = np.random.default_rng(config.seed)
    n = config.n
    cols = {}
    for f in STUDY_SCHEMA.features:
        if f.is_categorical:
            p = np.array([config.marginals[f.name][lv] for lv in f.levels])
            cols[f.name] = rng.choice(len(f.levels), size=n, p=p / p.sum())

    curr_levels = STUDY_SCHEMA.feature("hs_curriculum").levels
    shift_m = np.array([config.score_shifts.get(c, {}).get("math", 0.0) for c in curr_levels])
    shift_i = np.array([config.score_shifts.get(c, {}).get("italian", 0.0) for c in curr_levels])
    z = rng.standard_normal((2, n))
    curr = cols["hs_curriculum"]
    cols["math_score"] = config.score_mean + shift_m[curr] + config.score_sd * z[0]
    cols["italian_score"] = (config.score_mean + shift_i[curr] + config.score_sd
                             * (config.rho * z[0] + math.sqrt(1 - config.rho ** 2) * z[1]))

    macro_levels = STUDY_SCHEMA.feature("hs_macroregion").levels
    ses_shift = np.array([config.ses_shifts.get(m, 0.0) for m in macro_levels])
    cols["hs_ses"] = ses_shift[cols["hs_macroregion"]] + config.ses_sd * rng.standard_normal(n)

    u_enroll, u_stem = rng.random((2, n))
    cols["enrolled"] = np.zeros(n)
    cols["stem"] = np.full(n, np.nan)
    clean = Cohort(STUDY_SCHEMA, cols, validate=False)
    D = design_matrix(clean)
    male = cols["gender"] == 1

    resolved = config
    if config.enroll_rate_targets:
        beta = _calibrate(config.beta_enroll, D @ config.beta_vector("enroll"), male,
                          config.enroll_rate_targets)
        resolved = replace(resolved, beta_enroll=beta, enroll_rate_targets=None)
    if config.stem_rate_targets:
        beta = _calibrate(config.beta_stem, D @ config.beta_vector("stem"), male,
                          config.stem_rate_targets)
        resolved = replace(resolved, beta_stem=beta, stem_rate_targets=None)

    p_enroll = expit(D @ resolved.beta_vector("enroll"))
    p_stem = expit(D @ resolved.beta_vector("stem"))
    enrolled = (u_enroll < p_enroll).astype(np.float64)
    cols["enrolled"] = enrolled
    cols["stem"] = np.where(enrolled == 1, (u_stem < p_stem).astype(np.float64), np.nan)

    n_zero = int(math.floor(config.zero_score_fraction * n + 0.5))
    zero_rows = np.sort(rng.choice(n, size=n_zero, replace=False)) if n_zero else np.array([], dtype=np.int64)
    if n_zero:
        which = rng.integers(0, 2, size=n_zero)
        cols["math_score"] = cols["math_score"].copy()
        cols["italian_score"] = cols["italian_score"].copy()
        cols["math_score"][zero_rows[which == 0]] = 0.0
        cols["italian_score"][zero_rows[which == 1]] = 0.0

    return SynthResult(Cohort(STUDY_SCHEMA, cols), p_enroll, p_stem, resolved, zero_rows)
