"""Command-line entry point: ``enrolboost <subcommand> [options]``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric failure,
1 anything else.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from .boosting import GbmModel, HyperParams, fit_gbm, target_array
from .data_model import STUDY_SCHEMA, filter_zero_scores, load_csv
from .errors import ConfigError, EnrolBoostError, InvalidConfig
from .evaluation import roc_curve
from .interpret import ale_1d, pdp_faceted, relative_influence
from .study import StudyConfig, emit_outputs, model_population, run_study
from .synth import SynthConfig, generate_cohort
from .tuning import HyperGrid, cross_validate

log = logging.getLogger("enrolboost")


def _read_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
    except OSError as exc:
        raise InvalidConfig(f"cannot read config {path}: {exc}") from exc
    except ValueError as exc:
        raise InvalidConfig(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(d, dict):
        raise InvalidConfig("config must be a JSON object")
    return d


def _out_dir(args) -> Path:
    out = Path(args.out_dir or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_population(args, target):
    cohort = load_csv(args.data, STUDY_SCHEMA)
    if not args.keep_zero_scores:
        cohort, removed = filter_zero_scores(cohort)
        log.info("removed %d rows with a zero score", removed)
    return cohort.take(model_population(cohort, target))


def _load_model(path) -> GbmModel:
    try:
        return GbmModel.load(path)
    except OSError as exc:
        raise InvalidConfig(f"cannot read model {path}: {exc}") from exc
    except (ValueError, KeyError, TypeError) as exc:
        raise InvalidConfig(f"malformed model artifact {path}: {exc}") from exc


# -- subcommands --------------------------------------------------------------

def cmd_synth(args):
    d = _read_config(args.config)
    if args.n is not None:
        d["n"] = args.n
    if args.seed is not None:
        d["seed"] = args.seed
    if args.zero_fraction is not None:
        d["zero_score_fraction"] = args.zero_fraction
    cfg = SynthConfig.from_dict(d)
    res = generate_cohort(cfg)
    out = _out_dir(args)
    res.write(out / "cohort.csv", out / "truth.csv", out / "synth_config.json")
    print(f"wrote {cfg.n} rows to {out / 'cohort.csv'} "
          f"(enrolled {np.mean(res.cohort['enrolled']):.3f}, "
          f"zero scores {len(res.zero_rows)})")


def _hyper_from(args, d) -> HyperParams:
    keys = HyperParams.__dataclass_fields__
    unknown = set(d) - set(keys) - {"grid", "cv_k"}
    if unknown:
        raise InvalidConfig(f"unknown train config keys {sorted(unknown)}")
    hp = {k: v for k, v in d.items() if k in keys}
    for k in ("n_trees", "shrinkage", "max_depth", "min_node", "bag_fraction"):
        v = getattr(args, k)
        if v is not None:
            hp[k] = v
    if args.seed is not None:
        hp["seed"] = args.seed
    return HyperParams(**hp)


def cmd_train(args):
    d = _read_config(args.config)
    params = _hyper_from(args, d)
    train = _load_population(args, args.target)
    cv_k = args.cv_k if args.cv_k is not None else d.get("cv_k")
    if cv_k:
        grid = HyperGrid.from_dict(d["grid"]) if "grid" in d else HyperGrid()
        cv = cross_validate(train, args.target, grid, int(cv_k), seed=params.seed,
                            threads=args.threads or 1)
        params = replace(cv.best_config, seed=params.seed)
        log.info("cv picked %s", asdict(params))
        if args.out_dir:
            cv.to_csv(_out_dir(args) / "cv_trace.csv")
    model = fit_gbm(train, args.target, params)
    path = Path(args.model) if args.model else _out_dir(args) / "model.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    model.save(path)
    print(f"trained {model.n_trees} trees on {train.n} rows -> {path}")


def cmd_evaluate(args):
    from . import plotting

    model = _load_model(args.model)
    target = args.target or model.target
    rows = _load_population(args, target)
    scores = model.predict(rows, output="probability", strict=args.strict)
    roc = roc_curve(target_array(rows, target), scores)
    if args.out_dir:
        out = _out_dir(args)
        roc.to_csv(out / "roc.csv")
        plotting.plot_roc(roc, out / "roc.svg")
    print(f"AUC {roc.auc:.6f} on {rows.n} rows")


def cmd_influence(args):
    from . import plotting

    table = relative_influence(_load_model(args.model))
    if args.out_dir:
        out = _out_dir(args)
        table.to_csv(out / "influence.csv")
        plotting.plot_influence(table, out / "influence.svg")
    for name, v in table.ranked():
        print(f"{name:16s} {100 * v:6.2f}%")


def cmd_ale(args):
    from . import plotting

    model = _load_model(args.model)
    rows = _load_population(args, model.target)
    d = _read_config(args.config)
    features = args.feature or d.get("features") or ["hs_ses", "italian_score", "math_score"]
    k = args.k or d.get("k", 40)
    out = _out_dir(args)
    for f in features:
        curve = ale_1d(model, rows, f, k)
        curve.to_csv(out / f"ale_{f}.csv")
        plotting.plot_ale(curve, out / f"ale_{f}.svg")
        print(f"{f}: {curve.k} intervals, centered range "
              f"[{curve.centered.min():.4f}, {curve.centered.max():.4f}]")


def cmd_pdp(args):
    from . import plotting

    model = _load_model(args.model)
    rows = _load_population(args, model.target)
    d = _read_config(args.config)
    pair = tuple(args.pair or d.get("pair", ("italian_score", "math_score")))
    facets = tuple(args.facets if args.facets is not None
                   else d.get("facets", ("gender", "hs_curriculum")))
    grid = tuple(args.grid or d.get("grid", (50, 50)))
    max_rows = args.max_rows if args.max_rows is not None else d.get("max_rows")
    seed = args.seed if args.seed is not None else d.get("seed", 0)
    res = pdp_faceted(model, rows, pair, facets, grid, hull=not args.no_hull,
                      max_rows=max_rows, seed=seed)
    out = _out_dir(args)
    res.to_csv(out / "pdp.csv")
    plotting.plot_pdp(res, out / "pdp.svg")
    print(f"{len(res)} facet surfaces, {len(res.empty_facets)} empty facets")


def cmd_study(args):
    d = _read_config(args.config)
    if args.seed is not None:
        d["seed"] = args.seed
    if args.threads is not None:
        d["threads"] = args.threads
    if args.strict:
        d["strict"] = True
    if args.data:
        d["data_path"] = args.data
        d.pop("synth", None)
    elif "data_path" not in d and "synth" not in d:
        d["synth"] = {}
    if args.n is not None:
        if "synth" not in d:
            raise InvalidConfig("--n only applies to a synthetic study")
        d["synth"]["n"] = args.n
    out = Path(args.out_dir or d.get("output_dir") or "study_out")
    d["output_dir"] = str(out)
    cfg = StudyConfig.from_dict(d)
    report = run_study(cfg)
    manifest = emit_outputs(report, out, figures=not args.no_figures)
    for m in report.models:
        line = f"model{m.index} ({m.target}): test AUC {m.roc.auc:.4f}"
        if m.ceiling_auc is not None:
            line += f", ceiling {m.ceiling_auc:.4f}"
        print(line + f", top-2 {sorted(m.influence.top(2))}")
    print(f"{len(manifest['files'])} files written to {out}")


def cmd_inspect(args):
    model = _load_model(args.model)
    info = {
        "target": model.target,
        "loss": model.loss.value,
        "f0": model.f0,
        "n_trees": model.n_trees,
        "shrinkage": model.shrinkage,
        "params": asdict(model.params) if model.params else None,
        "features": model.schema.feature_names,
        "relative_influence": dict(relative_influence(model).ranked()),
        "final_train_deviance": float(model.train_trace[-1]) if len(model.train_trace) else None,
    }
    if args.trees:
        info["trees"] = [t.to_dict() for t in model.trees]
    json.dump(info, sys.stdout, indent=1)
    sys.stdout.write("\n")


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config for the subcommand")
    common.add_argument("--seed", type=int)
    common.add_argument("--out-dir")
    common.add_argument("--threads", type=int, default=None)
    common.add_argument("--strict", action="store_true",
                        help="fail on categorical levels unseen in training")
    common.add_argument("-v", "--verbose", action="store_true")

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--data", required=True, help="cohort CSV")
    data.add_argument("--keep-zero-scores", action="store_true")

    p = argparse.ArgumentParser(prog="enrolboost", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="write a synthetic cohort and truth")
    s.add_argument("--n", type=int)
    s.add_argument("--zero-fraction", type=float)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("train", parents=[common, data], help="fit a boosted model")
    s.add_argument("--target", required=True, choices=list(STUDY_SCHEMA.targets))
    s.add_argument("--model", help="output artifact path (default <out-dir>/model.json)")
    s.add_argument("--n-trees", type=int)
    s.add_argument("--shrinkage", type=float)
    s.add_argument("--max-depth", type=int)
    s.add_argument("--min-node", type=int)
    s.add_argument("--bag-fraction", type=float)
    s.add_argument("--cv-k", type=int, help="tune over the config grid with k-fold CV first")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("evaluate", parents=[common, data], help="test ROC and AUC")
    s.add_argument("--model", required=True)
    s.add_argument("--target", choices=list(STUDY_SCHEMA.targets))
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("influence", parents=[common], help="relative influence table")
    s.add_argument("--model", required=True)
    s.set_defaults(func=cmd_influence)

    s = sub.add_parser("ale", parents=[common, data], help="accumulated local effects")
    s.add_argument("--model", required=True)
    s.add_argument("--feature", action="append")
    s.add_argument("--k", type=int)
    s.set_defaults(func=cmd_ale)

    s = sub.add_parser("pdp", parents=[common, data], help="faceted partial dependence")
    s.add_argument("--model", required=True)
    s.add_argument("--pair", nargs=2)
    s.add_argument("--facets", nargs="*")
    s.add_argument("--grid", nargs=2, type=int)
    s.add_argument("--max-rows", type=int)
    s.add_argument("--no-hull", action="store_true")
    s.set_defaults(func=cmd_pdp)

    s = sub.add_parser("study", parents=[common], help="run the full two-model study")
    s.add_argument("--data", help="cohort CSV (default: synthetic cohort)")
    s.add_argument("--n", type=int, help="synthetic cohort size")
    s.add_argument("--no-figures", action="store_true")
    s.set_defaults(func=cmd_study)

    s = sub.add_parser("inspect", parents=[common], help="dump a model artifact")
    s.add_argument("--model", required=True)
    s.add_argument("--trees", action="store_true", help="include every tree")
    s.set_defaults(func=cmd_inspect)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse usage errors are configuration errors
        return 0 if exc.code == 0 else ConfigError.exit_code
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads is not None and args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return ConfigError.exit_code
    try:
        args.func(args)
    except EnrolBoostError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
