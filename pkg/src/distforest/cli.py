"""Command-line front end.

Subcommands::

    distforest fit        --data train.csv --schema schema.json --out model.json [model flags]
    distforest predict    --model-file model.json --data new.csv --out pred.csv [--quantiles 0.1,0.5,0.9]
    distforest evaluate   --model-file model.json --data test.csv --out crps.csv [--reference ref.json]
    distforest cv         --data all.csv --schema schema.json --models forest,emos --reference emos --out cv.csv
    distforest importance --model-file model.json --data test.csv --out imp.csv

``--config run.json`` supplies a JSON object of run settings (the
``RunConfig`` fields); its values override command-line flags.  The worker
count defaults to ``$DISTFOREST_WORKERS`` or the number of cores.

Exit codes: 0 success, 2 configuration error, 3 data/schema/archive error,
4 fitting error.  Output tables are comma-separated with a header row.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import archive
from .data import Schema, load
from .evaluation import crpss, cross_validate, make_cv_plan, mean_crps, variable_importance
from .exceptions import (
    ArchiveVersionError,
    ConvergenceError,
    DataError,
    DegenerateSampleError,
    NoAdmissibleSplitError,
    SchemaError,
)
from .forest import DistForest
from .models import MODELS, RunConfig, factory, fit_model
from .tree import DistTree

log = logging.getLogger("distforest")

EXIT_CONFIG, EXIT_DATA, EXIT_FIT = 2, 3, 4


class ConfigError(Exception):
    pass


def _workers(value):
    if value is not None:
        return value
    env = os.environ.get("DISTFOREST_WORKERS")
    if env:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"DISTFOREST_WORKERS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def _run_config(args, **override) -> RunConfig:
    settings = {
        "model": args.model, "family": args.family, "ntree": args.ntree, "mtry": args.mtry,
        "subsample_fraction": args.subsample_fraction, "minsplit": args.minsplit,
        "minbucket": args.minbucket, "alpha": args.alpha, "tree_alpha": args.tree_alpha,
        "statistic": args.statistic, "seed": args.seed, "loc_column": args.loc_column,
        "scale_column": args.scale_column, "scale_transform": args.scale_transform,
        "workers": _workers(args.workers),
    }
    settings.update(override)
    if args.config:
        try:
            settings.update(json.loads(Path(args.config).read_text(encoding="utf-8")))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
    try:
        return RunConfig.from_dict(settings)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _schema(path) -> Schema:
    try:
        return Schema.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
    except (OSError, json.JSONDecodeError, TypeError) as exc:
        raise ConfigError(f"cannot read schema {path}: {exc}") from exc


def _archive_schema(model_path, schema_path):
    if schema_path:
        return _schema(schema_path)
    meta = archive.archive_metadata(model_path)
    if not meta.get("data_schema"):
        raise ConfigError("archive has no stored data schema; pass --schema")
    return Schema.from_dict(meta["data_schema"])


def _write_table(path, header, rows):
    out = sys.stdout if path in (None, "-") else Path(path).open("w", newline="", encoding="utf-8")
    try:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
    finally:
        if out is not sys.stdout:
            out.close()


def _summary(model, dataset) -> str:
    theta = model.predict(dataset.X)
    lines = [f"model: {type(model).__name__}", f"observations: {dataset.n}"]
    if isinstance(model, DistForest):
        leaves, depths = model.tree_sizes()
        lines += [f"ntree={len(model.trees)}", f"mean leaves per tree: {np.mean(leaves):.2f}",
                  f"mean tree depth: {np.mean(depths):.2f}"]
        if model.n_failed:
            lines.append(f"skipped trees: {model.n_failed}")
    elif isinstance(model, DistTree):
        lines += [f"leaves: {len(model.leaves)}", f"depth: {model.depth}"]
    lines.append(f"in-sample mean CRPS: {mean_crps(model.family, theta, dataset.y):.6f}")
    return "\n".join(lines)


def cmd_fit(args):
    config = _run_config(args)
    schema = _schema(args.schema)
    dataset = load(args.data, schema)
    model = fit_model(config, dataset)
    archive.save_model(model, args.out, archive.fingerprint(dataset), slim=args.slim,
                       data_schema=schema.to_dict())
    print(_summary(model, dataset))


def _quantile_list(text):
    try:
        qs = [float(q) for q in text.split(",") if q.strip()]
    except ValueError:
        raise ConfigError(f"bad quantile list {text!r}") from None
    if any(not 0 < q < 1 for q in qs):
        raise ConfigError("quantiles must lie in (0, 1)")
    return qs


def cmd_predict(args):
    qs = _quantile_list(args.quantiles)
    model = archive.load_model(args.model_file)
    schema = _archive_schema(args.model_file, args.schema)
    dataset = load(args.data, schema, require_response=False)
    sig = _model_schema(model)
    if sig is not None:
        dataset.check_schema(sig)
    theta = model.predict(dataset.X)
    fam = model.family
    p0 = fam.prob_atom(theta)
    quant = [fam.quantile(theta, q) for q in qs]
    header = ["row", "mu", "sigma", "p0"] + [f"q{q:g}" for q in qs]
    rows = ([i, float(theta.mu[i]), float(theta.sigma[i]), float(p0[i])]
            + [float(qv[i]) for qv in quant] for i in range(dataset.n))
    _write_table(args.out, header, rows)


def _model_schema(model):
    if isinstance(model, (DistForest, DistTree)):
        return model.schema
    return None


def _load_scored(args):
    model = archive.load_model(args.model_file)
    schema = _archive_schema(args.model_file, args.schema)
    dataset = load(args.data, schema)
    sig = _model_schema(model)
    if sig is not None:
        dataset.check_schema(sig)
    return model, dataset


def cmd_evaluate(args):
    model, dataset = _load_scored(args)
    per_obs = np.asarray(model.family.crps(model.predict(dataset.X), dataset.y), dtype=float)
    _write_table(args.out, ["row", "crps"], ([i, float(c)] for i, c in enumerate(per_obs)))
    line = f"mean CRPS: {per_obs.mean():.6f}"
    if args.reference:
        ref = archive.load_model(args.reference)
        ref_crps = mean_crps(ref.family, ref.predict(dataset.X), dataset.y)
        line += f"\nCRPSS vs reference: {crpss(float(per_obs.mean()), ref_crps):.6f}"
    print(line, file=sys.stderr if args.out in (None, "-") else sys.stdout)


def cmd_cv(args):
    schema = _schema(args.schema)
    if not schema.group:
        raise ConfigError("cross-validation needs a group column in the schema")
    dataset = load(args.data, schema)
    names = [m.strip() for m in args.models.split(",") if m.strip()]
    if args.reference not in names:
        names.append(args.reference)
    factories = {}
    for name in names:
        kind = name.split(":")[0]
        if kind not in MODELS:
            raise ConfigError(f"unknown model {name!r}")
        factories[name] = factory(_run_config(args, model=kind))
    plan = make_cv_plan(dataset.groups, args.repetitions, args.folds, args.seed)
    result = cross_validate(dataset, factories, plan, args.reference)
    _write_table(args.out, ["repetition", "model", "mean_crps", "crpss"], result.rows())


def cmd_importance(args):
    model, dataset = _load_scored(args)
    imp = variable_importance(model, dataset, args.seed, args.permutations)
    ranked = sorted(imp.items(), key=lambda kv: (-kv[1], list(imp).index(kv[0])))
    _write_table(args.out, ["variable", "delta_crps"], ([k, float(v)] for k, v in ranked))


def _model_flags(p):
    g = p.add_argument_group("model")
    g.add_argument("--model", choices=MODELS, default="forest")
    g.add_argument("--family", default="censored_normal")
    g.add_argument("--ntree", type=int, default=100)
    g.add_argument("--mtry", type=int, default=None)
    g.add_argument("--subsample-fraction", type=float, default=0.632)
    g.add_argument("--minsplit", type=int, default=50)
    g.add_argument("--minbucket", type=int, default=20)
    g.add_argument("--alpha", type=float, default=1.0)
    g.add_argument("--tree-alpha", type=float, default=0.05)
    g.add_argument("--statistic", choices=("quad", "max"), default="quad")
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--loc-column", default=None)
    g.add_argument("--scale-column", default=None)
    g.add_argument("--scale-transform", choices=("log", "identity"), default="log")
    g.add_argument("--workers", type=int, default=None)
    g.add_argument("--config", default=None, help="JSON run configuration (overrides flags)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="distforest", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a model and write an archive")
    p.add_argument("--data", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--slim", action="store_true", help="omit leaf memberships and training data")
    _model_flags(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="predictive parameters, point mass and quantiles")
    p.add_argument("--model-file", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--schema", default=None)
    p.add_argument("--out", default="-")
    p.add_argument("--quantiles", default="0.1,0.5,0.9")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="per-observation CRPS (and CRPSS vs a reference)")
    p.add_argument("--model-file", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--schema", default=None)
    p.add_argument("--reference", default=None)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("cv", help="repeated grouped cross-validation")
    p.add_argument("--data", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--models", default="forest,emos")
    p.add_argument("--reference", default="emos")
    p.add_argument("--repetitions", type=int, default=10)
    p.add_argument("--folds", type=int, default=7)
    p.add_argument("--out", default="-")
    _model_flags(p)
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("importance", help="permutation variable importance")
    p.add_argument("--model-file", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--schema", default=None)
    p.add_argument("--permutations", type=int, default=5)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_importance)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, SchemaError, ArchiveVersionError, archive.SlimArchiveError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (DegenerateSampleError, ConvergenceError, NoAdmissibleSplitError) as exc:
        print(f"fit error: {exc}", file=sys.stderr)
        return EXIT_FIT
    except ValueError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return 0


def main_exit():
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
