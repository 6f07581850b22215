"""Command-line front end.

Configuration is a flat ``key = value`` text file (or a JSON object, nested
keys joined with dots) passed with ``--config``; ``--set key=value`` and the
dedicated flags override it. Every artifact is written inside ``--out``
(default: ``$NUSURROGATE_OUT`` or ``./nusurrogate-out``). Failures print one
line, ``error: <subcommand>.<code>: <message>``, and exit with status 2.
"""

import argparse
import json
import math
import os
import re
import sys
import warnings

import numpy as np

from . import physics
from .dataset import (
    FIELDS,
    HEADER,
    DataError,
    Holdout,
    partition,
    describe_stats,
    ingest_csv,
    kde_curve,
    mann_whitney_u,
    synthesize_dataset,
    write_csv,
)
from .families import FAMILY_TAGS, default_space, make_family
from .hyperopt import (
    GaConfig,
    bayes_optimize,
    ga_optimize,
    grid_search,
    random_search_expanding,
    write_trials,
)
from .neural import MlpModel
from .numerics import child_seed
from .reports import KINDS, emit_report
from .reports import write_csv as write_table
from .transfer import train_source
from .validation import cross_validate, error_metrics, holdout_margin, monte_carlo

OUT_ENV = "NUSURROGATE_OUT"

DEFAULTS = {
    "data.n": 87,
    "data.noise": 0.03,
    "data.fluid": "na",
    "cv.k": 10,
    "mc.runs": 500,
    "holdout.fraction": 0.1,
    "holdout.margin": 0.08,
    "tune.optimizer": "rs",
    "tune.budget": 100,
    "tune.grid_points": 5,
}


class ConfigError(ValueError):
    pass


class CliError(Exception):
    def __init__(self, code, msg):
        super().__init__(msg)
        self.code = code


def _snake(name):
    return re.sub(r"(?<!^)(?=[A-Z])", "_", name).lower()


def _flatten(d, prefix=""):
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def _parse_scalar(text):
    text = text.strip()
    try:
        return json.loads(text)
    except ValueError:
        return text


def load_config(path):
    """Read a flat key-value or JSON configuration file into a flat dict."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    if text.lstrip().startswith("{"):
        try:
            return _flatten(json.loads(text))
        except ValueError as exc:
            raise ConfigError(f"invalid JSON config: {exc}") from exc
    cfg = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected key = value")
        k, v = line.split("=", 1)
        cfg[k.strip()] = _parse_scalar(v)
    return cfg


def resolve_config(args):
    cfg = dict(DEFAULTS)
    explicit = set()
    if args.config:
        loaded = load_config(args.config)
        cfg.update(loaded)
        explicit.update(loaded)
    for item in args.set or ():
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        cfg[k.strip()] = _parse_scalar(v)
        explicit.add(k.strip())
    for key, val in getattr(args, "_overrides", {}).items():
        if val is not None:
            cfg[key] = val
            explicit.add(key)
    cfg["_explicit"] = sorted(explicit)
    cfg["seed"] = int(args.seed if args.seed is not None else cfg.get("seed", 0))
    return cfg


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _out_dir(args):
    out = args.out or os.environ.get(OUT_ENV) or "nusurrogate-out"
    os.makedirs(out, exist_ok=True)
    return out


def _artifact(out, name):
    if os.path.basename(name) != name:
        raise ConfigError(f"artifact name {name!r} must not contain a directory")
    return os.path.join(out, name)


def _dump_json(path, obj):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, np.ndarray):
        return _jsonable(o.tolist())
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (float, np.floating)):
        f = float(o)
        return f if math.isfinite(f) else None
    return o


def load_dataset(cfg):
    path = cfg.get("data.path")
    synth = any(k in cfg.get("_explicit", ()) for k in ("data.n", "data.noise", "data.fluid"))
    if path and synth:
        raise ConfigError("give either data.path or a synthesis spec, not both")
    if path:
        return ingest_csv(str(path))
    return synthesize_dataset(int(cfg["data.n"]), noise=float(cfg["data.noise"]),
                              fluid=str(cfg["data.fluid"]), seed=int(cfg.get("data.seed", cfg["seed"])))


def build_family(tag, cfg):
    if tag not in FAMILY_TAGS:
        raise ConfigError(f"unknown family {tag!r}; choose from {', '.join(FAMILY_TAGS)}")
    source = None
    if tag == "tr-nn":
        src = cfg.get("transfer.source")
        if src:
            with open(str(src), encoding="utf-8") as fh:
                d = json.load(fh)
            source = MlpModel.from_dict(d)
        else:
            water = synthesize_dataset(int(cfg["data.n"]), noise=float(cfg["data.noise"]),
                                       fluid="water", seed=child_seed(cfg["seed"], 7))
            source, _ = train_source(water, seed=cfg["seed"], cv_k=0)
    try:
        return make_family(tag, cfg, source)
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc


def _family_tag(cfg):
    tag = cfg.get("family")
    if not tag:
        raise ConfigError("no model family given (--family or family = ...)")
    return str(tag)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_gen_data(args, cfg):
    out = _out_dir(args)
    ds = synthesize_dataset(int(cfg["data.n"]), noise=float(cfg["data.noise"]),
                            fluid=str(cfg["data.fluid"]), seed=cfg["seed"])
    path = _artifact(out, args.name)
    write_csv(ds, path)
    print(path)


def cmd_stats(args, cfg):
    out = _out_dir(args)
    ds = load_dataset(cfg)
    summary = describe_stats(ds)
    rows = [(name, st.mean, st.mode, st.variance, st.max, st.p99, st.p1)
            for name, st in summary.rows()]
    write_table(_artifact(out, "stats.csv"),
                ("variable", "mean", "mode", "variance", "max", "p99", "p1"), rows)
    for name, field in zip(HEADER, FIELDS):
        x, dens = kde_curve(ds.column(field))
        write_table(_artifact(out, f"kde_{name}.csv"), ("x", "density"), zip(x, dens))
    for r in rows:
        print("  ".join(f"{v:.6g}" if isinstance(v, float) else str(v) for v in r))
    if args.other:
        other = ingest_csv(args.other)
        res = {}
        for name, field in zip(HEADER, FIELDS):
            mw = mann_whitney_u(ds.column(field), other.column(field))
            res[name] = {"u": mw.u, "pvalue": mw.pvalue, "exact": mw.exact}
        _dump_json(_artifact(out, "mann_whitney.json"), res)
        for name, r in res.items():
            print(f"mann-whitney {name}: U={r['u']:.6g} p={r['pvalue']:.6g}")


def cmd_physics_eval(args, cfg):
    p = physics.PhysicsParams.from_dict({k[8:]: v for k, v in cfg.items() if k.startswith("physics.")}) \
        if any(k.startswith("physics.") for k in cfg) else physics.SODIUM
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", physics.RangeWarning)
        chain = physics.evaluate_chain(args.alpha, args.l_over_d, args.pe, p)
    for k, v in chain.items():
        print(f"{k} = {float(v):.10g}")
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)


def cmd_fit(args, cfg):
    out = _out_dir(args)
    tag = _family_tag(cfg)
    ds = load_dataset(cfg)
    fitted = build_family(tag, cfg).fit(ds.features, ds.targets, cfg["seed"])
    mape, mse = error_metrics(ds.targets, fitted.predict(ds.features))
    d = fitted.to_dict()
    d.update({"family": tag, "train_mape": mape, "train_mse": mse, "seed": cfg["seed"]})
    path = _artifact(out, "model.json")
    _dump_json(path, d)
    print(f"train MAPE {mape:.6g}; wrote {path}")


def cmd_tune(args, cfg):
    out = _out_dir(args)
    tag = _family_tag(cfg)
    ds = load_dataset(cfg)
    space = default_space(tag)
    k, seed, jobs = int(cfg["cv.k"]), cfg["seed"], args.jobs

    def objective(trial):
        fam = build_family(tag, {**cfg, **trial})
        rep = cross_validate(fam, ds, k=k, seed=seed, jobs=jobs)
        if rep.failures:
            raise RuntimeError(rep.failures[0]["error"])
        return rep.mean_mape

    opt = str(cfg["tune.optimizer"])
    if opt == "rs":
        res = random_search_expanding(space.grid(int(cfg["tune.grid_points"])), objective, seed=seed)
    elif opt == "grid":
        res = grid_search(space.grid(int(cfg["tune.grid_points"])), objective, seed=seed)
    elif opt == "ga":
        res = ga_optimize(space, objective, GaConfig(population=int(cfg.get("tune.population", 20))),
                          seed=seed)
    elif opt == "bo":
        res = bayes_optimize(space, objective, budget=int(cfg["tune.budget"]), seed=seed)
    else:
        raise ConfigError(f"unknown optimizer {opt!r}; choose rs, grid, ga or bo")
    write_trials(_artifact(out, "trials.jsonl"), res.trials, timing=args.record_timing)
    best = {"family": tag, **res.best}
    _dump_json(_artifact(out, "best_config.json"), best)
    print(f"best CV MAPE {res.best_mape:.6g} after {len(res.trials)} trials: {json.dumps(res.best, sort_keys=True)}")


def cmd_cv(args, cfg):
    out = _out_dir(args)
    tag = _family_tag(cfg)
    rep = cross_validate(build_family(tag, cfg), load_dataset(cfg), k=int(cfg["cv.k"]),
                         seed=cfg["seed"], jobs=args.jobs)
    _dump_json(_artifact(out, "cv.json"), rep.to_dict())
    print(f"{tag}: mean CV MAPE {rep.mean_mape:.6g} over {rep.k} folds")


def cmd_mc(args, cfg):
    out = _out_dir(args)
    tag = _family_tag(cfg)
    ds = load_dataset(cfg)
    rep = monte_carlo(build_family(tag, cfg), ds, Holdout(float(cfg["holdout.fraction"]), cfg["seed"]),
                      runs=int(cfg["mc.runs"]), master_seed=cfg["seed"], jobs=args.jobs)
    d = rep.summary()
    d["holdout_idx"] = rep.holdout_idx
    d["mapes"] = rep.mapes
    d["epochs"] = rep.epochs
    _dump_json(_artifact(out, "mc.json"), d)
    write_table(_artifact(out, "mc_runs.csv"),
                ["run", "mape", "epochs"] + [f"p{i}" for i in rep.holdout_idx],
                [[i, m, e, *p] for i, (m, e, p) in enumerate(zip(rep.mapes, rep.epochs, rep.predictions))])
    print(f"{tag}: {d['successful']}/{rep.runs} runs, mean MAPE {rep.mean_mape:.6g}, "
          f"max prediction variance {rep.max_pred_var:.6g}")


def cmd_holdout(args, cfg):
    out = _out_dir(args)
    tag = _family_tag(cfg)
    ds = load_dataset(cfg)
    res, fitted, (tr, ho) = _holdout_eval(tag, cfg, ds)
    emit_report({"actual": ds.targets[ho], "predicted": fitted.predict(ds.features[ho]),
                 "margin": res.margin}, "margin", out)
    _dump_json(_artifact(out, "holdout.json"),
               {"family": tag, "margin": res.margin, "fraction_within": res.fraction,
                "worst_rel_error": res.worst, "holdout_idx": ho})
    print(f"{tag}: {res.fraction:.1%} of holdout points within +/-{res.margin:.0%}")


def _holdout_eval(tag, cfg, ds):
    (tr, ho), = partition(len(ds), Holdout(float(cfg["holdout.fraction"]), cfg["seed"]))
    fitted = build_family(tag, cfg).fit(ds.features[tr], ds.targets[tr], cfg["seed"])
    res = holdout_margin(ds.targets[ho], fitted.predict(ds.features[ho]), float(cfg["holdout.margin"]))
    return res, fitted, (tr, ho)


def cmd_compare(args, cfg):
    out = _out_dir(args)
    ds = load_dataset(cfg)
    tags = [t.strip() for t in str(cfg.get("compare.families", "gp,svr,nn,pinn,physics")).split(",") if t.strip()]
    rows = []
    for tag in tags:
        rep = cross_validate(build_family(tag, cfg), ds, k=int(cfg["cv.k"]), seed=cfg["seed"], jobs=args.jobs)
        res, fitted, (_, ho) = _holdout_eval(tag, cfg, ds)
        mape, mse = error_metrics(ds.targets[ho], fitted.predict(ds.features[ho]))
        rows.append({"family": tag, "cv_mape": rep.mean_mape, "holdout_mape": mape,
                     "holdout_mse": mse, "within_margin": res.fraction, "epochs": fitted.epochs})
        print(f"{tag:10s} CV MAPE {rep.mean_mape:.6g}  holdout MAPE {mape:.6g}  within margin {res.fraction:.1%}")
    emit_report({"rows": rows}, "benchmark", out)


def cmd_report(args, cfg):
    out = _out_dir(args)
    try:
        with open(args.bundle, encoding="utf-8") as fh:
            bundle = json.load(fh)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read bundle {args.bundle}: {exc}") from exc
    for p in emit_report(bundle, args.kind, out, args.stem):
        print(p)


COMMANDS = {
    "gen-data": cmd_gen_data,
    "stats": cmd_stats,
    "physics-eval": cmd_physics_eval,
    "fit": cmd_fit,
    "tune": cmd_tune,
    "cv": cmd_cv,
    "mc": cmd_mc,
    "holdout": cmd_holdout,
    "compare": cmd_compare,
    "report": cmd_report,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key=value or JSON config file")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    common.add_argument("--seed", type=int, help="master seed (default 0)")
    common.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./nusurrogate-out)")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for folds/runs")
    common.add_argument("--data", dest="data_path", help="dataset CSV (otherwise synthesized)")
    common.add_argument("--family", choices=FAMILY_TAGS)
    common.add_argument("--n", type=int, help="synthetic dataset size")
    common.add_argument("--noise", type=float, help="synthetic relative noise level")
    common.add_argument("--fluid", choices=("na", "water"), help="synthetic fluid")

    p = argparse.ArgumentParser(prog="nusurrogate", description="Nusselt-number surrogate toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", parents=[common], help="write a synthetic dataset CSV")
    g.add_argument("--name", default="data.csv", help="file name inside --out")

    s = sub.add_parser("stats", parents=[common], help="summary statistics, KDE curves, Mann-Whitney")
    s.add_argument("--other", help="second dataset CSV for the Mann-Whitney comparison")

    ph = sub.add_parser("physics-eval", parents=[common], help="evaluate the correlation")
    ph.add_argument("--alpha", type=float, required=True)
    ph.add_argument("--l-over-d", type=float, required=True)
    ph.add_argument("--pe", type=float, required=True)

    sub.add_parser("fit", parents=[common], help="train one family and save the model")
    t = sub.add_parser("tune", parents=[common], help="hyperparameter search")
    t.add_argument("--optimizer", choices=("rs", "grid", "ga", "bo"))
    t.add_argument("--budget", type=int)
    t.add_argument("--k", type=int, help="CV folds per trial")
    t.add_argument("--record-timing", action="store_true",
                   help="include wall times in the trial log (breaks byte-identity)")
    c = sub.add_parser("cv", parents=[common], help="k-fold cross-validation")
    c.add_argument("--k", type=int)
    m = sub.add_parser("mc", parents=[common], help="Monte-Carlo holdout runs")
    m.add_argument("--runs", type=int)
    m.add_argument("--holdout", type=float)
    h = sub.add_parser("holdout", parents=[common], help="holdout margin analysis")
    h.add_argument("--holdout", type=float)
    h.add_argument("--margin", type=float)
    cp = sub.add_parser("compare", parents=[common], help="benchmark several families")
    cp.add_argument("--families", help="comma-separated family tags")
    cp.add_argument("--k", type=int)
    r = sub.add_parser("report", parents=[common], help="render a results bundle")
    r.add_argument("--kind", choices=KINDS, required=True)
    r.add_argument("--bundle", required=True, help="JSON bundle")
    r.add_argument("--stem", help="output file stem (default: the kind)")
    return p


_FLAG_KEYS = {
    "data_path": "data.path", "family": "family", "n": "data.n", "noise": "data.noise",
    "fluid": "data.fluid", "optimizer": "tune.optimizer", "budget": "tune.budget", "k": "cv.k",
    "runs": "mc.runs", "holdout": "holdout.fraction", "margin": "holdout.margin",
    "families": "compare.families",
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    args._overrides = {key: getattr(args, attr, None) for attr, key in _FLAG_KEYS.items()}
    try:
        cfg = resolve_config(args)
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        COMMANDS[args.command](args, cfg)
    except (ConfigError, DataError, CliError) as exc:
        code = getattr(exc, "code", None) or _snake(type(exc).__name__)
        print(f"error: {args.command}.{code}: {' '.join(str(exc).split())}", file=sys.stderr)
        return 2
    except (ValueError, OSError, RuntimeError, np.linalg.LinAlgError) as exc:
        print(f"error: {args.command}.{_snake(type(exc).__name__)}: {' '.join(str(exc).split())}",
              file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
