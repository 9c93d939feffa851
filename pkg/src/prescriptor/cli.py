"""Command line entry point.

Subcommands: ``generate`` draws synthetic training data, ``solve`` runs the
exact or decomposition solver on a stored instance, ``evaluate`` prices a
policy on out-of-sample paths, ``benchmark`` reproduces the learning-curve
experiments, and ``cuts-export`` saves a solver run's cut pools. Every
subcommand is a pure function of its flags and input files: outputs carry a
metadata header (tool version, seed, configuration hash) and no timestamps,
so identical invocations produce identical bytes. An optional JSON config
file supplies flag defaults; explicit flags win. ``--threads`` is accepted
everywhere for script compatibility; the implementation is single-threaded
and results never depend on it.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bench import (GeneratorConfig, InventoryParams, LotSizingParams,
                    build_continuation_tables, experiment_curve, fit_basestock,
                    generate_test, generate_training, run_policy,
                    write_aggregate_csv, write_rows_csv)
from .errors import PrescriptorError, InputError
from .exact import solve_extensive
from .model import instance_from_json
from .sddp import SddpConfig, export_cuts, solve_sddp
from .training import read_training_csv
from .weights import WeightSpec, fit_stage_models

__all__ = ["main"]


_HASH_SKIP = {"func", "out", "out_dir", "config", "threads", "timings"}


def _config_hash(args: argparse.Namespace) -> str:
    """Fingerprint of the flags that determine output content.

    Destination paths, the config-file path, thread counts, and timing
    toggles are excluded so identical data always carries the same hash.
    """
    doc = {k: v for k, v in sorted(vars(args).items()) if k not in _HASH_SKIP}
    blob = json.dumps(doc, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def _metadata(args: argparse.Namespace) -> dict:
    return {"version": __version__, "seed": getattr(args, "seed", 0),
            "config_hash": _config_hash(args)}


def _weight_spec(args: argparse.Namespace):
    """Weight spec from flags, or None to keep the instance's own."""
    if args.weights is None:
        return None
    kwargs = {"method": {"rf": "forest"}.get(args.weights, args.weights)}
    for flag, field in (("k", "k"), ("b_trees", "b_trees"), ("lam", "lam"),
                        ("pi", "pi"), ("subsample", "subsample"),
                        ("weight_seed", "seed")):
        value = getattr(args, flag, None)
        if value is not None:
            kwargs[field] = value
    return WeightSpec(**kwargs)


def _add_weight_flags(sp) -> None:
    sp.add_argument("--weights", choices=["saa", "knn", "tree", "forest", "rf"],
                    default=None, help="override the instance's weight method")
    sp.add_argument("--k", type=int, default=None)
    sp.add_argument("--b-trees", type=int, default=None, dest="b_trees")
    sp.add_argument("--lam", type=float, default=None)
    sp.add_argument("--pi", type=float, default=None)
    sp.add_argument("--subsample", type=int, default=None)
    sp.add_argument("--weight-seed", type=int, default=None, dest="weight_seed")


def _add_sddp_flags(sp) -> None:
    sp.add_argument("--m-paths", type=int, default=20, dest="m_paths")
    sp.add_argument("--alpha", type=float, default=0.05)
    sp.add_argument("--epsilon", type=float, default=1e-4)
    sp.add_argument("--max-iter", type=int, default=100, dest="max_iter")
    sp.add_argument("--cut-family", default="auto", dest="cut_family")


def _add_common(sp) -> None:
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--threads", type=int, default=None,
                    help="worker cap; accepted for compatibility, results "
                         "do not depend on it")
    sp.add_argument("--timings", action="store_true",
                    help="record wall clock columns (breaks byte-identical reruns)")


def _sddp_config(args: argparse.Namespace) -> SddpConfig:
    return SddpConfig(m_paths=args.m_paths, alpha=args.alpha,
                      epsilon=args.epsilon, max_iter=args.max_iter,
                      cut_family=args.cut_family, seed=args.seed,
                      timings=args.timings)


def _load_instance(path: str):
    try:
        return instance_from_json(path)
    except FileNotFoundError:
        raise InputError(f"instance file not found: {path}")


# ---------------------------------------------------------------------------
# subcommands


def cmd_generate(args: argparse.Namespace) -> int:
    cap = 200.0 if args.problem == "lotsizing" else math.inf
    config = GeneratorConfig(horizon=args.horizon, n_samples=args.n,
                             demand_cap=cap, seed=args.seed)
    training = generate_training(config, args.rep)
    meta = _metadata(args)
    meta.update({"problem": args.problem, "replication": args.rep})
    training.metadata = {**meta, **training.metadata}
    training.to_csv(args.out)
    side = {**meta, "n_samples": args.n, "horizon": args.horizon,
            "demand_cap": "inf" if math.isinf(cap) else cap}
    with open(_sidecar(args.out), "w") as fh:
        json.dump(side, fh, indent=1, sort_keys=True)
        fh.write("\n")
    print(f"wrote {args.out} ({args.n} paths, horizon {args.horizon}) "
          f"and {_sidecar(args.out)}")
    return 0


def _sidecar(path: str) -> str:
    stem = path[:-4] if path.endswith(".csv") else path
    return stem + ".meta.json"


def cmd_solve(args: argparse.Namespace) -> int:
    instance = _load_instance(args.instance)
    spec = _weight_spec(args)
    models = fit_stage_models(spec or instance.weight_spec, instance.training)
    report = _metadata(args)
    report["instance"] = args.instance
    report["solver"] = args.solver
    if args.solver == "exact":
        sol = solve_extensive(instance, weight_models=models)
        report.update({"objective": sol.objective,
                       "first_stage": sol.first_stage.tolist(),
                       "n_nodes": sol.tree.n_nodes})
    else:
        run = solve_sddp(instance, models, _sddp_config(args))
        report.update({
            "status": run.status, "lb": run.lb, "ub": run.ub,
            "ub_mean": run.ub_mean, "ub_std": run.ub_std,
            "iterations": run.iterations,
            "first_stage": run.first_stage.tolist(),
            "log": [{"iteration": r.iteration, "lb": r.lb, "ub_mean": r.ub_mean,
                     "ub_std": r.ub_std, "ub": r.ub, "wall_ms": r.wall_ms,
                     "cuts_added": r.cuts_added} for r in run.log],
        })
    with open(args.out, "w") as fh:
        json.dump(report, fh, indent=1)
        fh.write("\n")
    headline = report.get("objective", report.get("lb"))
    print(f"{args.solver}: {headline!r} -> {args.out}")
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    instance = _load_instance(args.instance)
    spec = _weight_spec(args)
    models = fit_stage_models(spec or instance.weight_spec, instance.training)
    if args.test is not None:
        test = read_training_csv(args.test)
    else:
        meta = instance.training.metadata
        cap = float(meta.get("demand_cap", math.inf))
        config = GeneratorConfig(horizon=instance.horizon, n_samples=args.n_test,
                                 demand_cap=cap, seed=args.seed)
        test = generate_test(config)
    kwargs = {}
    if args.mode == "basestock":
        if args.problem is None:
            raise InputError("basestock mode needs --problem to pick cost "
                             "parameters for the order-up-to rule")
        params = (LotSizingParams(price_seed=args.seed).resolved()
                  if args.problem == "lotsizing" else InventoryParams())
        kwargs["params"] = params
        kwargs["basestock"] = fit_basestock(instance.training, models, params,
                                            seed=args.seed)
    elif instance.horizon >= 1:
        kwargs["tables"] = build_continuation_tables(instance)
    run_set = run_policy(instance, None, test, args.mode,
                         weight_models=models, **kwargs)
    meta = _metadata(args)
    meta.update({"mode": args.mode,
                 "mean_cost": repr(run_set.mean_cost),
                 "std_cost": repr(run_set.std_cost)})
    with open(args.out, "w", newline="") as fh:
        for key, value in meta.items():
            fh.write(f"# {key}: {value}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["path", "total_cost"])
        for run in run_set.runs:
            writer.writerow([run.path, repr(run.total_cost)])
    print(f"{args.mode}: mean cost {run_set.mean_cost!r} over "
          f"{len(run_set.runs)} paths -> {args.out}")
    return 0


def cmd_benchmark(args: argparse.Namespace) -> int:
    replications = args.replications
    if replications is None:
        replications = 100 if args.full else 25
    n_grid = [int(v) for v in args.n_grid.split(",") if v]
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    result = experiment_curve(args.problem, n_grid, methods, replications,
                              args.seed, n_test=args.n_test,
                              horizon=args.horizon, timings=args.timings)
    meta = _metadata(args)
    meta.update({"problem": args.problem, "replications": replications})
    Path(args.out_dir).mkdir(parents=True, exist_ok=True)
    curve = f"{args.out_dir}/{args.problem}_curve.csv"
    agg = f"{args.out_dir}/{args.problem}_aggregate.csv"
    write_rows_csv(result, curve, meta)
    write_aggregate_csv(result, agg, meta)
    for row in result.aggregate():
        print(f"{row.problem} N={row.n} {row.method}: "
              f"{row.mean_of_means:.2f} +- {row.ci95:.2f}")
    print(f"wrote {curve} and {agg}")
    return 0


def cmd_cuts_export(args: argparse.Namespace) -> int:
    instance = _load_instance(args.instance)
    spec = _weight_spec(args)
    models = fit_stage_models(spec or instance.weight_spec, instance.training)
    run = solve_sddp(instance, models, _sddp_config(args))
    export_cuts(run.pools, args.out)
    print(f"{run.status}: lb {run.lb!r}, {run.pools.n_cuts()} cuts -> {args.out}")
    return 0


# ---------------------------------------------------------------------------
# parser


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="prescriptor",
        description="Data-driven multistage stochastic optimization.")
    parser.add_argument("--config", default=None,
                        help="JSON file of flag defaults; explicit flags win")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("generate", help="draw synthetic training data")
    sp.add_argument("--problem", choices=["inventory", "lotsizing"],
                    default="inventory")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--horizon", type=int, default=11)
    sp.add_argument("--rep", type=int, default=0)
    sp.add_argument("--out", default="training.csv")
    _add_common(sp)
    sp.set_defaults(func=cmd_generate)

    sp = sub.add_parser("solve", help="solve a stored instance")
    sp.add_argument("--instance", required=True)
    sp.add_argument("--solver", choices=["exact", "sddp"], default="sddp")
    sp.add_argument("--out", default="solution.json")
    _add_weight_flags(sp)
    _add_sddp_flags(sp)
    _add_common(sp)
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("evaluate", help="price a policy out of sample")
    sp.add_argument("--instance", required=True)
    sp.add_argument("--mode", choices=["resolve", "static", "basestock"],
                    default="resolve")
    sp.add_argument("--test", default=None,
                    help="test paths CSV; default generates them")
    sp.add_argument("--n-test", type=int, default=1000, dest="n_test")
    sp.add_argument("--problem", choices=["inventory", "lotsizing"],
                    default=None)
    sp.add_argument("--out", default="evaluation.csv")
    _add_weight_flags(sp)
    _add_common(sp)
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("benchmark", help="reproduce the learning curves")
    sp.add_argument("--problem", choices=["inventory", "lotsizing"],
                    default="inventory")
    sp.add_argument("--n-grid", default="25,50,100,200", dest="n_grid")
    sp.add_argument("--methods", default="saa,knn,rf")
    sp.add_argument("--replications", type=int, default=None)
    sp.add_argument("--full", action="store_true",
                    help="paper-scale replication count (100)")
    sp.add_argument("--n-test", type=int, default=1000, dest="n_test")
    sp.add_argument("--horizon", type=int, default=11)
    sp.add_argument("--out-dir", default=".", dest="out_dir")
    _add_common(sp)
    sp.set_defaults(func=cmd_benchmark)

    sp = sub.add_parser("cuts-export", help="run the decomposition and save cuts")
    sp.add_argument("--instance", required=True)
    sp.add_argument("--out", default="cuts.json")
    _add_weight_flags(sp)
    _add_sddp_flags(sp)
    _add_common(sp)
    sp.set_defaults(func=cmd_cuts_export)
    return parser


def _apply_file_defaults(parser: argparse.ArgumentParser, argv: list) -> None:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", default=None)
    known, _ = pre.parse_known_args(argv)
    if known.config is None:
        return
    try:
        with open(known.config) as fh:
            file_cfg = json.load(fh)
    except FileNotFoundError:
        raise InputError(f"config file not found: {known.config}")
    except json.JSONDecodeError as exc:
        raise InputError(f"config file {known.config} is not valid JSON: {exc}")
    if not isinstance(file_cfg, dict):
        raise InputError("config file must hold a JSON object of flag defaults")
    for action in parser._subparsers._group_actions[0].choices.values():
        dests = {a.dest for a in action._actions}
        hits = {k: v for k, v in file_cfg.items() if k in dests}
        action.set_defaults(**hits)
        for sub_action in action._actions:
            if sub_action.dest in hits and getattr(sub_action, "required", False):
                sub_action.required = False


def main(argv: list | None = None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser = _build_parser()
    try:
        _apply_file_defaults(parser, argv)
        args = parser.parse_args(argv)
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        for finding in getattr(exc, "findings", None) or []:
            print(f"  - {finding}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except PrescriptorError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
