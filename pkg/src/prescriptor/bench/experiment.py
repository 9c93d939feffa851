"""Learning-curve experiments over the two benchmark problems.

For each training-set size and replication, a fresh training set is drawn,
each method fits its weight models on it, and the resulting policy is priced
on one fixed out-of-sample test set. Method names combine a weight family
(saa, knn, rf, tree) with an optional ``-static`` suffix that freezes the
stage-0 covariate's weights for the whole horizon. The inventory problem is
executed by rolling re-solve; lot sizing runs every method through the
order-up-to approximate DP, where the shared fit isolates the comparison to
the weight functions themselves.

Output is one row per (N, replication, method) plus a plot-ready aggregate
with a normal-theory 95% half-width over replications. Wall-clock columns
are zeroed unless timings are requested, keeping reruns byte-identical.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass

import numpy as np

from ..errors import InputError
from ..seeding import Stream, substream
from ..weights import WeightSpec, fit_stage_models
from .basestock import execute_basestock, fit_basestock
from .generators import GeneratorConfig, generate_test, generate_training
from .instances import (InventoryParams, LotSizingParams,
                        build_inventory_instance, build_lotsizing_instance)
from .policy import PolicyConfig, build_continuation_tables, run_policy

__all__ = [
    "ExperimentRow", "AggregateRow", "ExperimentResult", "experiment_curve",
    "write_rows_csv", "write_aggregate_csv",
]

_FAMILIES = {
    "saa": lambda seed: WeightSpec(method="saa"),
    "knn": lambda seed: WeightSpec(method="knn"),
    "rf": lambda seed: WeightSpec(method="forest", seed=seed),
    "tree": lambda seed: WeightSpec(method="tree", seed=seed),
}


@dataclass(frozen=True)
class ExperimentRow:
    problem: str
    n: int
    method: str
    replication: int
    mean_cost: float
    std_cost: float
    wall_ms: float


@dataclass(frozen=True)
class AggregateRow:
    problem: str
    n: int
    method: str
    mean_of_means: float
    ci95: float


@dataclass
class ExperimentResult:
    rows: list

    def aggregate(self) -> list:
        """One row per (problem, N, method): mean over replications and a
        95% normal half-width (0 when there is a single replication)."""
        order = []
        groups = {}
        for row in self.rows:
            key = (row.problem, row.n, row.method)
            if key not in groups:
                groups[key] = []
                order.append(key)
            groups[key].append(row.mean_cost)
        out = []
        for key in order:
            means = np.array(groups[key])
            half = 0.0
            if means.size > 1:
                half = 1.96 * float(means.std(ddof=1)) / math.sqrt(means.size)
            out.append(AggregateRow(problem=key[0], n=key[1], method=key[2],
                                    mean_of_means=float(means.mean()), ci95=half))
        return out

    def method_mean(self, method: str, n: int) -> float:
        """Mean over replications of the method's mean cost at size n."""
        means = [r.mean_cost for r in self.rows
                 if r.method == method and r.n == n]
        if not means:
            raise InputError(f"no rows for method {method!r} at N={n}")
        return float(np.mean(means))

    def replication_means(self, method: str, n: int) -> np.ndarray:
        return np.array(sorted((r.replication, r.mean_cost) for r in self.rows
                               if r.method == method and r.n == n))[:, 1]


def _parse_method(name: str):
    base, _, suffix = name.partition("-")
    if base not in _FAMILIES or suffix not in ("", "static"):
        raise InputError(
            f"unknown method {name!r}; expected one of saa, knn, rf, tree, "
            "optionally suffixed -static")
    return base, suffix == "static"


def experiment_curve(problem: str, n_grid, methods, replications: int,
                     seed: int, *, n_test: int = 1000, horizon: int = 11,
                     timings: bool = False,
                     config: PolicyConfig | None = None,
                     grid_points: int = 21,
                     sim_paths: int = 24) -> ExperimentResult:
    """Price every (N, replication, method) combination out of sample.

    The test set is drawn once per seed from streams disjoint from all
    training draws. Per-problem execution: ``inventory`` re-solves with the
    continuation tables shared across methods of a replication;
    ``lotsizing`` shares one basestock fit per replication and lets the
    methods differ in how they aggregate its targets.
    """
    if problem not in ("inventory", "lotsizing"):
        raise InputError(f"unknown problem {problem!r}")
    if replications < 1:
        raise InputError("need at least one replication")
    method_list = [(_parse_method(m), m) for m in methods]
    if not method_list:
        raise InputError("need at least one method")
    cap = 200.0 if problem == "lotsizing" else math.inf
    if problem == "lotsizing":
        params = LotSizingParams(price_seed=seed).resolved()
    else:
        params = InventoryParams()

    test = generate_test(GeneratorConfig(horizon=horizon, n_samples=n_test,
                                         demand_cap=cap, seed=seed))
    rows = []
    for n in n_grid:
        gen = GeneratorConfig(horizon=horizon, n_samples=int(n),
                              demand_cap=cap, seed=seed)
        for rep in range(replications):
            training = generate_training(gen, rep)
            fit_seed = substream(seed, Stream.REPLICATION, rep, int(n))
            rf_seed = int(fit_seed.integers(2 ** 62))
            bs_seed = int(fit_seed.integers(2 ** 62))
            if problem == "inventory":
                instance = build_inventory_instance(params, training)
                tables = build_continuation_tables(instance, config)
                shared = dict(instance=instance, tables=tables)
            else:
                policy = fit_basestock(training, None, params,
                                       grid_points=grid_points,
                                       sim_paths=sim_paths, seed=bs_seed)
                shared = dict(policy=policy)
            for (family, static), label in method_list:
                start = time.perf_counter()
                models = fit_stage_models(_FAMILIES[family](rf_seed), training)
                if problem == "inventory":
                    run = run_policy(shared["instance"], None, test,
                                     "static" if static else "resolve",
                                     weight_models=models,
                                     tables=shared["tables"], config=config)
                else:
                    run = execute_basestock(shared["policy"], params, models,
                                            test, dynamic=not static)
                wall = (time.perf_counter() - start) * 1000.0
                rows.append(ExperimentRow(
                    problem=problem, n=int(n), method=label, replication=rep,
                    mean_cost=run.mean_cost, std_cost=run.std_cost,
                    wall_ms=wall if timings else 0.0))
    return ExperimentResult(rows=rows)


def _write_csv(path: str, metadata: dict, header: list, data_rows) -> None:
    with open(path, "w", newline="") as fh:
        for key, value in metadata.items():
            fh.write(f"# {key}: {value}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in data_rows:
            writer.writerow(row)


def _fmt(value: float) -> str:
    return repr(float(value))


def write_rows_csv(result: ExperimentResult, path: str,
                   metadata: dict | None = None) -> None:
    _write_csv(path, metadata or {},
               ["problem", "N", "method", "replication",
                "mean_cost", "std_cost", "wall_ms"],
               ([r.problem, r.n, r.method, r.replication, _fmt(r.mean_cost),
                 _fmt(r.std_cost), _fmt(r.wall_ms)] for r in result.rows))


def write_aggregate_csv(result: ExperimentResult, path: str,
                        metadata: dict | None = None) -> None:
    _write_csv(path, metadata or {},
               ["problem", "N", "method", "mean_of_means", "ci95"],
               ([a.problem, a.n, a.method, _fmt(a.mean_of_means),
                 _fmt(a.ci95)] for a in result.aggregate()))
