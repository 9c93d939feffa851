"""Sampling-based decomposition solver for weighted multistage problems.

For each stage t >= 1 and each training-sample index whose covariate can
condition the stage-t weights, the solver maintains an outer approximation

    psi_t(s, key) = max(L_t, max over cuts of beta + pi @ s)

of the stage value function. Each iteration runs a forward pass (sample M
training-index paths from the stage weight distributions, solve the stages
greedily against the current approximations, record visited states and
realized costs, which give a statistical upper bound), then a backward pass
(at every visited state and every positive-weight sample, solve the next
stage against the updated approximation and fold values and duals into one
weighted aggregated cut per visited state), then re-solves stage 0 for a
deterministic lower bound. Pools only grow, so the lower bound never
decreases.

Cut families: "benders" uses LP-relaxation duals and is valid for any state;
binary state interfaces additionally admit "integer" optimality cuts (tight
at the visited binary state) and "lagrangian" cuts from dualizing the state
copy, which dominate the relaxation bound. Families can be combined with a
comma ("lagrangian,benders"); "auto" picks benders on continuous interfaces
and lagrangian on binary ones. Continuous state components can be encoded
into binaries at fixed precision with :func:`binary_expand`.
"""

from __future__ import annotations

import copy
import json
import time
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .errors import InfeasibleError, InputError, SolverError, UnboundedError
from .linopt import (LinearProgram, combine_blocks, fix_state_and_solve,
                     solve_lp, solve_mip, stage_lp)
from .model import ProblemInstance, StageTemplate, validate
from .seeding import Stream, substream

__all__ = [
    "Cut", "CutPool", "SddpConfig", "SddpRun", "ForwardResult",
    "default_lower_bounds", "state_is_binary",
    "forward_pass", "backward_pass", "statistical_upper_bound",
    "benders_cut", "integer_optimality_cut", "lagrangian_cut",
    "solve_sddp", "write_run_log", "export_cuts", "import_cuts",
    "binary_expand",
]


@dataclass
class Cut:
    """Affine lower bound theta >= beta + pi @ s on a stage value function.

    ``origin`` records (iteration, stage, representative forward path);
    ``capped`` marks a dual search that hit its iteration cap (the cut is
    still valid, just possibly not the best achievable).
    """

    beta: float
    pi: np.ndarray
    family: str = "benders"
    origin: tuple = (0, 0, 0)
    capped: bool = False

    def __post_init__(self):
        self.pi = np.asarray(self.pi, dtype=float)
        self.beta = float(self.beta)

    def value(self, s: np.ndarray) -> float:
        return self.beta + float(self.pi @ np.asarray(s, dtype=float))


def default_lower_bounds(instance: ProblemInstance) -> np.ndarray:
    """Per-stage initial lower bounds L_t, t = 1..T.

    Returns zeros when every stage's cost is provably nonnegative (each cost
    coefficient >= 0, and each decision with a strictly positive coefficient
    is bounded below by 0); otherwise raises, demanding explicit bounds.
    """
    T = len(instance.stages) - 1
    for t in range(1, T + 1):
        st = instance.stages[t]
        bad = (st.cost < 0) | ((st.cost > 0) & (st.lb < 0))
        if bad.any():
            raise InputError(
                f"cannot default the stage-{t} lower bound to 0: decisions "
                f"{np.flatnonzero(bad).tolist()} can contribute negative cost; "
                "supply explicit lower_bounds")
    return np.zeros(T)


@dataclass
class CutPool:
    """Cuts per (stage, conditioning key) plus the initial lower bounds.

    The key for stage t is the training-sample index whose covariate at
    stage t-1 conditions the weights; the root covariate gets key -1. The
    approximation in force is ``max(L_t, best cut value)`` and pools only
    grow during a run.
    """

    state_dims: list[int]                      # dim of the stage-t state, t=1..T
    lower_bounds: np.ndarray                   # L_t, t=1..T
    entries: list[dict[int, list[Cut]]] = None  # type: ignore[assignment]

    def __post_init__(self):
        self.lower_bounds = np.asarray(self.lower_bounds, dtype=float)
        if self.lower_bounds.size != len(self.state_dims):
            raise InputError("one lower bound per stage 1..T required")
        if self.entries is None:
            self.entries = [{} for _ in self.state_dims]

    @classmethod
    def for_instance(cls, instance: ProblemInstance,
                     lower_bounds=None) -> "CutPool":
        T = len(instance.stages) - 1
        dims = [instance.stages[t].n_state for t in range(1, T + 1)]
        if lower_bounds is None:
            lb = default_lower_bounds(instance)
        else:
            lb = np.asarray(lower_bounds, dtype=float)
        return cls(state_dims=dims, lower_bounds=lb)

    @property
    def horizon(self) -> int:
        return len(self.state_dims)

    def get(self, t: int, key: int) -> list[Cut]:
        return self.entries[t - 1].get(key, [])

    def add(self, t: int, key: int, cut: Cut) -> None:
        if cut.pi.size != self.state_dims[t - 1]:
            raise InputError(f"cut slope has {cut.pi.size} entries, stage {t} "
                             f"state has {self.state_dims[t - 1]}")
        self.entries[t - 1].setdefault(int(key), []).append(cut)

    def theta_lb(self, t: int) -> float:
        return float(self.lower_bounds[t - 1])

    def psi(self, t: int, key: int, s: np.ndarray) -> float:
        """Current approximation value max(L_t, best cut) at state s."""
        best = self.theta_lb(t)
        for cut in self.get(t, key):
            best = max(best, cut.value(s))
        return best

    def n_cuts(self) -> int:
        return sum(len(cuts) for stage in self.entries for cuts in stage.values())


def export_cuts(pool: CutPool, path: str) -> None:
    doc = {
        "horizon": pool.horizon,
        "state_dims": list(pool.state_dims),
        "lower_bounds": pool.lower_bounds.tolist(),
        "stages": [
            {"t": t + 1,
             "entries": [
                 {"key": key,
                  "cuts": [{"beta": c.beta, "pi": c.pi.tolist(), "family": c.family,
                            "origin": list(c.origin), "capped": c.capped}
                           for c in cuts]}
                 for key, cuts in sorted(stage.items())]}
            for t, stage in enumerate(pool.entries)],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def import_cuts(path: str) -> CutPool:
    with open(path) as fh:
        doc = json.load(fh)
    pool = CutPool(state_dims=list(doc["state_dims"]),
                   lower_bounds=np.asarray(doc["lower_bounds"], dtype=float))
    for stage_doc in doc["stages"]:
        t = stage_doc["t"]
        for entry in stage_doc["entries"]:
            for cd in entry["cuts"]:
                pool.add(t, entry["key"],
                         Cut(beta=cd["beta"], pi=np.asarray(cd["pi"], dtype=float),
                             family=cd["family"], origin=tuple(cd["origin"]),
                             capped=cd.get("capped", False)))
    return pool


# ---------------------------------------------------------------------------
# weight lookups


class _WeightTables:
    """Lazy per-stage weight rows at the covariates a run can visit: the
    initial covariate (stage 1, key -1) and every training covariate."""

    def __init__(self, instance: ProblemInstance, weight_models: list):
        self.models = weight_models
        self.training = instance.training
        self.x0 = instance.initial_covariate
        self._root: np.ndarray | None = None
        self._mats: dict[int, np.ndarray] = {}

    def row(self, t: int, key: int) -> np.ndarray:
        if t == 1:
            if key != -1:
                raise InputError("stage 1 weights condition on the root covariate only")
            if self._root is None:
                self._root = self.models[0].weights(self.x0)
            return self._root
        if t not in self._mats:
            self._mats[t] = self.models[t - 1].weights_batch(self.training.x(t - 1))
        return self._mats[t][key]


def state_is_binary(template: StageTemplate) -> bool:
    """True when the state the template produces is guaranteed binary: every
    transition row selects (coefficient 1) at most one binary decision."""
    if template.F is None:
        return False
    for row in template.F:
        nz = np.flatnonzero(row)
        if nz.size == 0:
            continue
        if nz.size > 1 or row[nz[0]] != 1.0 or not template.integer[nz[0]]:
            return False
    return True


def _parse_families(spec: str) -> list[str]:
    families = [f.strip() for f in spec.split(",") if f.strip()]
    for f in families:
        if f not in ("auto", "benders", "integer", "lagrangian"):
            raise InputError(f"unknown cut family {f!r}")
    if not families:
        raise InputError("empty cut family")
    if "auto" in families and len(families) > 1:
        raise InputError("'auto' cannot be combined with other families")
    return families


def _families_for_interface(families: list[str], producing: StageTemplate) -> list[str]:
    binary = state_is_binary(producing)
    if families == ["auto"]:
        return ["lagrangian"] if binary else ["benders"]
    for f in families:
        if f in ("integer", "lagrangian") and not binary:
            raise InputError(
                f"cut family {f!r} needs a binary state interface after stage "
                f"{producing.t}; apply binary_expand or use benders")
    return families


# ---------------------------------------------------------------------------
# statistical upper bound


def statistical_upper_bound(costs, alpha: float) -> tuple[float, float, float]:
    """Mean, sample standard deviation, and the one-sided normal upper
    confidence limit mean + z_{alpha/2} * std / sqrt(M) of path costs."""
    costs = np.asarray(costs, dtype=float)
    if costs.size < 2:
        raise InputError("need at least 2 path costs for an upper bound")
    if not 0.0 < alpha <= 1.0:
        raise InputError(f"alpha must be in (0, 1], got {alpha}")
    mu = float(costs.mean())
    sigma = float(costs.std(ddof=1))
    z = float(ndtri(1.0 - alpha / 2.0))
    return mu, sigma, mu + z * sigma / np.sqrt(costs.size)


# ---------------------------------------------------------------------------
# stacked stage solves


def _locate_failure(template, blocks, pools, t):
    """Re-solve blocks one by one to name the offender of a stacked failure."""
    for state, y, cuts, theta_lb, label in blocks:
        sol = fix_state_and_solve(template, state, y, cuts, theta_lb)
        if sol.status == "infeasible":
            raise InfeasibleError(stage=t, scenario=label)
        if sol.status == "unbounded":
            raise UnboundedError(f"stage {t} subproblem unbounded (scenario {label})")
    raise SolverError(f"stacked stage-{t} solve failed but every block solves alone")


# ---------------------------------------------------------------------------
# forward pass


@dataclass
class ForwardResult:
    """Everything one forward pass visited: stage-0 decision and objective,
    sampled training-index paths, incoming states per stage, path costs."""

    z0: np.ndarray
    value0: float               # stage-0 objective = lower bound before new cuts
    indices: np.ndarray         # (M, T) sampled training indices, stage t at col t-1
    states: list[np.ndarray]    # per t=1..T an (M, n_state_t) array of incoming states
    costs: np.ndarray           # (M,) realized path costs


def _sample_index_paths(tables: _WeightTables, n: int, T: int, M: int,
                        rng: np.random.Generator) -> np.ndarray:
    indices = np.zeros((M, T), dtype=int)
    for m in range(M):
        key = -1
        for t in range(1, T + 1):
            w = tables.row(t, key)
            cdf = np.cumsum(w)
            key = int(min(np.searchsorted(cdf, rng.random(), side="right"), n - 1))
            indices[m, t - 1] = key
    return indices


def forward_pass(instance: ProblemInstance, weight_models: list, pools: CutPool,
                 m_paths: int, seed: int, iteration: int = 1,
                 tables: _WeightTables | None = None) -> ForwardResult:
    """Sample M index paths and solve the stages greedily against the pools.

    Stage-t scenarios are drawn from the stage weight distribution
    conditioned on the previous index (the root covariate at stage 1), so a
    path is a tuple of training indices. States recorded here are the trial
    points the backward pass cuts at; summed stage costs are the upper-bound
    sample.
    """
    if tables is None:
        tables = _WeightTables(instance, weight_models)
    T = instance.horizon
    stages = instance.stages
    training = instance.training
    rng = substream(seed, Stream.SDDP_FORWARD, iteration)

    cuts0 = pools.get(1, -1) if T else []
    theta0 = pools.theta_lb(1) if T else 0.0
    sol0 = fix_state_and_solve(stages[0], instance.initial_state, None, cuts0, theta0)
    if sol0.status == "infeasible":
        raise InfeasibleError(stage=0)
    if sol0.status == "unbounded":
        raise UnboundedError("stage 0 is unbounded below")
    cost0 = float(stages[0].cost @ sol0.z)
    if T == 0:
        return ForwardResult(z0=sol0.z, value0=float(sol0.value),
                             indices=np.zeros((m_paths, 0), dtype=int), states=[],
                             costs=np.full(m_paths, cost0))

    indices = _sample_index_paths(tables, training.n_samples, T, m_paths, rng)
    states: list[np.ndarray] = []
    costs = np.full(m_paths, cost0)
    current = np.tile(stages[0].F @ sol0.z, (m_paths, 1))
    for t in range(1, T + 1):
        states.append(current.copy())
        st = stages[t]
        theta_lb = pools.theta_lb(t + 1) if t < T else 0.0
        blocks = []
        for m in range(m_paths):
            i = int(indices[m, t - 1])
            cuts = pools.get(t + 1, i) if t < T else []
            blocks.append((current[m], training.y(t)[i], cuts, theta_lb, i))
        nxt = np.zeros((m_paths, st.F.shape[0])) if t < T else None
        if st.integer.any():
            for m, (state, y, cuts, lb, label) in enumerate(blocks):
                sol = fix_state_and_solve(st, state, y, cuts, lb)
                if sol.status == "infeasible":
                    raise InfeasibleError(stage=t, scenario=label)
                if sol.status == "unbounded":
                    raise UnboundedError(f"stage {t} subproblem unbounded")
                costs[m] += float(st.cost @ sol.z)
                if t < T:
                    nxt[m] = st.F @ sol.z
        else:
            lps = [stage_lp(st, state, y, cuts, lb, pin_state=False)
                   for state, y, cuts, lb, _ in blocks]
            combined, var_slices, _ = combine_blocks(lps)
            res = solve_lp(combined, _dump_tag="forward")
            if res.status != "optimal":
                _locate_failure(st, blocks, pools, t)
            p = st.n_dec
            for m, sl in enumerate(var_slices):
                z = res.x[sl][:p]
                costs[m] += float(st.cost @ z)
                if t < T:
                    nxt[m] = st.F @ z
        current = nxt
    return ForwardResult(z0=sol0.z, value0=float(sol0.value), indices=indices,
                         states=states, costs=costs)


# ---------------------------------------------------------------------------
# cut generation


def benders_cut(template: StageTemplate, trial_state: np.ndarray, y: np.ndarray,
                continuation_cuts=(), theta_lb: float = 0.0,
                origin: tuple = (0, 0, 0)) -> Cut:
    """Cut from the LP relaxation at a pinned trial state.

    The slope is the basic dual of the state-pinning rows and the intercept
    is chosen so the cut equals the relaxation optimum at the trial state;
    that also lower-bounds the mixed-binary value everywhere.
    """
    trial_state = np.asarray(trial_state, dtype=float)
    sol = fix_state_and_solve(template, trial_state, y, continuation_cuts, theta_lb)
    if sol.status == "infeasible":
        raise InfeasibleError(stage=template.t, scenario=origin)
    if sol.status == "unbounded":
        raise UnboundedError(f"stage {template.t} subproblem unbounded")
    pi = np.asarray(sol.state_duals, dtype=float)
    beta = float(sol.relax_value) - float(pi @ trial_state)
    return Cut(beta=beta, pi=pi, family="benders", origin=origin)


def _require_binary_state(trial_state: np.ndarray) -> np.ndarray:
    s = np.asarray(trial_state, dtype=float)
    if np.abs(s - np.round(s)).max(initial=0.0) > 1e-6:
        raise InputError(f"trial state {s.tolist()} is not binary")
    return np.round(s)


def integer_optimality_cut(template: StageTemplate, trial_state: np.ndarray,
                           y: np.ndarray, continuation_cuts=(),
                           L_t: float = 0.0, theta_lb: float = 0.0,
                           origin: tuple = (0, 0, 0)) -> Cut:
    """Cut tight at a binary trial state, from the exact subproblem optimum.

    With optimum P* at trial state s_j and global stage lower bound L_t, the
    cut is P* minus (P* - L_t) times the Hamming distance to s_j: exactly P*
    at s_j, and at most L_t at every other binary state, hence valid.
    """
    s = _require_binary_state(trial_state)
    sol = fix_state_and_solve(template, s, y, continuation_cuts, theta_lb)
    if sol.status == "infeasible":
        raise InfeasibleError(stage=template.t, scenario=origin)
    if sol.status == "unbounded":
        raise UnboundedError(f"stage {template.t} subproblem unbounded")
    P = float(sol.value)
    gap = P - float(L_t)
    pi = -gap * (1.0 - 2.0 * s)
    beta = P - gap * float(s.sum())
    return Cut(beta=beta, pi=pi, family="integer", origin=origin)


def _lagrangian_inner(template: StageTemplate, pi: np.ndarray, y: np.ndarray,
                      continuation_cuts, theta_lb: float):
    """min over (z, s in [0,1]^p) of stage cost - pi @ s; returns the optimum,
    the minimizing s, and the stage-cost part."""
    lp = stage_lp(template, np.zeros(template.n_state), y, continuation_cuts,
                  theta_lb, pin_state=True)
    lp.A_eq = None
    lp.b_eq = None
    p = template.n_dec
    ns = template.n_state
    lp.lb[p:p + ns] = 0.0
    lp.ub[p:p + ns] = 1.0
    lp.c[p:p + ns] = -pi
    res = solve_mip(lp) if lp.integer.any() else solve_lp(lp, _dump_tag="lagr")
    if res.status == "infeasible":
        raise InfeasibleError(stage=template.t)
    if res.status == "unbounded":
        raise UnboundedError(f"stage {template.t} relaxed subproblem unbounded")
    s_min = res.x[p:p + ns].copy()
    return float(res.objective), s_min


def lagrangian_cut(template: StageTemplate, trial_state: np.ndarray, y: np.ndarray,
                   continuation_cuts=(), theta_lb: float = 0.0,
                   origin: tuple = (0, 0, 0), max_inner: int = 50,
                   tol: float = 1e-7) -> Cut:
    """Cut from dualizing the state copy at a binary trial state.

    Maximizes D(pi) = inner(pi) + pi @ s_j over a box by cutting planes, where
    inner(pi) relaxes the state to [0,1]^p and prices it at -pi; every
    iterate yields a valid cut, so hitting the inner-solve cap degrades bound
    quality only (flagged via ``capped``). The first evaluation is pi = 0,
    whose cut is the plain stage optimum with a free state.
    """
    s_j = _require_binary_state(trial_state)
    ns = template.n_state
    box = 10.0 * max(1.0, float(np.abs(template.cost).max(initial=0.0)))
    # evaluated points: (dual value at pi, inner optimum L(pi), pi, minimizing s)
    points = []

    def evaluate(pi):
        val, s_min = _lagrangian_inner(template, pi, y, continuation_cuts, theta_lb)
        dual = val + float(pi @ s_j)
        points.append((dual, val, pi, s_min))
        return dual

    best = evaluate(np.zeros(ns))
    capped = False
    for _ in range(max_inner - 1):
        # master: max eta s.t. eta <= (L(pi_e) + pi_e @ s_e) + (s_j - s_e) @ pi
        rows = np.empty((len(points), ns + 1))
        rhs = np.empty(len(points))
        for e, (_, val, pi_e, s_e) in enumerate(points):
            rows[e, :ns] = -(s_j - s_e)
            rows[e, ns] = 1.0
            rhs[e] = val + float(pi_e @ s_e)
        c = np.zeros(ns + 1)
        c[ns] = -1.0
        lb = np.concatenate([np.full(ns, -box), [-np.inf]])
        ub = np.concatenate([np.full(ns, box), [np.inf]])
        master = solve_lp(LinearProgram(c, rows, rhs, lb=lb, ub=ub),
                          _dump_tag="lagr_master")
        if master.status != "optimal":
            raise SolverError(f"dual master failed: {master.status}")
        eta = -master.objective
        if eta - best <= tol * max(1.0, abs(best)):
            break
        best = max(best, evaluate(master.x[:ns].copy()))
    else:
        capped = True
    dual, val, pi_best, _ = max(points, key=lambda e: e[0])
    return Cut(beta=val, pi=pi_best, family="lagrangian", origin=origin,
               capped=capped)


def _aggregate(cuts: list[Cut], weights: np.ndarray, family: str,
               origin: tuple) -> Cut:
    beta = float(sum(w * c.beta for w, c in zip(weights, cuts)))
    pi = np.sum([w * c.pi for w, c in zip(weights, cuts)], axis=0)
    return Cut(beta=beta, pi=pi, family=family, origin=origin,
               capped=any(c.capped for c in cuts))


# ---------------------------------------------------------------------------
# backward pass


def backward_pass(instance: ProblemInstance, weight_models: list, pools: CutPool,
                  forward: ForwardResult, cut_family: str = "auto",
                  iteration: int = 0, tables: _WeightTables | None = None) -> int:
    """Cut every state the forward pass visited, deepest stage first.

    For each distinct (conditioning key, trial state) at stage t, one
    subproblem per positive-weight sample is solved against the
    already-updated stage t+1 pool; per-sample cuts are aggregated by the
    weights into a single cut appended under the key. Returns the number of
    cuts added; the pools are updated in place.
    """
    if tables is None:
        tables = _WeightTables(instance, weight_models)
    families = _parse_families(cut_family)
    T = instance.horizon
    stages = instance.stages
    training = instance.training
    added = 0
    for t in range(T, 0, -1):
        template = stages[t]
        theta_lb = pools.theta_lb(t + 1) if t < T else 0.0
        fams = _families_for_interface(families, stages[t - 1])
        trials: dict = {}
        for m in range(forward.indices.shape[0]):
            key = -1 if t == 1 else int(forward.indices[m, t - 2])
            s = forward.states[t - 1][m]
            trials.setdefault((key, s.tobytes()), (key, s, m))

        if fams == ["benders"] and not template.integer.any():
            # stack every (trial, sample) relaxation into one solve
            blocks, owners = [], []
            for key, s, m in trials.values():
                w = tables.row(t, key)
                support = np.flatnonzero(w > 0.0)
                for i in support:
                    cuts = pools.get(t + 1, int(i)) if t < T else []
                    blocks.append((s, training.y(t)[i], cuts, theta_lb, int(i)))
                owners.append((key, s, m, support, w))
            lps = [stage_lp(template, s, y, cuts, lb, pin_state=True)
                   for s, y, cuts, lb, _ in blocks]
            combined, var_slices, eq_slices = combine_blocks(lps)
            res = solve_lp(combined, _dump_tag="backward")
            if res.status != "optimal":
                _locate_failure(template, blocks, pools, t)
            b = 0
            for key, s, m, support, w in owners:
                parts = []
                for i in support:
                    val = float(combined.c[var_slices[b]] @ res.x[var_slices[b]])
                    pi = np.asarray(res.duals_eq[eq_slices[b]], dtype=float)
                    parts.append(Cut(beta=val - float(pi @ s), pi=pi))
                    b += 1
                cut = _aggregate(parts, w[support], "benders", (iteration, t, m))
                pools.add(t, key, cut)
                added += 1
        else:
            for key, s, m, in trials.values():
                w = tables.row(t, key)
                support = np.flatnonzero(w > 0.0)
                per_family: dict[str, list[Cut]] = {f: [] for f in fams}
                for i in support:
                    y = training.y(t)[i]
                    cuts = pools.get(t + 1, int(i)) if t < T else []
                    origin = (iteration, t, m)
                    for f in fams:
                        if f == "benders":
                            per_family[f].append(benders_cut(
                                template, s, y, cuts, theta_lb, origin))
                        elif f == "integer":
                            per_family[f].append(integer_optimality_cut(
                                template, s, y, cuts, pools.theta_lb(t),
                                theta_lb, origin))
                        else:
                            per_family[f].append(lagrangian_cut(
                                template, s, y, cuts, theta_lb, origin))
                for f in fams:
                    cut = _aggregate(per_family[f], w[support], f, (iteration, t, m))
                    pools.add(t, key, cut)
                    added += 1
    return added


# ---------------------------------------------------------------------------
# driver


@dataclass(frozen=True)
class SddpConfig:
    """Knobs of one run. ``lower_bounds`` overrides the default-0 rule;
    ``timings`` controls whether wall_ms is measured (off keeps reruns
    byte-identical)."""

    m_paths: int = 20
    alpha: float = 0.05
    epsilon: float = 1e-4
    max_iter: int = 100
    cut_family: str = "auto"
    seed: int = 0
    lower_bounds: tuple | None = None
    timings: bool = False
    stagnation_window: int = 10
    stagnation_tol: float = 1e-8

    def __post_init__(self):
        if self.m_paths < 2:
            raise InputError("m_paths must be at least 2")
        if not 0.0 < self.alpha <= 1.0:
            raise InputError(f"alpha must be in (0, 1], got {self.alpha}")
        if self.epsilon <= 0 or self.max_iter < 1:
            raise InputError("epsilon must be positive and max_iter at least 1")
        _parse_families(self.cut_family)


@dataclass
class LogRow:
    iteration: int
    lb: float
    ub_mean: float
    ub_std: float
    ub: float
    wall_ms: int
    cuts_added: int


@dataclass
class SddpRun:
    """Final bounds, the stage-0 decision, per-iteration log, and the pools
    (exportable with :func:`export_cuts` to warm-start another run)."""

    status: str
    lb: float
    ub_mean: float
    ub_std: float
    ub: float
    iterations: int
    m_paths: int
    alpha: float
    seed: int
    first_stage: np.ndarray
    log: list[LogRow]
    pools: CutPool
    trial_states: list


def write_run_log(run: SddpRun, path: str, header_lines=()) -> None:
    """One CSV row per iteration: iter,lb,ub_mean,ub_std,ub,wall_ms,cuts_added."""
    with open(path, "w") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write("iter,lb,ub_mean,ub_std,ub,wall_ms,cuts_added\n")
        for row in run.log:
            fh.write(f"{row.iteration},{row.lb!r},{row.ub_mean!r},{row.ub_std!r},"
                     f"{row.ub!r},{row.wall_ms},{row.cuts_added}\n")


def _solve_root(instance: ProblemInstance, pools: CutPool):
    T = instance.horizon
    cuts = pools.get(1, -1) if T else []
    theta0 = pools.theta_lb(1) if T else 0.0
    sol = fix_state_and_solve(instance.stages[0], instance.initial_state, None,
                              cuts, theta0)
    if sol.status == "infeasible":
        raise InfeasibleError(stage=0)
    if sol.status == "unbounded":
        raise UnboundedError("stage 0 is unbounded below")
    return float(sol.value), sol.z


def solve_sddp(instance: ProblemInstance, weight_models: list | None = None,
               config: SddpConfig | None = None,
               pools: CutPool | None = None) -> SddpRun:
    """Run forward/backward iterations until the gap closes.

    Stops when ub - lb <= epsilon * max(1, |lb|) ("converged"), the
    iteration cap is hit ("iteration_limit"), or the lower bound improves by
    less than stagnation_tol over stagnation_window iterations ("stagnated").
    The returned first-stage decision minimizes the final stage-0 problem.
    """
    config = config or SddpConfig()
    findings = validate(instance)
    if findings:
        raise InputError("invalid instance", findings=findings)
    if weight_models is None:
        weight_models = instance.fit_weight_models()
    if pools is None:
        pools = CutPool.for_instance(instance, config.lower_bounds)
    # fail early on family/interface mismatches rather than mid-run
    for t in range(1, instance.horizon + 1):
        _families_for_interface(_parse_families(config.cut_family),
                                instance.stages[t - 1])
    tables = _WeightTables(instance, weight_models)

    log: list[LogRow] = []
    trial_states: list = []
    lb_history: list[float] = []
    status = "iteration_limit"
    lb, z0 = -np.inf, None
    mu = sigma = ub = np.nan
    for n in range(1, config.max_iter + 1):
        t_start = time.perf_counter()
        fwd = forward_pass(instance, weight_models, pools, config.m_paths,
                           config.seed, iteration=n, tables=tables)
        mu, sigma, ub = statistical_upper_bound(fwd.costs, config.alpha)
        cuts_added = backward_pass(instance, weight_models, pools, fwd,
                                   config.cut_family, iteration=n, tables=tables)
        lb, z0 = _solve_root(instance, pools)
        wall = int(round((time.perf_counter() - t_start) * 1000)) if config.timings else 0
        log.append(LogRow(n, lb, mu, sigma, ub, wall, cuts_added))
        trial_states.append(fwd.states)
        lb_history.append(lb)
        if ub - lb <= config.epsilon * max(1.0, abs(lb)):
            status = "converged"
            break
        if (len(lb_history) > config.stagnation_window
                and lb_history[-1] - lb_history[-1 - config.stagnation_window]
                < config.stagnation_tol):
            status = "stagnated"
            break
    return SddpRun(status=status, lb=lb, ub_mean=mu, ub_std=sigma, ub=ub,
                   iterations=len(log), m_paths=config.m_paths, alpha=config.alpha,
                   seed=config.seed, first_stage=z0, log=log, pools=pools,
                   trial_states=trial_states)


# ---------------------------------------------------------------------------
# binary state expansion


def binary_expand(instance: ProblemInstance, bits: int = 10) -> ProblemInstance:
    """Rewrite every inter-stage state as a vector of binary decisions.

    Continuous state components are encoded on a fixed grid: the producing
    stage gains ``bits`` binary decisions per component plus two rows tying
    their decoded value to the original transition within half a grid step;
    the consuming stage reads the decoded value. The component's range must
    be declared in the consuming stage's ``state_ranges``. Components that
    already copy a single binary decision pass through as one bit. The
    result's interfaces all satisfy :func:`state_is_binary`, enabling the
    integer and lagrangian cut families, at the cost of grid-resolution
    state error.
    """
    if bits < 1:
        raise InputError("bits must be at least 1")
    stages = [copy.deepcopy(st) for st in instance.stages]
    T = len(stages) - 1
    for t in range(T):
        prod, cons = stages[t], stages[t + 1]
        F = prod.F
        n_old = F.shape[0]
        # per original dimension: (is passthrough, lo, step, bit count)
        plans = []
        for d in range(n_old):
            row = F[d]
            nz = np.flatnonzero(row)
            if nz.size == 1 and row[nz[0]] == 1.0 and prod.integer[nz[0]]:
                plans.append((True, 0.0, 1.0, 1))
            else:
                if cons.state_ranges is None:
                    raise InputError(
                        f"stage {t + 1} needs state_ranges to binarize state "
                        f"component {d}")
                lo, hi = cons.state_ranges[d]
                if not hi > lo:
                    raise InputError(f"stage {t + 1} state_ranges[{d}] must have "
                                     "hi > lo")
                step = (hi - lo) / (2.0 ** bits - 1.0)
                plans.append((False, float(lo), float(step), bits))
        total_bits = sum(k for _, _, _, k in plans)

        p_old = prod.n_dec
        m_old = prod.W.shape[0]
        decode = np.zeros((n_old, total_bits))
        new_rows = []
        new_rhs = []
        col = 0
        for d, (passthrough, lo, step, k) in enumerate(plans):
            weights_row = step * (2.0 ** np.arange(k))
            decode[d, col:col + k] = weights_row
            gap = 0.0 if passthrough else step / 2.0
            up = np.zeros(p_old + total_bits)
            up[:p_old] = F[d]
            up[p_old + col:p_old + col + k] = -weights_row
            new_rows.append(up)
            new_rhs.append(lo + gap)
            new_rows.append(-up)
            new_rhs.append(-lo + gap)
            col += k

        prod.cost = np.concatenate([prod.cost, np.zeros(total_bits)])
        W = np.zeros((m_old + 2 * n_old, p_old + total_bits))
        W[:m_old, :p_old] = prod.W
        W[m_old:] = np.vstack(new_rows)
        prod.W = W
        prod.h = np.concatenate([prod.h, np.asarray(new_rhs)])
        prod.T_mat = np.vstack([prod.T_mat,
                                np.zeros((2 * n_old, prod.T_mat.shape[1]))])
        prod.U = np.vstack([prod.U, np.zeros((2 * n_old, prod.U.shape[1]))])
        prod.lb = np.concatenate([prod.lb, np.zeros(total_bits)])
        prod.ub = np.concatenate([prod.ub, np.ones(total_bits)])
        prod.integer = np.concatenate([prod.integer, np.ones(total_bits, dtype=bool)])
        newF = np.zeros((total_bits, p_old + total_bits))
        newF[:, p_old:] = np.eye(total_bits)
        prod.F = newF

        lo_vec = np.array([lo for _, lo, _, _ in plans])
        cons.h = cons.h + cons.T_mat @ lo_vec
        cons.T_mat = cons.T_mat @ decode
        cons.state_ranges = np.tile([0.0, 1.0], (total_bits, 1))

    out = ProblemInstance(stages, instance.initial_state,
                          instance.initial_covariate, instance.training,
                          instance.weight_spec, instance.name)
    findings = validate(out)
    if findings:
        raise SolverError("binary expansion produced an invalid instance: "
                          + "; ".join(findings))
    return out
