"""Out-of-sample policy execution by rolling re-solve.

At each stage of a test path the policy observes the covariate and the
realized uncertainty, re-solves the weighted problem from the current state,
applies the first-stage decision, and moves on. The continuation beyond the
next stage is approximated scenario-wise: each positively weighted training
sample contributes the deterministic cost-to-go along its own recorded
future. Small weight supports get that future as an explicit linear program
(exact for the approximation); large supports use precomputed cut tables,
aggregated on the fly by the current weights.

The cut tables depend only on the training paths and the stage templates,
never on the weight function, so one build serves every method being
compared. Cuts are anchored at shared low-discrepancy probe states; the
aggregate is exact at the probes and a lower approximation between them.
For stages with binary decisions the tables are built from the linear
relaxation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from ..errors import InfeasibleError, InputError, SolverError, UnboundedError
from ..linopt import combine_blocks, solve_lp, solve_mip, stage_lp
from ..model import ProblemInstance, ScenarioTree, TreeNode
from ..sddp import Cut, default_lower_bounds
from ..training import TrainingSet
from ..weights import fit_stage_models
from ..exact import _assemble

__all__ = [
    "PolicyConfig", "ContinuationTables", "build_continuation_tables",
    "PolicyRun", "PolicyRunSet", "run_policy",
]


@dataclass(frozen=True)
class PolicyConfig:
    """Execution knobs.

    ``fan_budget`` caps the scenario-stage block count of an explicit
    lookahead fan; a support of s at stage t fans iff s * (T - t) fits the
    budget, otherwise the stage solve falls back to the cut tables.
    ``chunk`` is how many per-path stage programs are stacked into one
    solver call.
    """

    probes: int = 12
    fan_budget: int = 30
    chunk: int = 64

    def __post_init__(self):
        if self.probes < 2:
            raise InputError("need at least 2 continuation probes")
        if self.fan_budget < 0 or self.chunk < 1:
            raise InputError("fan_budget must be >= 0 and chunk >= 1")


@dataclass
class ContinuationTables:
    """Cuts on each training path's deterministic cost-to-go.

    For stage tau in 1..T, ``values[tau][i, l]`` is the cost of following
    training path i from stage tau onward starting in probe state
    ``probes[tau][l]``, and ``slopes[tau][i, l]`` a subgradient there. Index
    0 is unused padding so tables read naturally by stage.
    """

    probes: list = field(default_factory=list)   # [tau] -> (L, n_state)
    values: list = field(default_factory=list)   # [tau] -> (N, L)
    slopes: list = field(default_factory=list)   # [tau] -> (N, L, n_state)
    floors: np.ndarray | None = None             # stage lower bounds L_1..L_T

    def aggregated_cuts(self, tau: int, w: np.ndarray) -> list:
        """Cuts on the w-weighted continuation entering stage tau; tight at
        the probes, below the true weighted value elsewhere."""
        alpha = w @ self.values[tau]                       # (L,)
        gamma = np.einsum("i,ilk->lk", w, self.slopes[tau])
        beta = alpha - np.einsum("lk,lk->l", gamma, self.probes[tau])
        return [Cut(beta=float(beta[l]), pi=gamma[l]) for l in range(alpha.size)]


def _stage_floors(instance: ProblemInstance) -> np.ndarray:
    try:
        return default_lower_bounds(instance)
    except InputError:
        return np.full(instance.horizon, -np.inf)


def _probe_states(template, count: int) -> np.ndarray:
    if template.state_ranges is None:
        raise InputError(
            f"stage {template.t} has no state_ranges; continuation probes "
            "need a bounding box for the incoming state")
    ranges = template.state_ranges
    sampler = qmc.Halton(d=ranges.shape[0], scramble=False)
    unit = sampler.random(count)
    return qmc.scale(unit, ranges[:, 0], ranges[:, 1])


def build_continuation_tables(instance: ProblemInstance,
                              config: PolicyConfig | None = None) -> ContinuationTables:
    """Backward-build the per-path cost-to-go cut tables.

    Stage tau solves, for every (probe, sample) pair, the one-stage problem
    under sample i's stage-tau uncertainty with the already-built stage
    tau+1 cuts of the same sample as continuation. All pairs of a stage are
    stacked into a few block-diagonal solves. Binary stages are relaxed.
    """
    if config is None:
        config = PolicyConfig()
    T = instance.horizon
    training = instance.training
    N = training.n_samples
    L = config.probes
    floors = _stage_floors(instance)
    tables = ContinuationTables(probes=[None] * (T + 1),
                                values=[None] * (T + 1),
                                slopes=[None] * (T + 1),
                                floors=floors)
    chunk = 1200
    for tau in range(T, 0, -1):
        template = instance.stages[tau]
        ns = template.n_state
        probes = _probe_states(template, L)
        y_tau = training.y(tau)
        if tau < T:
            next_cuts = [_path_cuts(tables, tau + 1, i) for i in range(N)]
            theta_lb = float(floors[tau])
        vals = np.empty((N, L))
        slps = np.empty((N, L, ns))
        lps = []
        keys = []
        for l in range(L):
            for i in range(N):
                cuts = next_cuts[i] if tau < T else ()
                lps.append(stage_lp(template, probes[l], y_tau[i], cuts,
                                    theta_lb=theta_lb if tau < T else 0.0,
                                    include_theta=tau < T, pin_state=True))
                keys.append((i, l))
        for start in range(0, len(lps), chunk):
            group = lps[start:start + chunk]
            combined, var_slices, eq_slices = combine_blocks(group)
            res = solve_lp(combined, _dump_tag=f"tables_t{tau}")
            if res.status != "optimal":
                raise SolverError(
                    f"continuation table stage {tau} solve ended {res.status}; "
                    "check state_ranges cover reachable states")
            for b, (i, l) in enumerate(keys[start:start + chunk]):
                sl = var_slices[b]
                vals[i, l] = float(combined.c[sl] @ res.x[sl])
                slps[i, l] = res.duals_eq[eq_slices[b]]
        tables.probes[tau] = probes
        tables.values[tau] = vals
        tables.slopes[tau] = slps
    return tables


def _path_cuts(tables: ContinuationTables, tau: int, i: int) -> list:
    probes = tables.probes[tau]
    vals = tables.values[tau][i]
    slps = tables.slopes[tau][i]
    beta = vals - np.einsum("lk,lk->l", slps, probes)
    return [Cut(beta=float(beta[l]), pi=slps[l]) for l in range(vals.size)]


# ---------------------------------------------------------------------------
# execution


@dataclass
class PolicyRun:
    """One test path's realized trajectory under the policy."""

    path: int
    covariates: np.ndarray      # (T, d_x) as observed
    uncertainties: np.ndarray   # (T, d_y) as observed
    decisions: list             # per stage 0..T, the applied decision vector
    stage_costs: np.ndarray     # (T+1,)
    total_cost: float


@dataclass
class PolicyRunSet:
    """All test paths of one policy evaluation."""

    runs: list
    mode: str

    @property
    def totals(self) -> np.ndarray:
        return np.array([r.total_cost for r in self.runs])

    @property
    def mean_cost(self) -> float:
        return float(self.totals.mean())

    @property
    def std_cost(self) -> float:
        t = self.totals
        return float(t.std(ddof=1)) if t.size > 1 else 0.0


def _fan_tree(instance: ProblemInstance, t: int, y_now, support: np.ndarray,
              w: np.ndarray) -> ScenarioTree:
    """Lookahead fan: the observed stage now, then each supported training
    sample's recorded future as a deterministic chain."""
    T = instance.horizon
    training = instance.training
    nodes = [TreeNode(index=0, depth=t, parent=-1, sample=-1, prob=1.0,
                      x=None, y=y_now)]
    for i in support:
        parent = 0
        for tau in range(t + 1, T + 1):
            node = TreeNode(index=len(nodes), depth=tau, parent=parent,
                            sample=int(i), prob=float(w[i]),
                            x=None, y=training.y(tau)[i])
            nodes[parent].children.append(node.index)
            nodes.append(node)
            parent = node.index
    return ScenarioTree(nodes)


def _solve_fan(instance, t, state, y_now, support, w, path_id):
    tree = _fan_tree(instance, t, y_now, support, w)
    lp, order, offsets = _assemble(instance, tree, subtree_root=0,
                                   root_state=state)
    lp.integer[offsets[1]:] = False      # later stages are forecast, relax them
    res = solve_mip(lp) if lp.integer.any() else solve_lp(lp, _dump_tag="fan")
    if res.status == "infeasible":
        raise InfeasibleError(stage=t, scenario=f"test path {path_id}")
    if res.status == "unbounded":
        raise UnboundedError(f"stage {t} lookahead unbounded on test path {path_id}")
    return res.x[:offsets[1]]


def _solve_stacked(entries, n_dec, t, chunk):
    """Solve [(path_id, LinearProgram)] in stacked chunks; returns {path: z}."""
    out = {}
    for start in range(0, len(entries), chunk):
        group = entries[start:start + chunk]
        combined, var_slices, _ = combine_blocks([lp for _, lp in group])
        res = solve_lp(combined, _dump_tag=f"policy_t{t}")
        if res.status != "optimal":
            for pid, lp in group:
                r = solve_lp(lp)
                if r.status == "infeasible":
                    raise InfeasibleError(stage=t, scenario=f"test path {pid}")
                if r.status == "unbounded":
                    raise UnboundedError(f"stage {t} unbounded on test path {pid}")
            raise SolverError(f"stacked stage-{t} policy solve failed "
                              "but every path solves alone")
        for sl, (pid, _) in zip(var_slices, group):
            out[pid] = res.x[sl][:n_dec]
    return out


def _solve_single(entries, n_dec, t):
    out = {}
    for pid, lp in entries:
        res = solve_mip(lp)
        if res.status == "infeasible":
            raise InfeasibleError(stage=t, scenario=f"test path {pid}")
        if res.status == "unbounded":
            raise UnboundedError(f"stage {t} unbounded on test path {pid}")
        out[pid] = res.x[:n_dec]
    return out


def run_policy(instance: ProblemInstance, weight_spec=None,
               test: TrainingSet | None = None, mode: str = "resolve", *,
               weight_models: list | None = None,
               tables: ContinuationTables | None = None,
               config: PolicyConfig | None = None,
               basestock=None, params=None) -> PolicyRunSet:
    """Execute a policy over every test path and price the outcome.

    ``resolve`` re-solves at each stage with the current covariate's
    weights; ``static`` re-solves with the stage-0 covariate's weights
    throughout (states still update); ``basestock`` delegates to a fitted
    order-up-to policy, which needs ``basestock`` and ``params``. Weight
    models are fitted from ``weight_spec`` (default: the instance's) unless
    supplied. A stage that cannot be completed on some path raises
    :class:`InfeasibleError` naming the path.
    """
    if test is None:
        raise InputError("run_policy needs a test set")
    if mode not in ("resolve", "static", "basestock"):
        raise InputError(f"unknown mode {mode!r}")
    if test.horizon != instance.horizon:
        raise InputError(f"test horizon {test.horizon} != instance "
                         f"horizon {instance.horizon}")
    if config is None:
        config = PolicyConfig()
    if weight_models is None:
        spec = weight_spec if weight_spec is not None else instance.weight_spec
        weight_models = fit_stage_models(spec, instance.training)

    if mode == "basestock":
        from .basestock import execute_basestock
        if basestock is None or params is None:
            raise InputError("basestock mode needs a fitted policy and params")
        return execute_basestock(basestock, params, weight_models, test)

    T = instance.horizon
    P = test.n_samples
    floors = _stage_floors(instance)
    states = np.tile(np.asarray(instance.initial_state, dtype=float), (P, 1))
    decisions = [[None] * (T + 1) for _ in range(P)]
    stage_costs = np.zeros((P, T + 1))
    static_w = None
    if mode == "static":
        static_w = weight_models[0].weights_batch(test.x(0))

    for t in range(T + 1):
        template = instance.stages[t]
        n_dec = template.n_dec
        y_stage = test.y(t) if t >= 1 else None
        if t < T:
            w_mat = static_w if mode == "static" \
                else weight_models[t].weights_batch(test.x(t))
        lp_entries, mip_entries, z_t = [], [], {}
        for p in range(P):
            y_now = y_stage[p] if y_stage is not None else None
            if t == T:
                lp = stage_lp(template, states[p], y_now, (),
                              include_theta=False, pin_state=False)
                (mip_entries if template.integer.any() else lp_entries).append((p, lp))
                continue
            w = w_mat[p]
            support = np.flatnonzero(w > 0.0)
            if support.size * (T - t) <= config.fan_budget:
                z_t[p] = _solve_fan(instance, t, states[p], y_now, support, w, p)
            else:
                if tables is None:
                    tables = build_continuation_tables(instance, config)
                cuts = tables.aggregated_cuts(t + 1, w)
                lp = stage_lp(template, states[p], y_now, cuts,
                              theta_lb=float(floors[t]), include_theta=True,
                              pin_state=False)
                (mip_entries if template.integer.any() else lp_entries).append((p, lp))
        z_t.update(_solve_stacked(lp_entries, n_dec, t, config.chunk))
        z_t.update(_solve_single(mip_entries, n_dec, t))
        for p in range(P):
            z = z_t[p]
            decisions[p][t] = z
            stage_costs[p, t] = float(template.cost @ z)
            if t < T:
                states[p] = template.F @ z

    runs = [PolicyRun(path=p,
                      covariates=test.covariates[p],
                      uncertainties=test.uncertainties[p],
                      decisions=decisions[p],
                      stage_costs=stage_costs[p],
                      total_cost=float(stage_costs[p].sum()))
            for p in range(P)]
    return PolicyRunSet(runs=runs, mode=mode)
