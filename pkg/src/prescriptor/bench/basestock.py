"""Order-up-to (basestock) approximate dynamic programming.

The policy keeps one target inventory position per (stage, training sample):
deciding at stage t after demand is served, it advance-orders up to the
weighted average of the stage-t targets of the training samples, where the
weights come from the current covariate. Immediate orders are chosen
myopically to cover any shortfall at least cash-plus-holding cost. Fitting
is backward induction over a demand-quantile grid: the target of (t, i)
minimizes the advance cost plus the mean simulated downstream cost, where
downstream demand paths are sampled by walking nearest-neighbor transition
weights from sample i forward. The fit depends only on the training data,
so one fit serves every weight function being compared; methods differ in
how they aggregate the targets at execution time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InputError
from ..seeding import Stream, substream
from ..training import TrainingSet
from ..weights import default_k, knn_weights_batch
from .instances import InventoryParams, LotSizingParams
from .policy import PolicyRun, PolicyRunSet

__all__ = ["BasestockPolicy", "fit_basestock", "execute_basestock"]


@dataclass
class BasestockPolicy:
    """Targets ``levels[t, i]`` for deciding stages t = 0..T-1; the grid the
    fit searched is kept for reference."""

    levels: np.ndarray
    grid: np.ndarray

    def __post_init__(self):
        if (self.levels < 0).any():
            raise InputError("basestock targets must be nonnegative")

    @property
    def horizon(self) -> int:
        return self.levels.shape[0]


def _combo_table(params: LotSizingParams):
    """All 2^M immediate-order bundles: bit rows, delivered units, cash cost."""
    q = np.asarray(params.quantities, dtype=float)
    prices = np.asarray(params.unit_prices, dtype=float)
    m = q.size
    bits = ((np.arange(2 ** m)[:, None] >> np.arange(m)) & 1).astype(float)
    return bits, bits @ q, bits @ (prices * q)


def _myopic_immediate(avail: np.ndarray, y: np.ndarray, params):
    """Cheapest way to serve the stage's shortfall right now.

    Returns (delivered units, cash cost, option bits or None). Lot sizing
    enumerates the feasible bundles and minimizes cash plus holding on the
    overshoot, lowest bundle index on ties; the inventory problem simply
    buys the shortfall.
    """
    need = np.maximum(y - avail, 0.0)
    if isinstance(params, InventoryParams):
        return need, params.c2 * need, None
    bits, qsum, cash = _combo_table(params)
    score = cash[:, None] + params.c_h * (qsum[:, None] - need[None, :])
    score[qsum[:, None] < need[None, :] - 1e-9] = np.inf
    pick = np.argmin(score, axis=0)
    return qsum[pick], cash[pick], bits[pick]


def _transition_rows(training: TrainingSet, t: int) -> np.ndarray:
    """Row i: nearest-neighbor weights over stage-(t+1) scenarios at x_t^i."""
    pts = training.x(t)
    return knn_weights_batch(pts, pts, default_k(training.n_samples))


def _sample_continuations(training: TrainingSet, t: int, s_paths: int,
                          rng: np.random.Generator) -> np.ndarray:
    """Index paths (N, S, T-t) for stages t+1..T, started from each sample."""
    n, T = training.n_samples, training.horizon
    steps = T - t
    out = np.empty((n, s_paths, steps), dtype=int)
    cur = np.broadcast_to(np.arange(n)[:, None], (n, s_paths))
    for step in range(steps):
        cdf = np.cumsum(_transition_rows(training, t + step), axis=1)
        u = rng.random((n, s_paths))
        rows = cdf[cur.reshape(-1)]
        nxt = np.sum(rows < u.reshape(-1, 1), axis=1).reshape(n, s_paths)
        cur = np.minimum(nxt, n - 1)
        out[:, :, step] = cur
    return out


def fit_basestock(training: TrainingSet, weight_models, params, *,
                  grid_points: int = 21, sim_paths: int = 24,
                  seed: int = 0) -> BasestockPolicy:
    """Fit the targets by backward grid search.

    ``weight_models`` is accepted for interface symmetry but the fit itself
    is weight-free: continuations are sampled with default nearest-neighbor
    transitions regardless of how the policy will later be aggregated, so
    competing weight functions share identical targets. The budget is
    ignored while fitting and enforced at execution.
    """
    if training.d_y != 1:
        raise InputError("basestock fitting needs scalar demand paths")
    if isinstance(params, LotSizingParams):
        params = params.resolved()
    T = training.horizon
    n = training.n_samples
    demand = training.uncertainties[:, :, 0]            # (N, T), column t-1 = y_t
    hi = float(np.quantile(demand, 0.99))
    grid = np.linspace(0.0, max(hi, 1.0), grid_points)
    levels = np.zeros((T, n))
    for t in range(T - 1, -1, -1):
        rng = substream(seed, Stream.BASESTOCK_FIT, t)
        paths = _sample_continuations(training, t, sim_paths, rng)
        scores = np.empty((grid.size, n))
        for g, r in enumerate(grid):
            inv = np.zeros((n, sim_paths))
            pipe = np.full((n, sim_paths), r)
            cost = np.zeros((n, sim_paths))
            for step in range(T - t):
                tau = t + 1 + step
                idx = paths[:, :, step]
                y = demand[idx, tau - 1]
                avail = inv + pipe
                flat_avail, flat_y = avail.reshape(-1), y.reshape(-1)
                delivered, cash, _ = _myopic_immediate(flat_avail, flat_y, params)
                inv = (flat_avail + delivered - flat_y).reshape(n, sim_paths)
                cost += (cash + params.c_h * np.maximum(inv.reshape(-1), 0.0)
                         ).reshape(n, sim_paths)
                if tau < T:
                    target = levels[tau, idx]
                    z1 = np.maximum(target - inv, 0.0)
                else:
                    z1 = np.zeros_like(inv)
                cost += params.c1 * z1
                pipe = z1
            scores[g] = params.c1 * r + cost.mean(axis=1)
        levels[t] = grid[np.argmin(scores, axis=0)]
    return BasestockPolicy(levels=levels, grid=grid)


def execute_basestock(policy: BasestockPolicy, params, weight_models,
                      test: TrainingSet, dynamic: bool = True,
                      initial_demand: float = 0.0) -> PolicyRunSet:
    """Run the fitted policy over every test path.

    ``dynamic`` aggregates the stage-t targets with the stage-t covariate's
    weights; otherwise the stage-0 weights are reused throughout (the static
    variant). Decision vectors are laid out to match the corresponding stage
    templates, so realized costs price identically to the re-solving modes.
    """
    if isinstance(params, LotSizingParams):
        params = params.resolved()
    T = test.horizon
    P = test.n_samples
    if policy.horizon != T:
        raise InputError(f"policy spans {policy.horizon} deciding stages, "
                         f"test horizon is {T}")
    lot = isinstance(params, LotSizingParams)
    w0 = weight_models[0].weights_batch(test.x(0))
    inv = np.zeros(P)
    pipe = np.zeros(P)
    cum = np.zeros(P)
    decisions = [[None] * (T + 1) for _ in range(P)]
    stage_costs = np.zeros((P, T + 1))
    for t in range(T + 1):
        y = test.y(t)[:, 0] if t >= 1 else np.full(P, initial_demand)
        avail = inv + pipe
        delivered, cash, bits = _myopic_immediate(avail, y, params)
        inv = avail + delivered - y
        if t < T:
            w = w0 if not dynamic else weight_models[t].weights_batch(test.x(t))
            target = w @ policy.levels[t]
            room = np.maximum(params.budget_rate * (t + 1) - cum, 0.0)
            z1 = np.clip(target - inv, 0.0, room)
        else:
            z1 = np.zeros(P)
        cum = cum + z1
        if lot:
            cost = params.c1 * z1 + cash + params.c_h * inv
            z = np.column_stack([z1, bits, inv, cum])
        else:
            u = np.maximum(params.c_h * inv, -params.c_b * inv)
            cost = params.c1 * z1 + cash + u
            z = np.column_stack([z1, delivered, u, inv, cum])
        stage_costs[:, t] = cost
        for p in range(P):
            decisions[p][t] = z[p]
        pipe = z1
    runs = [PolicyRun(path=p,
                      covariates=test.covariates[p],
                      uncertainties=test.uncertainties[p],
                      decisions=decisions[p],
                      stage_costs=stage_costs[p],
                      total_cost=float(stage_costs[p].sum()))
            for p in range(P)]
    return PolicyRunSet(runs=runs, mode="basestock" if dynamic else "basestock-static")
