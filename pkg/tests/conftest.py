"""Shared helpers: a random instance factory and independent reference oracles.

The oracles here deliberately avoid the package's own assembly code paths so
they can serve as cross-checks: the dense deterministic equivalent builds one
flat LP by substituting states forward (no state-copy variables), and the
vertex oracle minimizes by enumerating basic feasible points.
"""

import itertools

import numpy as np
import pytest
from scipy.optimize import linprog

from prescriptor import TrainingSet, WeightSpec
from prescriptor.model import ProblemInstance, StageTemplate


class FixedWeights:
    """Stage model stub returning the same weight row for every query."""

    def __init__(self, w):
        self.w = np.asarray(w, dtype=float)

    def weights(self, x):
        return self.w.copy()

    def weights_batch(self, X):
        X = np.atleast_2d(X)
        return np.tile(self.w, (X.shape[0], 1))


def make_recourse_instance(rng, horizon=None, n=None, d_z=None, d_s=None,
                           d_y=None, rows=None):
    """Random continuous instance with complete recourse and nontrivial optima.

    Each stage carries a dedicated shortfall decision r that must cover a
    demand d0 + q @ s + g @ y at a strictly positive price, so optimal values
    are positive and depend on both the scenario and the incoming state
    (earlier stages can pay to steer the state and shrink later demand).
    The remaining rows keep a feasibility margin at z = 0 for every state in
    range and every demand inside the training box, and r is unbounded
    above, so any weight function yields a feasible, bounded extensive form.
    """
    horizon = int(rng.integers(1, 4)) if horizon is None else horizon
    n = int(rng.integers(2, 6)) if n is None else n
    d_z = int(rng.integers(2, 5)) if d_z is None else d_z
    d_s = int(rng.integers(1, 3)) if d_s is None else d_s
    d_y = int(rng.integers(1, 3)) if d_y is None else d_y
    rows = int(rng.integers(2, 4)) if rows is None else rows
    d_x = 2

    y_lo, y_hi = 0.5, 3.0
    covariates = rng.normal(0.0, 1.0, (n, horizon, d_x))
    uncertainties = rng.uniform(y_lo, y_hi, (n, horizon, d_y))
    training = TrainingSet(covariates=covariates, uncertainties=uncertainties)

    stages = []
    s_bnd = np.zeros(d_s)
    for t in range(horizon + 1):
        cost = rng.uniform(0.1, 2.0, d_z)
        W = rng.uniform(-1.0, 1.0, (rows, d_z))
        T_mat = rng.uniform(-1.0, 1.0, (rows, d_s))
        dy_t = 0 if t == 0 else d_y
        U = rng.uniform(-1.0, 1.0, (rows, dy_t))
        ub = rng.uniform(3.0, 8.0, d_z)
        margin = rng.uniform(0.3, 1.0, rows)
        h = margin + np.abs(T_mat) @ s_bnd
        if dy_t:
            h -= np.minimum(U * y_lo, U * y_hi).sum(axis=1)
        if t < horizon:
            F = rng.uniform(-0.6, 0.6, (d_s, d_z))
            next_bnd = np.abs(F) @ ub
        else:
            F = None
        # bounding box of the state entering this stage, for lookahead probes
        ranges = (np.column_stack([-s_bnd - 1.0, s_bnd + 1.0])
                  if t >= 1 else None)

        # shortfall decision: r >= d0 + q @ s + g @ y, priced, stateless
        cost = np.concatenate([cost, [rng.uniform(0.8, 2.0)]])
        W = np.hstack([W, np.zeros((rows, 1))])
        demand = np.zeros(d_z + 1)
        demand[-1] = -1.0
        W = np.vstack([W, demand])
        q = rng.uniform(-0.8, 0.8, d_s)
        T_mat = np.vstack([T_mat, -q[None, :]])
        U = np.vstack([U, -rng.uniform(0.2, 1.0, (1, dy_t))])
        h = np.concatenate([h, [-rng.uniform(0.5, 2.0)]])
        if F is not None:
            F = np.hstack([F, np.zeros((d_s, 1))])

        stages.append(StageTemplate(
            t=t, cost=cost, W=W, h=h, T_mat=T_mat, U=U, F=F,
            lb=np.zeros(d_z + 1), ub=np.concatenate([ub, [np.inf]]),
            integer=np.zeros(d_z + 1, dtype=bool),
            state_ranges=ranges))
        if t < horizon:
            s_bnd = next_bnd

    return ProblemInstance(stages=stages, initial_state=np.zeros(d_s),
                           initial_covariate=covariates[0, 0].copy(),
                           training=training, weight_spec=WeightSpec(),
                           name="random-recourse")


def dense_extensive_value(instance, weight_models):
    """Deterministic-equivalent optimum via direct path enumeration.

    States are substituted forward (W_t z_node - T_t F z_parent <= rhs), so
    the flat LP carries only decision copies, one block per scenario node.
    """
    training = instance.training
    horizon = training.horizon
    # node: (t, sample, prob, parent_id); sample -1 marks the root
    nodes = [(0, -1, 1.0, -1)]
    frontier = [0]
    for t in range(horizon):
        nxt = []
        for nid in frontier:
            _, sample, prob, _ = nodes[nid]
            if sample < 0:
                x = np.asarray(instance.initial_covariate)
            else:
                x = training.x(t)[sample]
            w = weight_models[t].weights_batch(x[None, :])[0]
            for j in np.flatnonzero(w > 0):
                nodes.append((t + 1, int(j), prob * float(w[j]), nid))
                nxt.append(len(nodes) - 1)
        frontier = nxt

    offsets, total = [], 0
    for t, _, _, _ in nodes:
        offsets.append(total)
        total += instance.stages[t].cost.size
    c = np.zeros(total)
    blocks_A, blocks_b = [], []
    lb = np.zeros(total)
    ub = np.zeros(total)
    for nid, (t, sample, prob, parent) in enumerate(nodes):
        st = instance.stages[t]
        off = offsets[nid]
        d = st.cost.size
        c[off:off + d] = prob * st.cost
        lb[off:off + d] = st.lb
        ub[off:off + d] = st.ub
        rows = st.W.shape[0]
        A = np.zeros((rows, total))
        A[:, off:off + d] = st.W
        rhs = st.h.copy()
        if parent < 0:
            rhs = rhs + st.T_mat @ np.asarray(instance.initial_state, dtype=float)
        else:
            pt, _, _, _ = nodes[parent]
            poff = offsets[parent]
            pd = instance.stages[pt].cost.size
            A[:, poff:poff + pd] -= st.T_mat @ instance.stages[pt].F
        if sample >= 0 and st.U.shape[1]:
            rhs = rhs + st.U @ training.y(t)[sample]
        blocks_A.append(A)
        blocks_b.append(rhs)

    res = linprog(c, A_ub=np.vstack(blocks_A), b_ub=np.concatenate(blocks_b),
                  bounds=list(zip(lb, ub)), method="highs")
    assert res.status == 0, f"oracle LP not optimal: {res.message}"
    return float(res.fun)


def vertex_lp_value(c, A_ub, b_ub, lb, ub, tol=1e-7):
    """Minimum of c @ x over {A x <= b, lb <= x <= ub} by vertex enumeration.

    Requires finite bounds (the feasible set is then a polytope and some
    vertex attains the minimum). Returns None when no feasible vertex exists.
    """
    c = np.asarray(c, dtype=float)
    n = c.size
    rows = [np.asarray(A_ub, dtype=float)] if A_ub is not None else []
    rhs = [np.asarray(b_ub, dtype=float)] if b_ub is not None else []
    rows.append(-np.eye(n))
    rhs.append(-np.asarray(lb, dtype=float))
    rows.append(np.eye(n))
    rhs.append(np.asarray(ub, dtype=float))
    G = np.vstack(rows)
    g = np.concatenate(rhs)
    best = None
    for combo in itertools.combinations(range(G.shape[0]), n):
        M = G[list(combo)]
        if abs(np.linalg.det(M)) < 1e-10:
            continue
        x = np.linalg.solve(M, g[list(combo)])
        if (G @ x <= g + tol).all():
            val = float(c @ x)
            if best is None or val < best:
                best = val
    return best


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    try:
        import test_acceptance
    except ImportError:
        return
    lines = getattr(test_acceptance, "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
