"""Linear-optimization kernel with dual extraction.

Wraps a simplex solver (HiGHS via scipy) for LPs and adds a small
best-bound branch-and-bound for problems with binary decisions. Sign
conventions, under minimization throughout:

* rows are ``A_ub x <= b_ub``; their duals are <= 0,
* equality-row duals are the sensitivities d(objective)/d(rhs), which is
  what Benders-style cuts consume,
* duals come from an optimal simplex basis (vertices of the dual
  polyhedron), never interior points, so cut recursions stay finite.

Setting the environment variable ``PRESCRIPTOR_DUMP_LP`` to a directory
makes every solve write a readable dump of its model there, numbered in
call order.

Tolerances: feasibility 1e-7, optimality 1e-7, integrality 1e-6.
"""

from __future__ import annotations

import heapq
import itertools
import os
import threading
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .errors import InputError, ResourceError, SolverError

if TYPE_CHECKING:
    from .model import StageTemplate

__all__ = [
    "FEAS_TOL", "OPT_TOL", "INT_TOL",
    "LinearProgram", "SolveResult", "solve_lp", "solve_mip",
    "StageSolution", "fix_state_and_solve", "combine_blocks",
]

FEAS_TOL = 1e-7
OPT_TOL = 1e-7
INT_TOL = 1e-6

_HIGHS_OPTIONS = {
    "primal_feasibility_tolerance": FEAS_TOL,
    "dual_feasibility_tolerance": OPT_TOL,
}

_dump_lock = threading.Lock()
_dump_counter = itertools.count()


@dataclass
class LinearProgram:
    """min c @ x subject to A_ub x <= b_ub, A_eq x = b_eq, lb <= x <= ub.

    ``integer`` marks binary decisions; bounds of marked variables are
    intersected with [0, 1]. Matrices may be dense or scipy.sparse.
    """

    c: np.ndarray
    A_ub: object = None
    b_ub: np.ndarray | None = None
    A_eq: object = None
    b_eq: np.ndarray | None = None
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None
    integer: np.ndarray | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        n = self.c.size
        self.lb = np.full(n, -np.inf) if self.lb is None else np.asarray(self.lb, dtype=float)
        self.ub = np.full(n, np.inf) if self.ub is None else np.asarray(self.ub, dtype=float)
        if self.integer is None:
            self.integer = np.zeros(n, dtype=bool)
        else:
            self.integer = np.asarray(self.integer, dtype=bool)
        if not (self.lb.size == self.ub.size == self.integer.size == n):
            raise InputError("bound or integrality length does not match c")
        self.lb = np.where(self.integer, np.maximum(self.lb, 0.0), self.lb)
        self.ub = np.where(self.integer, np.minimum(self.ub, 1.0), self.ub)

    @property
    def n_vars(self) -> int:
        return self.c.size


@dataclass
class SolveResult:
    """Solver outcome. ``duals_*`` are None for infeasible/unbounded results
    and for mixed-integer solves."""

    status: str
    objective: float | None = None
    x: np.ndarray | None = None
    duals_ub: np.ndarray | None = None
    duals_eq: np.ndarray | None = None
    bound: float | None = None


def _maybe_dump(lp: LinearProgram, tag: str) -> None:
    directory = os.environ.get("PRESCRIPTOR_DUMP_LP")
    if not directory:
        return
    with _dump_lock:
        index = next(_dump_counter)
    os.makedirs(directory, exist_ok=True)
    path = os.path.join(directory, f"{tag}_{index:06d}.lp.txt")
    with open(path, "w") as fh:
        fh.write(f"minimize c@x, n_vars={lp.n_vars}\n")
        fh.write(f"c = {lp.c.tolist()}\n")
        for name, mat, rhs in (("ub", lp.A_ub, lp.b_ub), ("eq", lp.A_eq, lp.b_eq)):
            if mat is None:
                continue
            dense = mat.toarray() if sp.issparse(mat) else np.asarray(mat)
            for row, b in zip(dense, np.asarray(rhs, dtype=float)):
                op = "<=" if name == "ub" else "=="
                fh.write(f"{row.tolist()} {op} {b!r}\n")
        fh.write(f"lb = {lp.lb.tolist()}\nub = {lp.ub.tolist()}\n")
        fh.write(f"integer = {lp.integer.astype(int).tolist()}\n")


def solve_lp(lp: LinearProgram, _dump_tag: str = "lp") -> SolveResult:
    """Solve the continuous relaxation; integrality marks are ignored."""
    _maybe_dump(lp, _dump_tag)
    bounds = np.column_stack([lp.lb, lp.ub])
    res = linprog(lp.c, A_ub=lp.A_ub, b_ub=lp.b_ub, A_eq=lp.A_eq, b_eq=lp.b_eq,
                  bounds=bounds, method="highs", options=_HIGHS_OPTIONS)
    if res.status == 4:
        # presolve occasionally reports "numerical"; retry without it to
        # separate infeasible from unbounded
        res = linprog(lp.c, A_ub=lp.A_ub, b_ub=lp.b_ub, A_eq=lp.A_eq, b_eq=lp.b_eq,
                      bounds=bounds, method="highs",
                      options=dict(_HIGHS_OPTIONS, presolve=False))
    if res.status == 2:
        return SolveResult(status="infeasible")
    if res.status == 3:
        return SolveResult(status="unbounded")
    if res.status != 0:
        raise SolverError(f"simplex failed: status={res.status} message={res.message!r}")
    duals_ub = np.asarray(res.ineqlin.marginals) if lp.A_ub is not None else None
    duals_eq = np.asarray(res.eqlin.marginals) if lp.A_eq is not None else None
    return SolveResult(status="optimal", objective=float(res.fun), x=np.asarray(res.x),
                       duals_ub=duals_ub, duals_eq=duals_eq, bound=float(res.fun))


def solve_mip(lp: LinearProgram, node_limit: int = 1_000_000) -> SolveResult:
    """Best-bound branch-and-bound over the binary variables.

    Branches on the most fractional binary; nodes are explored in order of
    their parent relaxation bound. Raises :class:`ResourceError` carrying the
    incumbent and the best open bound when ``node_limit`` is exceeded.
    Duals are not defined for mixed-integer solves and are left None.
    """
    int_idx = np.flatnonzero(lp.integer)
    if int_idx.size == 0:
        return solve_lp(lp)
    _maybe_dump(lp, "mip")

    incumbent_x = None
    incumbent_val = np.inf
    tie = itertools.count()
    # heap entries: (parent bound, tie, lower-bound overrides, upper overrides)
    heap = [(-np.inf, next(tie), {}, {})]
    nodes = 0
    while heap:
        parent_bound, _, lb_over, ub_over = heapq.heappop(heap)
        if parent_bound >= incumbent_val - OPT_TOL:
            break  # best-bound order: everything left is no better
        if nodes >= node_limit:
            raise ResourceError(
                f"branch-and-bound node limit {node_limit} reached",
                incumbent=None if incumbent_x is None else incumbent_val,
                bound=parent_bound)
        nodes += 1
        lb = lp.lb.copy()
        ub = lp.ub.copy()
        for j, v in lb_over.items():
            lb[j] = max(lb[j], v)
        for j, v in ub_over.items():
            ub[j] = min(ub[j], v)
        relax = LinearProgram(lp.c, lp.A_ub, lp.b_ub, lp.A_eq, lp.b_eq, lb, ub)
        res = solve_lp(relax, _dump_tag="bnb")
        if res.status == "infeasible":
            continue
        if res.status == "unbounded":
            return SolveResult(status="unbounded")
        if res.objective >= incumbent_val - OPT_TOL:
            continue
        frac = np.abs(res.x[int_idx] - np.round(res.x[int_idx]))
        worst = int(np.argmax(frac))
        if frac[worst] <= INT_TOL:
            incumbent_x = res.x.copy()
            incumbent_x[int_idx] = np.round(incumbent_x[int_idx])
            incumbent_val = res.objective
            continue
        j = int(int_idx[worst])
        split = res.x[j]
        down = dict(ub_over); down[j] = float(np.floor(split))
        up = dict(lb_over); up[j] = float(np.ceil(split))
        heapq.heappush(heap, (res.objective, next(tie), dict(lb_over), down))
        heapq.heappush(heap, (res.objective, next(tie), up, dict(ub_over)))
    if incumbent_x is None:
        return SolveResult(status="infeasible")
    return SolveResult(status="optimal", objective=float(incumbent_val),
                       x=incumbent_x, bound=float(incumbent_val))


def combine_blocks(lps: list[LinearProgram]):
    """Stack independent programs block-diagonally into one.

    Independent subproblems solved in one call amortize solver startup by
    roughly an order of magnitude over solving them one by one. Returns the
    combined program plus per-block variable slices and equality-row slices,
    so objectives and duals can be read back per block: block i's objective
    is ``c[var_slices[i]] @ x[var_slices[i]]`` and its equality duals are
    ``duals_eq[eq_slices[i]]``.
    """
    var_off = np.concatenate([[0], np.cumsum([lp.n_vars for lp in lps])])
    eq_counts = [0 if lp.A_eq is None else np.asarray(lp.b_eq).size for lp in lps]
    eq_off = np.concatenate([[0], np.cumsum(eq_counts)])
    c = np.concatenate([lp.c for lp in lps])
    A_ub = sp.block_diag([sp.csr_matrix(lp.A_ub) for lp in lps], format="csr")
    b_ub = np.concatenate([np.asarray(lp.b_ub, dtype=float) for lp in lps])
    if eq_off[-1]:
        A_eq = sp.block_diag([sp.csr_matrix(lp.A_eq) for lp in lps], format="csr")
        b_eq = np.concatenate([np.asarray(lp.b_eq, dtype=float) for lp in lps])
    else:
        A_eq = b_eq = None
    lb = np.concatenate([lp.lb for lp in lps])
    ub = np.concatenate([lp.ub for lp in lps])
    integer = np.concatenate([lp.integer for lp in lps])
    combined = LinearProgram(c, A_ub, b_ub, A_eq, b_eq, lb, ub, integer)
    var_slices = [slice(var_off[i], var_off[i + 1]) for i in range(len(lps))]
    eq_slices = [slice(eq_off[i], eq_off[i + 1]) for i in range(len(lps))]
    return combined, var_slices, eq_slices


@dataclass
class StageSolution:
    """One-stage solve at a pinned state.

    ``value`` is the mixed-integer optimum when binaries are present,
    otherwise the LP optimum. ``state_duals`` always comes from the
    continuous relaxation (the basic duals of the ``state = s`` rows) and
    ``relax_value`` is that relaxation's optimum.
    """

    status: str
    value: float | None = None
    z: np.ndarray | None = None
    theta: float | None = None
    state_duals: np.ndarray | None = None
    relax_value: float | None = None


def stage_lp(template: "StageTemplate", state: np.ndarray, y: np.ndarray | None,
             cuts=(), theta_lb: float = 0.0, include_theta: bool | None = None,
             pin_state: bool = True) -> LinearProgram:
    """Assemble the one-stage problem as a LinearProgram.

    Variables are [z, state copy, theta]; the state copy is pinned by equality
    rows so its duals are the cut slopes. ``cuts`` is any iterable of objects
    with ``beta`` and ``pi`` attributes, interpreted as
    ``theta >= beta + pi @ (F z)``. ``include_theta`` defaults to "whenever
    the template has a transition"; with no cuts theta still enters, bounded
    below by ``theta_lb``, which then is its exact value. With
    ``pin_state=False`` the state is folded into the right-hand side instead
    (no equality rows, no state variables).
    """
    state = np.asarray(state, dtype=float)
    p = template.n_dec
    m = template.W.shape[0]
    if include_theta is None:
        include_theta = template.F is not None
    cuts = list(cuts) if include_theta else []
    n_state = template.n_state if pin_state else 0
    n = p + n_state + (1 if include_theta else 0)
    c = np.zeros(n)
    c[:p] = template.cost
    if include_theta:
        c[-1] = 1.0

    rhs = template.h.astype(float).copy()
    if y is not None and template.U.shape[1]:
        rhs = rhs + template.U @ np.asarray(y, dtype=float)
    rows = []
    if pin_state:
        block = np.zeros((m, n))
        block[:, :p] = template.W
        block[:, p:p + n_state] = -template.T_mat
        rows.append(block)
    else:
        block = np.zeros((m, n))
        block[:, :p] = template.W
        rows.append(block)
        rhs = rhs + template.T_mat @ state
    b_ub = [rhs]
    for cut in cuts:
        row = np.zeros(n)
        row[:p] = np.asarray(cut.pi, dtype=float) @ template.F
        row[-1] = -1.0
        rows.append(row[None, :])
        b_ub.append(np.array([-float(cut.beta)]))
    A_ub = np.vstack(rows)
    b_ub = np.concatenate(b_ub)

    A_eq = b_eq = None
    if pin_state:
        A_eq = np.zeros((n_state, n))
        A_eq[:, p:p + n_state] = np.eye(n_state)
        b_eq = state

    lb = np.concatenate([template.lb,
                         np.full(n_state, -np.inf),
                         [theta_lb] if include_theta else []])
    ub = np.concatenate([template.ub,
                         np.full(n_state, np.inf),
                         [np.inf] if include_theta else []])
    integer = np.concatenate([template.integer,
                              np.zeros(n_state + (1 if include_theta else 0), dtype=bool)])
    return LinearProgram(c, A_ub, b_ub, A_eq, b_eq, lb, ub, integer)


def fix_state_and_solve(template: "StageTemplate", state: np.ndarray,
                        y: np.ndarray | None = None, cuts=(),
                        theta_lb: float = 0.0,
                        include_theta: bool | None = None) -> StageSolution:
    """Solve one stage at a pinned incoming state.

    Returns the stage value, the decision, the cost-to-go variable, and the
    basic duals of the state-pinning rows (from the continuous relaxation
    when binary decisions are present).
    """
    if include_theta is None:
        include_theta = template.F is not None
    lp = stage_lp(template, state, y, cuts, theta_lb, include_theta)
    has_theta = include_theta
    relax = solve_lp(lp, _dump_tag="stage")
    if relax.status != "optimal":
        return StageSolution(status=relax.status)
    p = template.n_dec
    duals = relax.duals_eq
    if lp.integer.any():
        mip = solve_mip(lp)
        if mip.status != "optimal":
            return StageSolution(status=mip.status, relax_value=relax.objective,
                                 state_duals=duals)
        return StageSolution(status="optimal", value=mip.objective, z=mip.x[:p],
                             theta=float(mip.x[-1]) if has_theta else None,
                             state_duals=duals, relax_value=relax.objective)
    return StageSolution(status="optimal", value=relax.objective, z=relax.x[:p],
                         theta=float(relax.x[-1]) if has_theta else None,
                         state_duals=duals, relax_value=relax.objective)
