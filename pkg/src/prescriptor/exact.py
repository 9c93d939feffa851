"""Exact solution of the weighted multistage problem on its scenario tree.

The extensive form stacks one copy of each stage's decision vector per tree
node and substitutes states away: the state entering node ``n`` is the
transition applied to its parent's decisions, so only decisions remain as
variables. Constraints couple each node to its parent; the objective weighs
each node's stage cost by its path probability. The result is one sparse
linear (or mixed-binary) program whose optimum is the exact value of the
weighted dynamic program, and whose stage-0 decision is the policy action.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import InfeasibleError, InputError, UnboundedError
from .linopt import LinearProgram, solve_lp, solve_mip
from .model import ProblemInstance, ScenarioTree, build_scenario_tree

__all__ = ["ExactSolution", "solve_extensive", "subtree_value",
           "value_function_oracle"]


@dataclass
class ExactSolution:
    """Optimal value, per-node decisions, and the tree they live on."""

    objective: float
    decisions: list[np.ndarray]   # aligned with tree.nodes
    tree: ScenarioTree

    @property
    def first_stage(self) -> np.ndarray:
        return self.decisions[0]

    def state_after(self, node: int, instance: ProblemInstance) -> np.ndarray:
        """State produced by the node's decision (its children's incoming state)."""
        depth = self.tree.nodes[node].depth
        return instance.stages[depth].F @ self.decisions[node]


def _assemble(instance: ProblemInstance, tree: ScenarioTree,
              subtree_root: int = 0, root_state: np.ndarray | None = None):
    """Extensive form of the subtree hanging off ``subtree_root``.

    Returns (LinearProgram, node order, column offsets). Path probabilities
    are renormalized to the subtree root. ``root_state`` overrides the state
    entering the subtree root (defaults to the instance's initial state,
    which is only meaningful when the subtree root is the tree root).
    """
    stages = instance.stages
    if root_state is None:
        root_state = instance.initial_state
    order = []
    stack = [subtree_root]
    while stack:
        i = stack.pop()
        order.append(i)
        stack.extend(reversed(tree.nodes[i].children))
    position = {node: j for j, node in enumerate(order)}

    offsets = np.zeros(len(order) + 1, dtype=int)
    for j, node in enumerate(order):
        offsets[j + 1] = offsets[j] + stages[tree.nodes[node].depth].n_dec
    n = int(offsets[-1])

    c = np.zeros(n)
    lb = np.empty(n)
    ub = np.empty(n)
    integer = np.zeros(n, dtype=bool)
    rows_i, cols_i, vals = [], [], []
    b_ub = []
    row0 = 0
    root_depth = tree.nodes[subtree_root].depth
    root_prob = tree.nodes[subtree_root].prob
    for j, node_idx in enumerate(order):
        node = tree.nodes[node_idx]
        st = stages[node.depth]
        col = offsets[j]
        prob = node.prob / root_prob
        c[col:col + st.n_dec] = prob * st.cost
        lb[col:col + st.n_dec] = st.lb
        ub[col:col + st.n_dec] = st.ub
        integer[col:col + st.n_dec] = st.integer

        m = st.W.shape[0]
        rhs = st.h.astype(float).copy()
        if node.y is not None and st.d_y:
            rhs = rhs + st.U @ node.y
        ri, ci = np.nonzero(st.W)
        rows_i.append(row0 + ri)
        cols_i.append(col + ci)
        vals.append(st.W[ri, ci])
        if node.depth == root_depth:
            rhs = rhs + st.T_mat @ root_state
        else:
            parent = tree.nodes[node.parent]
            Fp = stages[parent.depth].F
            coupling = -st.T_mat @ Fp          # m x n_dec(parent)
            ri, ci = np.nonzero(coupling)
            rows_i.append(row0 + ri)
            cols_i.append(offsets[position[node.parent]] + ci)
            vals.append(coupling[ri, ci])
        b_ub.append(rhs)
        row0 += m

    A_ub = sp.coo_matrix(
        (np.concatenate(vals) if vals else [],
         (np.concatenate(rows_i) if rows_i else [],
          np.concatenate(cols_i) if cols_i else [])),
        shape=(row0, n)).tocsr()
    lp = LinearProgram(c, A_ub, np.concatenate(b_ub), lb=lb, ub=ub, integer=integer)
    return lp, order, offsets


def solve_extensive(instance: ProblemInstance, tree: ScenarioTree | None = None,
                    weight_models: list | None = None) -> ExactSolution:
    """Solve the full weighted problem exactly.

    Builds the scenario tree (honoring node caps) unless one is supplied,
    assembles the extensive form, and solves it; binary decisions anywhere
    make it a mixed-binary solve. Raises :class:`InfeasibleError` or
    :class:`UnboundedError` on those outcomes.
    """
    if tree is None:
        tree = build_scenario_tree(instance, weight_models)
    lp, order, offsets = _assemble(instance, tree)
    res = solve_mip(lp) if lp.integer.any() else solve_lp(lp, _dump_tag="extensive")
    if res.status == "infeasible":
        raise InfeasibleError(stage=0, scenario="extensive form")
    if res.status == "unbounded":
        raise UnboundedError("extensive form is unbounded below")
    decisions: list[np.ndarray] = [None] * tree.n_nodes  # type: ignore[list-item]
    for j, node in enumerate(order):
        decisions[node] = res.x[offsets[j]:offsets[j + 1]]
    return ExactSolution(objective=float(res.objective), decisions=decisions, tree=tree)


def subtree_value(instance: ProblemInstance, tree: ScenarioTree, node: int,
                  state: np.ndarray) -> float:
    """Exact cost-to-go at a tree node for a given incoming state.

    This is the extensive form restricted to the node's subtree, so it serves
    as a reference value function: cut collections and bounds produced by the
    decomposition solver can be checked against it pointwise.
    """
    lp, _, _ = _assemble(instance, tree, subtree_root=node,
                         root_state=np.asarray(state, dtype=float))
    res = solve_mip(lp) if lp.integer.any() else solve_lp(lp, _dump_tag="subtree")
    if res.status == "infeasible":
        raise InfeasibleError(stage=tree.nodes[node].depth, scenario=node)
    if res.status == "unbounded":
        raise UnboundedError(f"subtree at node {node} is unbounded below")
    return float(res.objective)


def value_function_oracle(instance: ProblemInstance, tree: ScenarioTree, t: int,
                          state: np.ndarray, node: int) -> float:
    """Stage-t cost-to-go at ``node`` and ``state``: the node's own stage cost
    plus the weighted expected continuation, evaluated by full enumeration of
    its subtree. Reference implementation for checking cuts; not fast."""
    if tree.nodes[node].depth != t:
        raise InputError(f"node {node} sits at depth {tree.nodes[node].depth}, not {t}")
    return subtree_value(instance, tree, node, state)
