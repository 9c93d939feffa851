"""Multistage problem representation.

A problem has stages 0..T. Stage t observes an uncertain vector y_t (stages
1..T) and a covariate x_t, then picks a decision z_t inside the polyhedron

    W_t z <= h_t + T_t s_t + U_t y_t,    lb_t <= z <= ub_t,

paying cost ``cost_t @ z``; the next state is the linear image
s_{t+1} = F_t z_t. Affine offsets are modeled the usual way, with a constant
decision pinned to 1 by its bounds. Binary decisions are flagged in
``integer``; everything else is continuous.

A scenario tree discretizes the uncertainty by branching, at each node, over
the training samples the stage's weight function assigns positive weight at
the node's covariate; each node stores the product of branch weights along
its path, so a leaf's ``prob`` is the probability of that whole scenario.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, ResourceError
from .training import TrainingSet
from .weights import WeightSpec, fit_stage_models

__all__ = [
    "StageTemplate", "ProblemInstance", "TreeNode", "ScenarioTree",
    "build_scenario_tree", "validate",
    "instance_to_json", "instance_from_json",
]


@dataclass
class StageTemplate:
    """Constraint data of one stage; ``F`` is None at the final stage."""

    t: int
    cost: np.ndarray
    W: np.ndarray
    h: np.ndarray
    T_mat: np.ndarray
    U: np.ndarray
    F: np.ndarray | None
    lb: np.ndarray
    ub: np.ndarray
    integer: np.ndarray
    state_ranges: np.ndarray | None = None  # (n_state, 2) hints for lookahead probes

    def __post_init__(self):
        self.cost = np.asarray(self.cost, dtype=float)
        self.W = np.atleast_2d(np.asarray(self.W, dtype=float))
        self.h = np.asarray(self.h, dtype=float)
        self.T_mat = np.atleast_2d(np.asarray(self.T_mat, dtype=float))
        self.U = np.atleast_2d(np.asarray(self.U, dtype=float))
        if self.F is not None:
            self.F = np.atleast_2d(np.asarray(self.F, dtype=float))
        self.lb = np.asarray(self.lb, dtype=float)
        self.ub = np.asarray(self.ub, dtype=float)
        self.integer = np.asarray(self.integer, dtype=bool)
        if self.state_ranges is not None:
            self.state_ranges = np.asarray(self.state_ranges, dtype=float)

    @property
    def n_dec(self) -> int:
        return self.cost.size

    @property
    def n_state(self) -> int:
        return self.T_mat.shape[1]

    @property
    def d_y(self) -> int:
        return self.U.shape[1]

    def findings(self) -> list[str]:
        """Dimension and sign problems, one message each; empty when clean."""
        out = []
        p, m = self.n_dec, self.W.shape[0]
        if p == 0:
            out.append(f"stage {self.t}: empty stage (no decisions)")
        if self.W.shape != (m, p) and p:
            out.append(f"stage {self.t}: W shape {self.W.shape} != ({m}, {p})")
        if self.h.size != m:
            out.append(f"stage {self.t}: h length {self.h.size} != {m} rows")
        if self.T_mat.shape[0] != m:
            out.append(f"stage {self.t}: T has {self.T_mat.shape[0]} rows, expected {m}")
        if self.U.shape[0] != m:
            out.append(f"stage {self.t}: U has {self.U.shape[0]} rows, expected {m}")
        if self.lb.size != p or self.ub.size != p or self.integer.size != p:
            out.append(f"stage {self.t}: bounds/integrality length != {p} decisions")
        elif (self.lb > self.ub).any():
            out.append(f"stage {self.t}: lb > ub for decisions "
                       f"{np.flatnonzero(self.lb > self.ub).tolist()}")
        if self.F is not None and self.F.shape[1] != p:
            out.append(f"stage {self.t}: F has {self.F.shape[1]} columns, expected {p}")
        # unbounded-below detection from bounds alone: a decision with
        # negative cost, no upper bound, and no constraint row capping it
        if self.lb.size == p and self.W.shape == (m, p):
            for j in range(p):
                if (self.cost[j] < 0 and np.isinf(self.ub[j])
                        and (m == 0 or (self.W[:, j] <= 0).all())):
                    out.append(f"stage {self.t}: decision {j} has negative cost and "
                               "no finite or constraint upper bound (cost unbounded below)")
        return out


@dataclass
class ProblemInstance:
    """Stage templates plus data: initial state/covariate, training set, and
    the weight learner configuration (one spec, or one per stage 1..T)."""

    stages: list[StageTemplate]
    initial_state: np.ndarray
    initial_covariate: np.ndarray
    training: TrainingSet
    weight_spec: WeightSpec | list[WeightSpec] = field(default_factory=WeightSpec)
    name: str = ""

    def __post_init__(self):
        self.initial_state = np.asarray(self.initial_state, dtype=float)
        self.initial_covariate = np.asarray(self.initial_covariate, dtype=float)

    @property
    def horizon(self) -> int:
        return len(self.stages) - 1

    def fit_weight_models(self) -> list:
        return fit_stage_models(self.weight_spec, self.training)


def validate(instance: ProblemInstance) -> list[str]:
    """Every problem found, one message per finding; [] means clean.

    Nonlinear structure cannot be expressed in this representation, so there
    is nothing to reject on that front; checks cover dimension chains across
    stages, horizon/data agreement, and cost directions unbounded below that
    are detectable from bounds alone.
    """
    findings = []
    T = instance.horizon
    if T < 0 or not instance.stages:
        return ["no stages"]
    for st in instance.stages:
        findings.extend(st.findings())
    for t, st in enumerate(instance.stages):
        if st.t != t:
            findings.append(f"stage {t}: template labeled t={st.t}")
    if instance.stages[-1].F is not None:
        findings.append(f"stage {T}: final stage must not have a transition")
    for t in range(T):
        st, nxt = instance.stages[t], instance.stages[t + 1]
        if st.F is None:
            findings.append(f"stage {t}: missing transition F")
        elif st.F.shape[0] != nxt.n_state:
            findings.append(f"stage {t}: F maps to {st.F.shape[0]} states but stage "
                            f"{t + 1} expects {nxt.n_state}")
    if instance.stages[0].n_state != instance.initial_state.size:
        findings.append(f"initial state has {instance.initial_state.size} entries, "
                        f"stage 0 expects {instance.stages[0].n_state}")
    if instance.stages[0].d_y != 0:
        findings.append("stage 0 must not depend on an uncertainty (d_y != 0)")
    if instance.training.horizon != T:
        findings.append(f"training horizon {instance.training.horizon} != problem "
                        f"horizon {T}")
    else:
        for t in range(1, T + 1):
            if instance.stages[t].d_y != instance.training.d_y:
                findings.append(f"stage {t}: d_y {instance.stages[t].d_y} != training "
                                f"d_y {instance.training.d_y}")
        if instance.initial_covariate.size != instance.training.d_x:
            findings.append(f"initial covariate has {instance.initial_covariate.size} "
                            f"entries, training d_x is {instance.training.d_x}")
    return findings


# ---------------------------------------------------------------------------
# scenario trees


@dataclass
class TreeNode:
    """One node: the sample whose (y, x) it carries, its path probability,
    and tree wiring. The root carries the initial covariate and no
    uncertainty."""

    index: int
    depth: int
    parent: int
    sample: int           # training-sample index; -1 at the root
    prob: float           # product of branch weights from the root; 1.0 there
    x: np.ndarray | None  # covariate used to branch into the next stage
    y: np.ndarray | None
    children: list[int] = field(default_factory=list)


@dataclass
class ScenarioTree:
    nodes: list[TreeNode]

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    def path_probability(self, index: int) -> float:
        """Stored directly on the node; kept as the reading-side name."""
        return self.nodes[index].prob

    def leaves(self) -> list[int]:
        return [n.index for n in self.nodes if not n.children]


def build_scenario_tree(instance: ProblemInstance, weight_models: list | None = None,
                        node_cap: int | None = None) -> ScenarioTree:
    """Enumerate the weighted branching structure down to stage T.

    Children of a depth-t node are the training samples with positive stage
    t+1 weight at the node's covariate. With k-nearest-neighbor weights at
    every stage the leaf count is exactly k^T. The default node cap is 10^6,
    tightened to 10^4 when any stage has binary decisions; exceeding it
    raises :class:`ResourceError` naming the offending depth.
    """
    if weight_models is None:
        weight_models = instance.fit_weight_models()
    T = instance.horizon
    if len(weight_models) != T:
        raise InputError(f"need {T} stage weight models, got {len(weight_models)}")
    if node_cap is None:
        any_binary = any(st.integer.any() for st in instance.stages)
        node_cap = 10_000 if any_binary else 1_000_000
    training = instance.training
    root = TreeNode(index=0, depth=0, parent=-1, sample=-1, prob=1.0,
                    x=instance.initial_covariate, y=None)
    nodes = [root]
    frontier = [root]
    for t in range(1, T + 1):
        model = weight_models[t - 1]
        queries = np.vstack([node.x for node in frontier])
        weights = model.weights_batch(queries)
        next_frontier = []
        for node, w in zip(frontier, weights):
            support = np.flatnonzero(w > 0.0)
            if len(nodes) + support.size > node_cap:
                raise ResourceError(
                    f"scenario tree exceeds {node_cap} nodes at depth {t}; consider "
                    "k-nearest-neighbor weights (support k) or a shorter horizon",
                    incumbent=None, bound=None)
            for i in support:
                child = TreeNode(index=len(nodes), depth=t, parent=node.index,
                                 sample=int(i), prob=node.prob * float(w[i]),
                                 x=training.x(t)[i] if t < T else None,
                                 y=training.y(t)[i])
                node.children.append(child.index)
                nodes.append(child)
                next_frontier.append(child)
        frontier = next_frontier
    return ScenarioTree(nodes)


# ---------------------------------------------------------------------------
# serialization


def _matrix(doc: dict, key: str, rows: int, cols: int) -> np.ndarray:
    flat = np.asarray(doc[key], dtype=float)
    if flat.size != rows * cols:
        raise InputError(f"{key}: expected {rows}x{cols} entries, got {flat.size}")
    return flat.reshape(rows, cols)


def instance_to_json(instance: ProblemInstance, path: str) -> None:
    """Single JSON document; matrices are flattened row-major with explicit
    dimensions so there is no shape ambiguity on the wire."""
    stages = []
    for st in instance.stages:
        m, p = st.W.shape
        stages.append({
            "t": st.t, "n_dec": p, "n_rows": m, "n_state": st.n_state, "d_y": st.d_y,
            "cost": st.cost.tolist(),
            "W": st.W.ravel().tolist(), "h": st.h.tolist(),
            "T": st.T_mat.ravel().tolist(), "U": st.U.ravel().tolist(),
            "F": None if st.F is None else st.F.ravel().tolist(),
            "n_state_next": None if st.F is None else st.F.shape[0],
            "lb": [None if np.isneginf(v) else v for v in st.lb],
            "ub": [None if np.isposinf(v) else v for v in st.ub],
            "integer": st.integer.astype(int).tolist(),
            "state_ranges": None if st.state_ranges is None else st.state_ranges.tolist(),
        })
    spec = instance.weight_spec
    specs = [spec] if isinstance(spec, WeightSpec) else list(spec)
    doc = {
        "name": instance.name,
        "horizon": instance.horizon,
        "initial_state": instance.initial_state.tolist(),
        "initial_covariate": instance.initial_covariate.tolist(),
        "stages": stages,
        "weight_specs": [vars(s).copy() for s in specs],
        "training": {
            "covariates": instance.training.covariates.tolist(),
            "uncertainties": instance.training.uncertainties.tolist(),
            "metadata": instance.training.metadata,
        },
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def instance_from_json(path: str) -> ProblemInstance:
    with open(path) as fh:
        doc = json.load(fh)
    stages = []
    for sd in doc["stages"]:
        m, p, ns, dy = sd["n_rows"], sd["n_dec"], sd["n_state"], sd["d_y"]
        F = None
        if sd["F"] is not None:
            F = _matrix(sd, "F", sd["n_state_next"], p)
        stages.append(StageTemplate(
            t=sd["t"], cost=np.asarray(sd["cost"], dtype=float),
            W=_matrix(sd, "W", m, p), h=np.asarray(sd["h"], dtype=float),
            T_mat=_matrix(sd, "T", m, ns), U=_matrix(sd, "U", m, dy), F=F,
            lb=np.array([-np.inf if v is None else v for v in sd["lb"]]),
            ub=np.array([np.inf if v is None else v for v in sd["ub"]]),
            integer=np.asarray(sd["integer"], dtype=bool),
            state_ranges=None if sd.get("state_ranges") is None
            else np.asarray(sd["state_ranges"], dtype=float)))
    tr = doc["training"]
    training = TrainingSet(np.asarray(tr["covariates"], dtype=float),
                           np.asarray(tr["uncertainties"], dtype=float),
                           tr.get("metadata", {}))
    specs = [WeightSpec(**sd) for sd in doc["weight_specs"]]
    weight_spec = specs[0] if len(specs) == 1 else specs
    instance = ProblemInstance(stages, np.asarray(doc["initial_state"], dtype=float),
                               np.asarray(doc["initial_covariate"], dtype=float),
                               training, weight_spec, doc.get("name", ""))
    findings = validate(instance)
    if findings:
        raise InputError(f"{path}: invalid instance", findings=findings)
    return instance
