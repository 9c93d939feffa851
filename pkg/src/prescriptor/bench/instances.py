"""Stage templates for the two benchmark problems.

Both problems track the state (end inventory, cumulative advance orders,
in-transit advance order). Advance orders placed at stage t cost c1 per unit
and arrive at t+1; immediate orders arrive instantly but cost more. The
inventory problem allows backlogging at a penalty and its immediate order is
continuous; the lot-sizing problem forbids backlog and replaces the
continuous immediate order with M binary fixed-quantity options.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..errors import InputError
from ..model import ProblemInstance, StageTemplate, validate
from ..seeding import Stream, substream
from ..training import TrainingSet
from ..weights import WeightSpec

__all__ = [
    "InventoryParams", "LotSizingParams", "default_unit_prices",
    "build_inventory_instance", "build_lotsizing_instance",
]


@dataclass(frozen=True)
class InventoryParams:
    """Costs and budget schedule of the inventory control problem.

    ``c_b`` is the (negative) backlog slope: a shortfall of one unit for one
    stage costs ``-c_b``. The end-of-stage inventory cost is
    max(c_b * I, c_h * I), linearized below with an epigraph variable.
    Cumulative advance orders through stage t may not exceed
    ``budget_rate * (t + 1)``.
    """

    c1: float = 5.0
    c2: float = 10.0
    c_h: float = 5.0
    c_b: float = -10.0
    budget_rate: float = 50.0
    initial_inventory: float = 0.0

    def __post_init__(self):
        if not self.c1 < self.c2:
            raise InputError(f"advance price c1={self.c1} must be below "
                             f"immediate price c2={self.c2}")
        if self.c_h < 0 or self.c_b > 0:
            raise InputError("need c_h >= 0 and c_b <= 0 so the inventory "
                             "penalty max(c_b I, c_h I) is nonnegative")


@dataclass(frozen=True)
class LotSizingParams:
    """Costs of the lot-sizing variant: M binary immediate-order options.

    Option j delivers ``quantities[j]`` units instantly at ``unit_prices[j]``
    per unit. Leave ``unit_prices`` as None to draw them uniformly from
    (5, 10) via :func:`default_unit_prices` with ``price_seed``. Backlog is
    forbidden, so demand must stay within ``demand_cap`` and the options must
    be able to cover it: sum(quantities) >= demand_cap.
    """

    quantities: tuple = (20.0, 40.0, 60.0, 80.0, 100.0)
    unit_prices: tuple | None = None
    c1: float = 5.0
    c_h: float = 5.0
    budget_rate: float = 50.0
    demand_cap: float = 200.0
    price_seed: int = 0

    def __post_init__(self):
        if not self.quantities:
            raise InputError("need at least one immediate-order option")
        if sum(self.quantities) < self.demand_cap:
            raise InputError(
                f"options cover at most {sum(self.quantities)} units per stage "
                f"but demand may reach {self.demand_cap}; no feasible recourse")
        if self.unit_prices is not None:
            if len(self.unit_prices) != len(self.quantities):
                raise InputError(f"{len(self.unit_prices)} unit prices for "
                                 f"{len(self.quantities)} options")
            if min(self.unit_prices) <= self.c1:
                raise InputError("every immediate unit price must exceed the "
                                 f"advance price c1={self.c1}")

    @property
    def m_options(self) -> int:
        return len(self.quantities)

    def resolved(self) -> "LotSizingParams":
        """Copy with unit prices drawn if they were left unset."""
        if self.unit_prices is not None:
            return self
        prices = default_unit_prices(self.price_seed, self.m_options)
        return replace(self, unit_prices=prices)


def default_unit_prices(seed: int, m: int) -> tuple:
    """M unit prices uniform on (5, 10), fixed by the seed."""
    rng = substream(seed, Stream.LOTSIZE_PRICES)
    return tuple(float(v) for v in rng.uniform(5.0, 10.0, size=m))


def _state_ranges(t: int, inv_lo: float, inv_hi: float, rate: float) -> np.ndarray:
    """Probe box for the state entering stage t: inventory, cumulative
    advance orders so far, and the in-transit order, the last two bounded by
    the budget already released."""
    released = rate * t
    return np.array([[inv_lo, inv_hi],
                     [0.0, max(released, 1.0)],
                     [0.0, max(released, 1.0)]])


def build_inventory_instance(params: InventoryParams, training: TrainingSet,
                             initial_covariate: np.ndarray | None = None,
                             initial_demand: float = 0.0,
                             weight_spec=None,
                             name: str = "inventory") -> ProblemInstance:
    """Stage templates for the inventory control problem.

    Decision layout per stage: [z1 advance, z2 immediate, u inventory-cost
    epigraph, I end inventory, A cumulative advance]. The state carried
    between stages is (I, A, z1). Stage-0 demand is a known constant
    (``initial_demand``), folded into the right-hand side.
    """
    T = training.horizon
    c1, c2, ch, cb = params.c1, params.c2, params.c_h, params.c_b
    rate = params.budget_rate
    cost = np.array([c1, c2, 1.0, 0.0, 0.0])
    W = np.array([
        [0.0, -1.0, 0.0, 1.0, 0.0],    # I = J + P + z2 - y
        [0.0, 1.0, 0.0, -1.0, 0.0],
        [-1.0, 0.0, 0.0, 0.0, 1.0],    # A = A_prev + z1
        [1.0, 0.0, 0.0, 0.0, -1.0],
        [0.0, 0.0, 0.0, 0.0, 1.0],     # cumulative budget
        [0.0, 0.0, -1.0, ch, 0.0],     # u >= c_h I
        [0.0, 0.0, -1.0, cb, 0.0],     # u >= c_b I
    ])
    T_mat = np.array([
        [1.0, 0.0, 1.0],
        [-1.0, 0.0, -1.0],
        [0.0, 1.0, 0.0],
        [0.0, -1.0, 0.0],
        [0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0],
    ])
    U = np.array([[-1.0], [1.0], [0.0], [0.0], [0.0], [0.0], [0.0]])
    F = np.array([
        [0.0, 0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 0.0, 1.0],
        [1.0, 0.0, 0.0, 0.0, 0.0],
    ])
    lb = np.array([0.0, 0.0, 0.0, -np.inf, -np.inf])
    ub = np.full(5, np.inf)
    integer = np.zeros(5, dtype=bool)

    stages = []
    for t in range(T + 1):
        h = np.array([0.0, 0.0, 0.0, 0.0, rate * (t + 1), 0.0, 0.0])
        if t == 0:
            h[0] = -initial_demand
            h[1] = initial_demand
            U_t = np.zeros((7, 0))
        else:
            U_t = U
        stages.append(StageTemplate(
            t=t, cost=cost, W=W, h=h, T_mat=T_mat, U=U_t,
            F=None if t == T else F, lb=lb, ub=ub, integer=integer,
            state_ranges=_state_ranges(t, -300.0, 300.0, rate)))

    if initial_covariate is None:
        initial_covariate = np.zeros(training.d_x)
    instance = ProblemInstance(
        stages=stages,
        initial_state=np.array([params.initial_inventory, 0.0, 0.0]),
        initial_covariate=np.asarray(initial_covariate, dtype=float),
        training=training,
        weight_spec=weight_spec if weight_spec is not None else WeightSpec(),
        name=name)
    findings = validate(instance)
    if findings:
        raise InputError("inventory instance failed validation", findings)
    return instance


def build_lotsizing_instance(params: LotSizingParams, training: TrainingSet,
                             initial_covariate: np.ndarray | None = None,
                             initial_demand: float = 0.0,
                             weight_spec=None,
                             name: str = "lotsizing") -> ProblemInstance:
    """Stage templates for the lot-sizing problem.

    Decision layout per stage: [z1 advance, z2_1..z2_M binary options,
    I end inventory, A cumulative advance]; I >= 0 forbids backlog. Holding
    cost enters the objective directly since inventory cannot go negative.
    """
    params = params.resolved()
    T = training.horizon
    q = np.asarray(params.quantities, dtype=float)
    prices = np.asarray(params.unit_prices, dtype=float)
    M = params.m_options
    rate = params.budget_rate
    n = M + 3
    cost = np.concatenate([[params.c1], prices * q, [params.c_h, 0.0]])
    W = np.zeros((5, n))
    W[0, 1:M + 1] = -q          # I = J + P + sum q_j z2_j - y
    W[0, M + 1] = 1.0
    W[1] = -W[0]
    W[2, 0] = -1.0              # A = A_prev + z1
    W[2, M + 2] = 1.0
    W[3] = -W[2]
    W[4, M + 2] = 1.0           # cumulative budget
    T_mat = np.array([
        [1.0, 0.0, 1.0],
        [-1.0, 0.0, -1.0],
        [0.0, 1.0, 0.0],
        [0.0, -1.0, 0.0],
        [0.0, 0.0, 0.0],
    ])
    U = np.array([[-1.0], [1.0], [0.0], [0.0], [0.0]])
    F = np.zeros((3, n))
    F[0, M + 1] = 1.0
    F[1, M + 2] = 1.0
    F[2, 0] = 1.0
    lb = np.concatenate([[0.0], np.zeros(M), [0.0, -np.inf]])
    ub = np.concatenate([[np.inf], np.ones(M), [np.inf, np.inf]])
    integer = np.concatenate([[False], np.ones(M, dtype=bool), [False, False]])

    stages = []
    for t in range(T + 1):
        h = np.array([0.0, 0.0, 0.0, 0.0, rate * (t + 1)])
        if t == 0:
            h[0] = -initial_demand
            h[1] = initial_demand
            U_t = np.zeros((5, 0))
        else:
            U_t = U
        stages.append(StageTemplate(
            t=t, cost=cost, W=W, h=h, T_mat=T_mat, U=U_t,
            F=None if t == T else F, lb=lb, ub=ub, integer=integer,
            state_ranges=_state_ranges(t, 0.0, 400.0, rate)))

    if initial_covariate is None:
        initial_covariate = np.zeros(training.d_x)
    instance = ProblemInstance(
        stages=stages,
        initial_state=np.zeros(3),
        initial_covariate=np.asarray(initial_covariate, dtype=float),
        training=training,
        weight_spec=weight_spec if weight_spec is not None else WeightSpec(),
        name=name)
    findings = validate(instance)
    if findings:
        raise InputError("lot-sizing instance failed validation", findings)
    return instance
