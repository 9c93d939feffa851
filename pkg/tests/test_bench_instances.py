"""Benchmark stage templates: parameter validation, clean instances, and
hand-checkable optimal decisions."""

import numpy as np
import pytest

from prescriptor import InputError
from prescriptor.bench.instances import (InventoryParams, LotSizingParams,
                                         build_inventory_instance,
                                         build_lotsizing_instance,
                                         default_unit_prices)
from prescriptor.exact import solve_extensive
from prescriptor.model import validate
from prescriptor.training import TrainingSet
from conftest import FixedWeights


def flat_training(n=3, horizon=2, demand=0.0):
    return TrainingSet(covariates=np.zeros((n, horizon, 3)),
                       uncertainties=np.full((n, horizon, 1), float(demand)))


def test_inventory_params_validation():
    with pytest.raises(InputError):
        InventoryParams(c1=10.0, c2=10.0)
    with pytest.raises(InputError):
        InventoryParams(c_h=-1.0)
    with pytest.raises(InputError):
        InventoryParams(c_b=2.0)


def test_lotsizing_params_validation():
    with pytest.raises(InputError):
        LotSizingParams(quantities=())
    with pytest.raises(InputError):
        LotSizingParams(quantities=(20.0, 40.0), demand_cap=100.0)
    with pytest.raises(InputError):
        LotSizingParams(unit_prices=(6.0,), quantities=(20.0, 40.0),
                        demand_cap=50.0)
    with pytest.raises(InputError):
        LotSizingParams(unit_prices=(4.0, 6.0, 6.0, 6.0, 6.0))


def test_default_unit_prices_deterministic_and_ranged():
    a = default_unit_prices(3, 5)
    assert a == default_unit_prices(3, 5)
    assert len(a) == 5
    assert all(5.0 < p < 10.0 for p in a)
    assert a != default_unit_prices(4, 5)


def test_lotsizing_price_resolution():
    params = LotSizingParams(price_seed=2)
    resolved = params.resolved()
    assert resolved.unit_prices == default_unit_prices(2, 5)
    explicit = LotSizingParams(unit_prices=(6.0, 6.5, 7.0, 7.5, 8.0))
    assert explicit.resolved() is explicit


def test_both_instances_validate_clean():
    training = flat_training(demand=40.0)
    inv = build_inventory_instance(InventoryParams(), training)
    lot = build_lotsizing_instance(LotSizingParams(), training)
    assert validate(inv) == []
    assert validate(lot) == []
    assert inv.horizon == lot.horizon == 2


def test_integer_masks():
    training = flat_training(demand=40.0)
    inv = build_inventory_instance(InventoryParams(), training)
    lot = build_lotsizing_instance(LotSizingParams(), training)
    for st in inv.stages:
        assert not st.integer.any()
    M = 5
    for st in lot.stages:
        assert np.array_equal(np.flatnonzero(st.integer),
                              np.arange(1, M + 1))


def test_builders_reject_mismatched_demand_width():
    bad = TrainingSet(covariates=np.zeros((3, 2, 3)),
                      uncertainties=np.zeros((3, 2, 2)))
    with pytest.raises(InputError):
        build_inventory_instance(InventoryParams(), bad)
    with pytest.raises(InputError):
        build_lotsizing_instance(LotSizingParams(), bad)


def test_inventory_initial_demand_hand_value():
    """Stage-0 demand can only be met immediately at c2 = 10."""
    training = flat_training(n=2, horizon=1, demand=0.0)
    inst = build_inventory_instance(InventoryParams(), training,
                                    initial_demand=7.0)
    sol = solve_extensive(inst, weight_models=[FixedWeights([0.5, 0.5])])
    assert np.isclose(sol.objective, 70.0)


def test_zero_demand_needs_no_orders():
    training = flat_training(n=2, horizon=2, demand=0.0)
    models = [FixedWeights([0.5, 0.5])] * 2
    inv = build_inventory_instance(InventoryParams(), training)
    lot = build_lotsizing_instance(LotSizingParams(), training)
    assert np.isclose(solve_extensive(inv, weight_models=models).objective, 0.0)
    sol = solve_extensive(lot, weight_models=models).objective
    assert np.isclose(sol, 0.0)


def test_lotsizing_picks_cheapest_covering_option():
    """Demand 20 with advance orders budgeted out: the 20-unit option alone
    covers it; anything else over-orders and pays holding on the excess."""
    training = flat_training(n=1, horizon=1, demand=20.0)
    params = LotSizingParams(budget_rate=0.0,
                             unit_prices=(6.0, 6.0, 6.0, 6.0, 6.0))
    inst = build_lotsizing_instance(params, training)
    sol = solve_extensive(inst, weight_models=[FixedWeights([1.0])])
    assert np.isclose(sol.objective, 120.0)
    leaf = next(n for n in sol.tree.nodes if not n.children)
    bits = sol.decisions[leaf.index][1:6]
    assert np.allclose(bits, [1.0, 0.0, 0.0, 0.0, 0.0])


def test_inventory_advance_orders_when_predictable():
    """Known stage-1 demand favours the cheaper advance channel."""
    training = flat_training(n=1, horizon=1, demand=30.0)
    inst = build_inventory_instance(InventoryParams(), training)
    sol = solve_extensive(inst, weight_models=[FixedWeights([1.0])])
    assert np.isclose(sol.objective, 150.0)
    z1 = sol.first_stage[0]
    assert np.isclose(z1, 30.0)


def test_lotsizing_backlog_forbidden():
    training = flat_training(n=2, horizon=1, demand=40.0)
    lot = build_lotsizing_instance(LotSizingParams(), training)
    for st in lot.stages:
        assert st.lb[6] == 0.0
    inv = build_inventory_instance(InventoryParams(), training)
    assert inv.stages[0].lb[3] == -np.inf
