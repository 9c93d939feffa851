"""Benchmark problems: data generators, instances, policies, experiments."""

from .basestock import BasestockPolicy, execute_basestock, fit_basestock
from .experiment import (AggregateRow, ExperimentResult, ExperimentRow,
                         experiment_curve, write_aggregate_csv, write_rows_csv)
from .generators import (GeneratorConfig, demand_formula, generate_covariates,
                         generate_demand, generate_test, generate_training,
                         roll_ar1, stage_loadings)
from .instances import (InventoryParams, LotSizingParams,
                        build_inventory_instance, build_lotsizing_instance,
                        default_unit_prices)
from .policy import (ContinuationTables, PolicyConfig, PolicyRun,
                     PolicyRunSet, build_continuation_tables, run_policy)

__all__ = [
    "GeneratorConfig", "stage_loadings", "roll_ar1", "demand_formula",
    "generate_covariates", "generate_demand", "generate_training",
    "generate_test",
    "InventoryParams", "LotSizingParams", "default_unit_prices",
    "build_inventory_instance", "build_lotsizing_instance",
    "PolicyConfig", "ContinuationTables", "build_continuation_tables",
    "PolicyRun", "PolicyRunSet", "run_policy",
    "BasestockPolicy", "fit_basestock", "execute_basestock",
    "ExperimentRow", "AggregateRow", "ExperimentResult", "experiment_curve",
    "write_rows_csv", "write_aggregate_csv",
]
