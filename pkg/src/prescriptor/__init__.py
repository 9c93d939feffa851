"""Multistage stochastic optimization from data.

Historical sample paths of covariates and uncertainties, weighted by
machine-learned relevance to the current covariate, define a tractable
proxy for a conditional multistage stochastic program. This package fits
the weight functions (nearest neighbors, honest trees, random forests),
solves the weighted problem exactly on its scenario tree or by nested
Benders / Lagrangian decomposition, and ships two fully seeded synthetic
benchmarks with out-of-sample policy evaluation.
"""

__version__ = "0.1.0"

from .errors import (InfeasibleError, InputError, PrescriptorError,
                     ResourceError, SolverError, UnboundedError)
from .training import (TrainingSet, read_training_csv, read_training_json)
from .weights import (WeightSpec, SplitParams, default_k, default_subsample,
                      fit_forest, fit_stage_models, fit_tree, forest_weights,
                      knn_weights, tree_weights)
from .model import (ProblemInstance, ScenarioTree, StageTemplate,
                    build_scenario_tree, instance_from_json, instance_to_json,
                    validate)
from .exact import (ExactSolution, solve_extensive, subtree_value,
                    value_function_oracle)
from .sddp import (Cut, CutPool, SddpConfig, SddpRun, binary_expand,
                   export_cuts, import_cuts, solve_sddp)

__all__ = [
    "__version__",
    "PrescriptorError", "InputError", "SolverError", "InfeasibleError",
    "UnboundedError", "ResourceError",
    "TrainingSet", "read_training_csv", "read_training_json",
    "WeightSpec", "SplitParams", "default_k", "default_subsample",
    "knn_weights", "tree_weights", "forest_weights", "fit_tree", "fit_forest",
    "fit_stage_models",
    "StageTemplate", "ProblemInstance", "ScenarioTree", "build_scenario_tree",
    "validate", "instance_to_json", "instance_from_json",
    "ExactSolution", "solve_extensive", "subtree_value",
    "value_function_oracle",
    "Cut", "CutPool", "SddpConfig", "SddpRun", "solve_sddp", "binary_expand",
    "export_cuts", "import_cuts",
]
