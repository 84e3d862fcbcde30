"""Optimal decision trees for separable tasks by dynamic programming over subtrees."""
from .core import (
    Branch,
    CapabilityError,
    ContractError,
    Dataset,
    Leaf,
    OptimizationTask,
    ParetoFront,
    State,
    feas,
    merge,
    nondom,
    opt,
    predict,
    render_tree,
    tree_cost,
    tree_feasible,
    tree_from_dict,
    tree_from_json,
    tree_to_json,
)
from .solver import Solver, SolverConfig, hypertune_nodes, leaf_solve, solve
from .tasks import (
    CostSpec,
    FairnessSpec,
    PolicySpec,
    accuracy_task,
    combine_tasks,
    cost_sensitive_task,
    f1_from_front,
    f1_task,
    fairness_task,
    per_class_task,
    policy_task,
    standard_cost,
    threshold_wrap,
)

__version__ = "0.1.0"

__all__ = [
    "accuracy_task",
    "Branch",
    "CapabilityError",
    "combine_tasks",
    "ContractError",
    "cost_sensitive_task",
    "CostSpec",
    "Dataset",
    "f1_from_front",
    "f1_task",
    "fairness_task",
    "FairnessSpec",
    "feas",
    "hypertune_nodes",
    "Leaf",
    "leaf_solve",
    "merge",
    "nondom",
    "opt",
    "OptimizationTask",
    "ParetoFront",
    "per_class_task",
    "policy_task",
    "PolicySpec",
    "predict",
    "render_tree",
    "solve",
    "Solver",
    "SolverConfig",
    "standard_cost",
    "State",
    "threshold_wrap",
    "tree_cost",
    "tree_feasible",
    "tree_from_dict",
    "tree_from_json",
    "tree_to_json",
]
