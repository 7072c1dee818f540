"""Primal-dual approximation algorithms for Euclidean k-means and k-median."""

from .conflict_graph import ConflictGraph, build_conflict_graph, maximal_independent_set, warm_start_mis
from .core_model import (
    CenterSet,
    Instance,
    Objective,
    assignment_cost,
    brute_force_opt,
    load_instance,
    pair_cost,
    save_instance,
    validate_instance,
)
from .dual_growth import DualGrowthResult, check_dual_feasibility, grow_duals
from .generators import gen_lower_bound_instance, gen_random_instance, lower_bound_demo
from .nqis import NestedQIS, RoundingParams, build_nqis, expected_size, round_to_at_most_k, sample_solution
from .solver import (
    Bracket,
    CaseAccounting,
    LmpOutcome,
    SolverParams,
    assemble_k_solution,
    client_case_stats,
    lmp_solve,
    solve_k,
    sweep_lambda,
)

__version__ = "0.1.0"

__all__ = [
    "ConflictGraph", "build_conflict_graph", "maximal_independent_set", "warm_start_mis",
    "CenterSet", "Instance", "Objective", "assignment_cost", "brute_force_opt", "load_instance",
    "pair_cost", "save_instance", "validate_instance", "DualGrowthResult", "check_dual_feasibility",
    "grow_duals", "gen_lower_bound_instance", "gen_random_instance", "lower_bound_demo", "NestedQIS",
    "RoundingParams", "build_nqis", "expected_size", "round_to_at_most_k", "sample_solution",
    "Bracket", "CaseAccounting", "LmpOutcome", "SolverParams", "assemble_k_solution",
    "client_case_stats", "lmp_solve", "solve_k", "sweep_lambda",
]
