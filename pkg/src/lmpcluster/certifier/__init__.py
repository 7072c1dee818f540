"""Numerical certification of the approximation constants."""

from .cases import (
    KMEANS_DELTAS,
    KMEDIAN_DELTAS,
    CaseBound,
    Deltas,
    default_deltas,
    default_p0,
    default_p1,
    enumerate_case_bounds,
    eval_case_bound,
    group_rho,
    p_range,
    rho,
    rho_breakdown,
)
from .grid import (
    CertReport,
    GridConfig,
    build_cell_system,
    cell_margins,
    final_ratio_bound,
    grid_certify,
    point_feasible,
    ratio_caps,
)
from .lp import CyclingError, LinearSystem, LpResult, Verdict, lp_feasible
from .oracles import OracleReport, closed_form_oracles

__all__ = [
    "KMEANS_DELTAS", "KMEDIAN_DELTAS", "CaseBound", "Deltas", "default_deltas", "default_p0",
    "default_p1", "enumerate_case_bounds", "eval_case_bound", "group_rho", "p_range", "rho",
    "rho_breakdown", "CertReport", "GridConfig", "build_cell_system", "cell_margins",
    "final_ratio_bound", "grid_certify", "point_feasible", "ratio_caps", "CyclingError",
    "LinearSystem", "LpResult", "Verdict", "lp_feasible", "OracleReport", "closed_form_oracles",
]
