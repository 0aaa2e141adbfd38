"""Hybrid zonotope reachability for piecewise-affine systems and an ADMM
heuristic for mixed-integer quadratic programs over hybrid zonotopes."""

from hzplan._backend import available_backends, backend_name, set_backend
from hzplan.errors import HZError
from hzplan.reach import (
    CostSpec,
    PWAMode,
    PWASystem,
    build_problem,
    lifted_step,
    reach_step,
    system_graph,
)
from hzplan.solver import SolverParams, SolverResult, Status, admm_fp, solve_convex_qp, warm_start_from_point
from hzplan.unions import union, union_condensed, union_sharp, union_zonotope
from hzplan.zonotope import (
    CANONICAL,
    ZERO_ONE,
    HybridZonotope,
    affine_map,
    box,
    cartesian_product,
    complexity,
    constrained_zonotope,
    contains_point,
    convert_form,
    convex_relaxation,
    generalized_intersection,
    minkowski_sum,
    point,
    zonotope,
)

__version__ = "0.1.0"

__all__ = [
    "CANONICAL", "ZERO_ONE", "HybridZonotope", "HZError", "CostSpec", "PWAMode", "PWASystem",
    "SolverParams", "SolverResult", "Status", "admm_fp", "affine_map", "available_backends",
    "backend_name", "box", "build_problem", "cartesian_product", "complexity",
    "constrained_zonotope", "contains_point", "convert_form", "convex_relaxation",
    "generalized_intersection", "lifted_step", "minkowski_sum", "point", "reach_step",
    "set_backend", "solve_convex_qp", "system_graph", "union", "union_condensed", "union_sharp",
    "union_zonotope", "warm_start_from_point", "zonotope",
]
