"""Traffic assignment and AMoD routing with Frank-Wolfe."""

__version__ = "0.1.0"

from .costs import (
    Bpr,
    Constant,
    CostTable,
    PiecewiseAffine,
    Transform,
    beckmann_term,
    edge_travel_time,
    make_piecewise_affine_from_bpr,
    marginal_travel_time,
    shifted_cost,
)
from .demand import ImbalanceProfile, InvalidRequest, Request, compute_imbalance, validate_demand
from .loss import LossGraph, LossSolution, all_or_nothing_loss, build_loss_graph, solve_amod_loss
from .network import Edge, EdgeClass, ExogenousLoad, RoadNetwork
from .paths import PathResult, Unreachable, all_or_nothing, shortest_path, shortest_path_tree
from .reduction import (
    AmodSolution,
    ReducedProblem,
    TargetUnreachable,
    build_reduction,
    delta_unfulfilled,
    extract_real_flows,
    solve_amod,
    theorem_L,
    tune_L,
)
from .solver import (
    AssignmentProblem,
    FrankWolfeResult,
    IterationRecord,
    Objective,
    SolverConfig,
    Termination,
    frank_wolfe,
)

__all__ = [
    "AmodSolution",
    "AssignmentProblem",
    "Bpr",
    "Constant",
    "CostTable",
    "Edge",
    "EdgeClass",
    "ExogenousLoad",
    "FrankWolfeResult",
    "ImbalanceProfile",
    "InvalidRequest",
    "IterationRecord",
    "LossGraph",
    "LossSolution",
    "Objective",
    "PathResult",
    "PiecewiseAffine",
    "ReducedProblem",
    "Request",
    "RoadNetwork",
    "SolverConfig",
    "TargetUnreachable",
    "Termination",
    "Transform",
    "Unreachable",
    "all_or_nothing",
    "all_or_nothing_loss",
    "beckmann_term",
    "build_loss_graph",
    "build_reduction",
    "compute_imbalance",
    "delta_unfulfilled",
    "edge_travel_time",
    "extract_real_flows",
    "frank_wolfe",
    "make_piecewise_affine_from_bpr",
    "marginal_travel_time",
    "shifted_cost",
    "shortest_path",
    "shortest_path_tree",
    "solve_amod",
    "solve_amod_loss",
    "theorem_L",
    "tune_L",
    "validate_demand",
]
