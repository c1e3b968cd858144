"""Frank-Wolfe for system-optimal and user-equilibrium traffic assignment."""
from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional, Sequence

import numpy as np

from .costs import CostTable, Transform
from .demand import InvalidRequest, Request, validate_demand
from .network import ExogenousLoad, RoadNetwork
from .paths import all_or_nothing


class Objective(str, enum.Enum):
    SYSTEM_OPTIMUM = "system-optimum"
    USER_EQUILIBRIUM = "user-equilibrium"

    @property
    def transform(self) -> Transform:
        return Transform.MARGINAL if self is Objective.SYSTEM_OPTIMUM else Transform.RAW


class Termination(str, enum.Enum):
    GAP_REACHED = "gap-reached"
    MAX_ITERATIONS = "max-iterations"


@dataclass(frozen=True)
class AssignmentProblem:
    """A network, its demand, background traffic and the objective to minimize.

    ``exogenous`` may be an :class:`ExogenousLoad` or an explicit per-edge array.
    """

    network: RoadNetwork
    requests: tuple[Request, ...]
    exogenous: ExogenousLoad | np.ndarray | None = None
    objective: Objective = Objective.SYSTEM_OPTIMUM
    validate: bool = field(default=True, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "requests", tuple(self.requests))
        object.__setattr__(self, "objective", Objective(self.objective))
        if self.validate:
            errors = validate_demand(self.network, self.requests)
            if errors:
                raise InvalidRequest("; ".join(errors))

    @cached_property
    def shift(self) -> np.ndarray:
        if self.exogenous is None:
            return np.zeros(self.network.edge_count)
        if isinstance(self.exogenous, ExogenousLoad):
            return self.exogenous.per_edge(self.network)
        shift = np.asarray(self.exogenous, dtype=float)
        if shift.shape != (self.network.edge_count,):
            raise ValueError("exogenous flows must match the edge count")
        return shift

    @cached_property
    def costs(self) -> CostTable:
        return self.network.costs.with_shift(self.shift)

    @property
    def transform(self) -> Transform:
        return self.objective.transform

    @property
    def total_demand(self) -> float:
        return float(sum(r.intensity for r in self.requests))


@dataclass(frozen=True)
class SolverConfig:
    max_iterations: int = 100
    rel_gap_tolerance: float = 1e-4
    line_search_iterations: int = 64
    trace_enabled: bool = True
    threads: int | None = None

    def __post_init__(self):
        if self.max_iterations < 1 or self.line_search_iterations < 1:
            raise ValueError("iteration limits must be positive")
        if self.rel_gap_tolerance < 0:
            raise ValueError("rel_gap_tolerance must be nonnegative")


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    alpha: float
    objective: float
    total_cost: float
    relative_gap: float
    elapsed_ms: float
    real_cost: float | None = None
    dummy_cost: float | None = None
    delta: float | None = None


@dataclass
class FrankWolfeResult:
    flows: np.ndarray
    trace: list[IterationRecord]
    termination: Termination
    iterations: int
    final_gap: float
    objective: float
    auxiliary: np.ndarray | None = None


Direction = Callable[[np.ndarray], "tuple[np.ndarray, Optional[np.ndarray]]"]
Monitor = Callable[[np.ndarray], dict]


def objective(problem: AssignmentProblem, x: np.ndarray) -> float:
    return float(np.sum(problem.costs.beckmann(x, problem.transform)))


def total_cost(problem: AssignmentProblem, x: np.ndarray) -> float:
    return problem.costs.total_cost(x)


def gradient_weights(problem: AssignmentProblem, x: np.ndarray) -> np.ndarray:
    return problem.costs.gradient(x, problem.transform)


def line_search(problem: AssignmentProblem, x: np.ndarray, y: np.ndarray, iterations: int = 64) -> float:
    """Exact step on the segment from ``x`` to ``y`` by bisection on the directional derivative."""
    return problem.costs.line_search(x, y, problem.transform, iterations)


def relative_gap(x: np.ndarray, y: np.ndarray, weights: np.ndarray) -> float:
    wx = float(np.dot(weights, x))
    if wx == 0:
        return 0.0
    return max(0.0, (wx - float(np.dot(weights, y))) / wx)


def _default_direction(problem: AssignmentProblem, threads: int | None) -> Direction:
    def direction(weights):
        return all_or_nothing(problem.network, weights, problem.requests, threads), None

    return direction


def initial_solution(problem: AssignmentProblem, threads: int | None = None) -> np.ndarray:
    """All-or-nothing on free-flow costs (plus any exogenous shift)."""
    weights = gradient_weights(problem, np.zeros(problem.network.edge_count))
    return all_or_nothing(problem.network, weights, problem.requests, threads)


def frank_wolfe(
    problem: AssignmentProblem,
    config: SolverConfig = SolverConfig(),
    *,
    x0: np.ndarray | None = None,
    direction: Direction | None = None,
    monitor: Monitor | None = None,
    on_iterate: Callable[[int, np.ndarray], None] | None = None,
) -> FrankWolfeResult:
    """Minimize the problem's objective over feasible flows.

    ``direction`` maps edge weights to the linearized minimizer ``y`` and an
    optional auxiliary vector that is averaged with the same step as the flows
    (the customer-loss variant uses it for per-request idle fractions).
    ``monitor`` adds ``real_cost`` / ``dummy_cost`` / ``delta`` to trace records.
    """
    start = time.perf_counter()
    direction = direction or _default_direction(problem, config.threads)
    if x0 is None:
        x, aux = direction(gradient_weights(problem, np.zeros(problem.network.edge_count)))
    else:
        x, aux = np.array(x0, dtype=float), None
    trace: list[IterationRecord] = []
    termination = Termination.MAX_ITERATIONS
    gap = np.inf
    for k in range(config.max_iterations):
        if on_iterate is not None:
            on_iterate(k, x)
        weights = gradient_weights(problem, x)
        y, aux_y = direction(weights)
        gap = relative_gap(x, y, weights)
        done = gap <= config.rel_gap_tolerance
        alpha = 0.0 if done else line_search(problem, x, y, config.line_search_iterations)
        if config.trace_enabled:
            extra = monitor(x) if monitor is not None else {}
            trace.append(
                IterationRecord(
                    iteration=k,
                    alpha=alpha,
                    objective=objective(problem, x),
                    total_cost=total_cost(problem, x),
                    relative_gap=gap,
                    elapsed_ms=1e3 * (time.perf_counter() - start),
                    **extra,
                )
            )
        if done:
            termination = Termination.GAP_REACHED
            break
        x = (1.0 - alpha) * x + alpha * y
        if aux is not None and aux_y is not None:
            aux = (1.0 - alpha) * aux + alpha * aux_y
    iterations = k + 1
    return FrankWolfeResult(
        flows=x,
        trace=trace,
        termination=termination,
        iterations=iterations,
        final_gap=float(gap),
        objective=objective(problem, x),
        auxiliary=aux,
    )
