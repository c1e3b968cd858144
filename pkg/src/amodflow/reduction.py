"""AMoD as traffic assignment on a graph with a dummy rebalancing sink.

Every shortage vertex ``i`` (``r_i < 0``) gets an edge ``(i, n)`` to a new sink
``n`` with BPR cost, capacity ``-r_i`` and free-flow time ``L``.  Every excess
vertex ``i`` (``r_i > 0``) sends a request of intensity ``r_i`` to ``n``.
Solving the resulting assignment with marginal costs routes passengers and
rebalancers together; large ``L`` pushes the dummy flows onto their
capacities.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .costs import DEFAULT_ALPHA, DEFAULT_BETA, DEFAULT_LINEARIZE_AT, Bpr, CostTable, exact
from .demand import ImbalanceProfile, InvalidRequest, Request, compute_imbalance, validate_demand
from .network import Edge, EdgeClass, ExogenousLoad, RoadNetwork
from .solver import (
    AssignmentProblem,
    FrankWolfeResult,
    IterationRecord,
    Objective,
    SolverConfig,
    Termination,
    frank_wolfe,
)

log = logging.getLogger(__name__)

DEFAULT_L = 96.0


class TargetUnreachable(RuntimeError):
    pass


@dataclass(frozen=True)
class DummyEdge:
    edge: int
    vertex: int
    capacity: float


@dataclass(frozen=True)
class ReducedProblem:
    original: RoadNetwork
    expanded: RoadNetwork
    requests: tuple[Request, ...]
    extended_requests: tuple[Request, ...]
    sink: int
    dummy_edges: tuple[DummyEdge, ...]
    L: float
    origin_edge_map: np.ndarray
    imbalance: ImbalanceProfile

    @property
    def dummy_index(self) -> np.ndarray:
        return np.array([d.edge for d in self.dummy_edges], dtype=np.int64)

    @property
    def kappa(self) -> np.ndarray:
        return np.array([d.capacity for d in self.dummy_edges])

    @property
    def total_rebalancing(self) -> float:
        return self.imbalance.total


def build_reduction(
    network: RoadNetwork,
    requests: Sequence[Request],
    L: float,
    *,
    alpha: float = DEFAULT_ALPHA,
    beta: int = DEFAULT_BETA,
    linearize_at: float | None = DEFAULT_LINEARIZE_AT,
) -> ReducedProblem:
    if not L > 0:
        raise ValueError("L must be positive")
    requests = tuple(requests)
    imbalance = compute_imbalance(network.vertex_count, requests)
    sink = network.vertex_count
    edges = list(network.edges)
    dummies = []
    for i in imbalance.shortage_vertices:
        capacity = -float(imbalance.r[i])
        dummies.append(DummyEdge(len(edges), i, capacity))
        edges.append(Edge(i, sink, Bpr(L, capacity, alpha, beta, linearize_at), EdgeClass.DUMMY))
    extended = requests + tuple(Request(float(imbalance.r[i]), i, sink) for i in imbalance.excess_vertices)
    origin_map = np.concatenate([np.arange(network.edge_count), np.full(len(dummies), -1)]).astype(np.int64)
    return ReducedProblem(
        original=network,
        expanded=RoadNetwork(network.vertex_count + 1, edges),
        requests=requests,
        extended_requests=extended,
        sink=sink,
        dummy_edges=tuple(dummies),
        L=float(L),
        origin_edge_map=origin_map,
        imbalance=imbalance,
    )


def delta_unfulfilled(dummy_flows, kappa, R: float) -> float:
    """Fraction of rebalancing demand not delivered: ``|x - kappa|_1 / (2 R)``."""
    if R <= 0:
        return 0.0
    diff = np.asarray(dummy_flows, dtype=float) - np.asarray(kappa, dtype=float)
    return float(np.sum(np.abs(diff)) / (2.0 * R))


def theorem_L(real_cost_bound: float, R: float, dummy_edge_count: int, delta: float) -> float:
    """Conservative dummy free-flow time guaranteeing at most ``delta`` unfulfilled."""
    if min(real_cost_bound, R, dummy_edge_count) <= 0 or not 0 < delta <= 1:
        raise ValueError("arguments must be positive and delta in (0, 1]")
    return real_cost_bound * dummy_edge_count / (2.4 * R * delta * delta)


def extract_real_flows(reduced, x: np.ndarray) -> np.ndarray:
    """Flows on the original edges; expanded edges without an original are dropped."""
    x = np.asarray(x, dtype=float)
    mapping = reduced.origin_edge_map
    keep = mapping >= 0
    out = np.zeros(reduced.original.edge_count)
    np.add.at(out, mapping[keep], x[keep])
    return out


@dataclass
class AmodSolution:
    reduced: ReducedProblem
    flows: np.ndarray
    real_flows: np.ndarray
    dummy_flows: np.ndarray
    real_cost: float
    dummy_cost: float
    delta: float
    shortfall: np.ndarray
    trace: list[IterationRecord]
    termination: Termination
    iterations: int
    final_gap: float
    exogenous: np.ndarray = field(repr=False, default=None)

    @property
    def L(self) -> float:
        return self.reduced.L


class _Scorer:
    """Exact-BPR real and dummy costs plus delta for expanded-graph flows."""

    def __init__(self, reduced: ReducedProblem, reference: RoadNetwork, exogenous: np.ndarray):
        if reference.edge_count != reduced.original.edge_count:
            raise ValueError("reference network must share the original edge order")
        self.reduced = reduced
        self.real_costs = CostTable([exact(e.cost) for e in reference.edges], exogenous)
        dummy_fns = [exact(reduced.expanded.edges[d.edge].cost) for d in reduced.dummy_edges]
        self.dummy_costs = CostTable(dummy_fns)
        self.dummy_index = reduced.dummy_index
        self.kappa = reduced.kappa
        self.R = reduced.total_rebalancing

    def __call__(self, x: np.ndarray) -> dict:
        real = extract_real_flows(self.reduced, x)
        dummy = x[self.dummy_index]
        return {
            "real_cost": self.real_costs.total_cost(real),
            "dummy_cost": self.dummy_costs.total_cost(dummy) if len(dummy) else 0.0,
            "delta": delta_unfulfilled(dummy, self.kappa, self.R),
        }


def _lift(reduced: ReducedProblem, values: np.ndarray) -> np.ndarray:
    out = np.zeros(reduced.expanded.edge_count)
    keep = reduced.origin_edge_map >= 0
    out[keep] = values[reduced.origin_edge_map[keep]]
    return out


def _solve_reduced(
    reduced: ReducedProblem,
    config: SolverConfig,
    exogenous: ExogenousLoad | np.ndarray | None,
    reference: RoadNetwork | None,
    x0: np.ndarray | None = None,
    on_iterate=None,
) -> AmodSolution:
    original = reduced.original
    if exogenous is None:
        exo = np.zeros(original.edge_count)
    elif isinstance(exogenous, ExogenousLoad):
        exo = exogenous.per_edge(reference or original)
    else:
        exo = np.asarray(exogenous, dtype=float)
    problem = AssignmentProblem(
        reduced.expanded,
        reduced.extended_requests,
        exogenous=_lift(reduced, exo),
        objective=Objective.SYSTEM_OPTIMUM,
        validate=False,
    )
    scorer = _Scorer(reduced, reference or original, exo)
    result: FrankWolfeResult = frank_wolfe(problem, config, x0=x0, monitor=scorer, on_iterate=on_iterate)
    x = result.flows
    metrics = scorer(x)
    dummy = x[reduced.dummy_index]
    return AmodSolution(
        reduced=reduced,
        flows=x,
        real_flows=extract_real_flows(reduced, x),
        dummy_flows=dummy,
        real_cost=metrics["real_cost"],
        dummy_cost=metrics["dummy_cost"],
        delta=metrics["delta"],
        shortfall=dummy - reduced.kappa,
        trace=result.trace,
        termination=result.termination,
        iterations=result.iterations,
        final_gap=result.final_gap,
        exogenous=exo,
    )


def _validated(network: RoadNetwork, requests: Sequence[Request]) -> tuple[Request, ...]:
    requests = tuple(requests)
    errors = validate_demand(network, requests)
    if errors:
        raise InvalidRequest("; ".join(errors))
    return requests


def solve_amod(
    network: RoadNetwork,
    requests: Sequence[Request],
    L: float | None = None,
    target_delta: float | None = None,
    config: SolverConfig = SolverConfig(),
    *,
    exogenous: ExogenousLoad | np.ndarray | None = None,
    reference: RoadNetwork | None = None,
    alpha: float = DEFAULT_ALPHA,
    beta: int = DEFAULT_BETA,
    linearize_at: float | None = DEFAULT_LINEARIZE_AT,
    L_bounds: tuple[float, float] = (3.0, 192.0),
    on_iterate=None,
) -> AmodSolution:
    """Route passengers and rebalancers jointly.

    Give ``L`` or ``target_delta`` (not both); with neither, ``L = 96``.
    ``reference`` supplies the cost functions used to score the real cost when
    ``network`` carries a surrogate cost model; it defaults to ``network``.
    ``on_iterate(k, x)`` sees each expanded-graph iterate of a fixed-``L`` solve.
    """
    if L is not None and target_delta is not None:
        raise ValueError("give L or target_delta, not both")
    requests = _validated(network, requests)
    if target_delta is not None:
        return tune_L(
            network, requests, target_delta, config, L_bounds,
            exogenous=exogenous, reference=reference, alpha=alpha, beta=beta, linearize_at=linearize_at,
        )[1]
    reduced = build_reduction(network, requests, DEFAULT_L if L is None else L,
                              alpha=alpha, beta=beta, linearize_at=linearize_at)
    return _solve_reduced(reduced, config, exogenous, reference, on_iterate=on_iterate)


def tune_L(
    network: RoadNetwork,
    requests: Sequence[Request],
    target_delta: float,
    config: SolverConfig = SolverConfig(),
    L_bounds: tuple[float, float] = (3.0, 192.0),
    *,
    exogenous: ExogenousLoad | np.ndarray | None = None,
    reference: RoadNetwork | None = None,
    alpha: float = DEFAULT_ALPHA,
    beta: int = DEFAULT_BETA,
    linearize_at: float | None = DEFAULT_LINEARIZE_AT,
    max_probes: int = 20,
    min_ratio: float = 1.1,
) -> tuple[float, AmodSolution]:
    """Geometric bisection for the smallest probed ``L`` with ``delta(L) <= target_delta``.

    Each probe warm-starts from the previous probe's flows; the expanded graph
    is the same for every ``L`` so those flows stay feasible.
    """
    if not 0 < target_delta < 1:
        raise ValueError("target_delta must lie in (0, 1)")
    lo, hi = map(float, L_bounds)
    if not 0 < lo < hi:
        raise ValueError("L_bounds must satisfy 0 < low < high")
    requests = _validated(network, requests)
    probes = 0
    warm = None

    def probe(L: float) -> AmodSolution:
        nonlocal probes, warm
        probes += 1
        reduced = build_reduction(network, requests, L, alpha=alpha, beta=beta, linearize_at=linearize_at)
        solution = _solve_reduced(reduced, config, exogenous, reference, x0=warm)
        warm = solution.flows
        log.debug("probe L=%g delta=%g", L, solution.delta)
        return solution

    best = probe(hi)
    if best.delta > target_delta:
        raise TargetUnreachable(f"delta {best.delta:.3g} at L={hi:g} exceeds target {target_delta:g}")
    at_lo = probe(lo)
    if at_lo.delta <= target_delta:
        return lo, at_lo
    while probes < max_probes and hi / lo >= min_ratio:
        mid = math.sqrt(lo * hi)
        solution = probe(mid)
        if solution.delta <= target_delta:
            hi, best = mid, solution
        else:
            lo = mid
    return hi, best
