"""AMoD with customer loss: execute-or-idle routing on an expanded graph.

Each request's vehicle either executes (``o -> d' -> n``: carry the passenger
to the copy ``d'`` of its destination, then rebalance to the sink ``n``) or
idles (``o -> n -> n'``), paying ``c_l`` per unit on ``(n, n')``.

End edges ``(o, n)`` sit at the origins with capacity equal to the demand
departing there, so a served vehicle must drive back to where it is needed,
as in the plain rebalancing reduction.  An idle vehicle uses the end edge of
its own origin.

Vertex layout of the expanded graph: originals ``0..V-1``, sink ``n = V``,
idle sink ``n' = V + 1``, then one copy per destination in increasing order.
The first ``E`` edges are the original edges in their original order (edges
leaving a destination vertex are re-rooted at its copy), followed by the
between, end, self and ``(n, n')`` edges.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .costs import DEFAULT_ALPHA, DEFAULT_BETA, DEFAULT_LINEARIZE_AT, Bpr, Constant, CostTable, exact
from .demand import InvalidRequest, Request, validate_demand
from .network import Edge, EdgeClass, ExogenousLoad, RoadNetwork
from .paths import route
from .reduction import DEFAULT_L, delta_unfulfilled
from .solver import (
    AssignmentProblem,
    IterationRecord,
    Objective,
    SolverConfig,
    Termination,
    frank_wolfe,
)


class EdgeRole(str, enum.Enum):
    IN = "in"
    OUT = "out"
    BETWEEN = "between"
    END = "end"
    SELF = "self"
    LOSS = "loss"


class Choice(str, enum.Enum):
    EXECUTE = "execute"
    IDLE = "idle"


def default_epsilon(network: RoadNetwork) -> float:
    """``1e-6`` times the smallest free-flow time on the network."""
    phi = network.free_flow_times()
    positive = phi[phi > 0]
    return 1e-6 * float(positive.min()) if len(positive) else 1e-6


def execute_cost_bound(network: RoadNetwork, L: float, alpha: float = DEFAULT_ALPHA, beta: int = DEFAULT_BETA) -> float:
    """Loss cost above which executing a request is always preferred.

    ``|V| * max(phi) * (1 + alpha * 5**beta) + 2 * 1.15 * L``.
    """
    phi = network.free_flow_times()
    top = float(phi.max()) if len(phi) else 0.0
    return network.vertex_count * top * (1 + alpha * 5**beta) + L * 1.15 * 2


@dataclass(frozen=True)
class LossGraph:
    original: RoadNetwork
    expanded: RoadNetwork
    requests: tuple[Request, ...]
    sink: int
    idle_sink: int
    dest_copies: dict[int, int]
    roles: tuple[EdgeRole, ...]
    end_edges: dict[int, int]
    loss_edge: int
    loss_cost: float
    epsilon: float
    L: float

    def role_mask(self, *roles: EdgeRole) -> np.ndarray:
        wanted = {EdgeRole(r) for r in roles}
        return np.array([r in wanted for r in self.roles], dtype=bool)

    @property
    def end_index(self) -> np.ndarray:
        return np.array(sorted(self.end_edges.values()), dtype=np.int64)

    @property
    def end_capacity(self) -> np.ndarray:
        return np.array([self.expanded.edges[e].cost.capacity for e in self.end_index])


def build_loss_graph(
    network: RoadNetwork,
    requests: Sequence[Request],
    loss_cost: float,
    epsilon: float | None = None,
    L: float = DEFAULT_L,
    *,
    alpha: float = DEFAULT_ALPHA,
    beta: int = DEFAULT_BETA,
    linearize_at: float | None = DEFAULT_LINEARIZE_AT,
) -> LossGraph:
    requests = tuple(requests)
    epsilon = default_epsilon(network) if epsilon is None else float(epsilon)
    if not loss_cost >= 0 or not epsilon > 0 or not L > 0:
        raise ValueError("need loss_cost >= 0, epsilon > 0 and L > 0")
    V = network.vertex_count
    sink, idle_sink = V, V + 1
    dests = sorted({r.destination for r in requests})
    origins = sorted({r.origin for r in requests})
    copies = {d: V + 2 + k for k, d in enumerate(dests)}
    departing: dict[int, list[float]] = {o: [] for o in origins}
    for r in requests:
        departing[r.origin].append(r.intensity)

    edges: list[Edge] = []
    roles: list[EdgeRole] = []

    def add(tail, head, cost, cls, role):
        edges.append(Edge(tail, head, cost, cls))
        roles.append(role)
        return len(edges) - 1

    for e in network.edges:
        if e.tail in copies:
            add(copies[e.tail], e.head, e.cost, e.edge_class, EdgeRole.OUT)
        else:
            add(e.tail, e.head, e.cost, e.edge_class, EdgeRole.IN)
    for d in dests:
        add(d, copies[d], Constant(epsilon), EdgeClass.AUXILIARY, EdgeRole.BETWEEN)
    end_edges = {}
    for o in origins:
        kappa = math.fsum(departing[o])
        end_edges[o] = add(o, sink, Bpr(L, kappa, alpha, beta, linearize_at), EdgeClass.DUMMY, EdgeRole.END)
    for d in dests:
        if d in departing:
            add(copies[d], d, Constant(epsilon), EdgeClass.AUXILIARY, EdgeRole.SELF)
    loss_edge = add(sink, idle_sink, Constant(loss_cost), EdgeClass.AUXILIARY, EdgeRole.LOSS)
    return LossGraph(
        original=network,
        expanded=RoadNetwork(V + 2 + len(dests), edges),
        requests=requests,
        sink=sink,
        idle_sink=idle_sink,
        dest_copies=copies,
        roles=tuple(roles),
        end_edges=end_edges,
        loss_edge=loss_edge,
        loss_cost=float(loss_cost),
        epsilon=epsilon,
        L=float(L),
    )


def all_or_nothing_loss(
    graph: LossGraph,
    weights: np.ndarray,
    requests: Sequence[Request] | None = None,
    threads: int | None = None,
) -> tuple[np.ndarray, list[Choice]]:
    """Route each request on the cheaper of its execute and idle options.

    Ties go to execute.  Returns the summed edge flows and the per-request choice.
    """
    requests = graph.requests if requests is None else tuple(requests)
    w = np.asarray(weights, dtype=float)
    net = graph.expanded
    origins = np.array([r.origin for r in requests], dtype=np.int64)
    copies = np.array([graph.dest_copies[r.destination] for r in requests], dtype=np.int64)
    lam = np.array([r.intensity for r in requests])
    sinks = np.full(len(requests), graph.sink, dtype=np.int64)
    zeros = np.zeros(len(requests))
    _, leg1 = route(net, w, origins, copies, zeros, threads)
    _, leg2 = route(net, w, copies, sinks, zeros, threads)
    c_exe = leg1 + leg2
    idle_edge = np.array([graph.end_edges[int(o)] for o in origins], dtype=np.int64)
    c_idle = w[idle_edge] + w[graph.loss_edge]
    idle = c_idle < c_exe
    run = np.where(idle, 0.0, lam)
    flow, _ = route(net, w, origins, copies, run, threads)
    flow += route(net, w, copies, sinks, run, threads)[0]
    np.add.at(flow, idle_edge[idle], lam[idle])
    flow[graph.loss_edge] += float(lam[idle].sum())
    return flow, [Choice.IDLE if i else Choice.EXECUTE for i in idle]


@dataclass
class LossSolution:
    graph: LossGraph
    flows: np.ndarray
    idle_fraction: np.ndarray
    losses: np.ndarray
    loss_total_cost: float
    real_flows: np.ndarray
    real_cost: float
    dummy_cost: float
    delta: float
    trace: list[IterationRecord]
    termination: Termination
    iterations: int
    final_gap: float
    exogenous: np.ndarray = field(repr=False, default=None)

    @property
    def shortfall(self) -> np.ndarray:
        return self.flows[self.graph.end_index] - self.graph.end_capacity


def solve_amod_loss(
    network: RoadNetwork,
    requests: Sequence[Request],
    loss_cost: float,
    config: SolverConfig = SolverConfig(),
    *,
    epsilon: float | None = None,
    L: float = DEFAULT_L,
    exogenous: ExogenousLoad | np.ndarray | None = None,
    reference: RoadNetwork | None = None,
    alpha: float = DEFAULT_ALPHA,
    beta: int = DEFAULT_BETA,
    linearize_at: float | None = DEFAULT_LINEARIZE_AT,
    on_iterate=None,
) -> LossSolution:
    """Frank-Wolfe on the loss graph; idle fractions are averaged like the flows.

    ``real_cost`` is evaluated with exact BPR over the (possibly re-rooted)
    original edges, using ``reference`` costs when given.  ``on_iterate(k, x)``
    sees each loss-graph iterate.
    """
    requests = tuple(requests)
    errors = validate_demand(network, requests)
    if errors:
        raise InvalidRequest("; ".join(errors))
    graph = build_loss_graph(network, requests, loss_cost, epsilon, L,
                             alpha=alpha, beta=beta, linearize_at=linearize_at)
    reference = reference or network
    E = network.edge_count
    if exogenous is None:
        exo = np.zeros(E)
    elif isinstance(exogenous, ExogenousLoad):
        exo = exogenous.per_edge(reference)
    else:
        exo = np.asarray(exogenous, dtype=float)
    shift = np.zeros(graph.expanded.edge_count)
    shift[:E] = exo
    problem = AssignmentProblem(graph.expanded, requests, exogenous=shift,
                                objective=Objective.SYSTEM_OPTIMUM, validate=False)

    real_costs = CostTable([exact(e.cost) for e in reference.edges], exo)
    end_index = graph.end_index
    end_costs = CostTable([exact(graph.expanded.edges[e].cost) for e in end_index])
    kappa = graph.end_capacity
    R = float(kappa.sum())

    def metrics(x):
        return {
            "real_cost": real_costs.total_cost(x[:E]),
            "dummy_cost": end_costs.total_cost(x[end_index]) if len(end_index) else 0.0,
            "delta": delta_unfulfilled(x[end_index], kappa, R),
        }

    def direction(weights):
        y, choices = all_or_nothing_loss(graph, weights, threads=config.threads)
        return y, np.array([c is Choice.IDLE for c in choices], dtype=float)

    result = frank_wolfe(problem, config, direction=direction, monitor=metrics, on_iterate=on_iterate)
    x = result.flows
    rho = np.clip(result.auxiliary, 0.0, 1.0)
    lam = np.array([r.intensity for r in requests])
    losses = rho * lam
    final = metrics(x)
    return LossSolution(
        graph=graph,
        flows=x,
        idle_fraction=rho,
        losses=losses,
        loss_total_cost=graph.loss_cost * float(losses.sum()),
        real_flows=x[:E].copy(),
        real_cost=final["real_cost"],
        dummy_cost=final["dummy_cost"],
        delta=final["delta"],
        trace=result.trace,
        termination=result.termination,
        iterations=result.iterations,
        final_gap=result.final_gap,
        exogenous=exo,
    )
