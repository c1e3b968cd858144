"""Small bundled instances and synthetic generators used by tests and examples."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .costs import Bpr
from .demand import Request
from .network import Edge, RoadNetwork


@dataclass(frozen=True)
class Instance:
    name: str
    network: RoadNetwork
    requests: tuple[Request, ...]


def _network(vertex_count: int, spec, linearize_at: float | None = None) -> RoadNetwork:
    """``spec`` rows are ``(tail, head, free_flow, capacity)``."""
    return RoadNetwork(
        vertex_count,
        [Edge(t, h, Bpr(float(phi), float(kap), linearize_at=linearize_at)) for t, h, phi, kap in spec],
    )


def _both_ways(pairs):
    rows = []
    for t, h, phi, kap in pairs:
        rows.append((t, h, phi, kap))
        rows.append((h, t, phi, kap))
    return rows


def two_parallel_edges() -> Instance:
    net = _network(2, [(0, 1, 1, 1), (0, 1, 1, 1)])
    return Instance("two-parallel-edges", net, (Request(2.0, 0, 1),))


def triangle() -> Instance:
    net = _network(3, [(0, 1, 1, 1), (1, 2, 1, 1), (0, 2, 3, 1)])
    return Instance("triangle", net, (Request(1.0, 0, 2),))


def two_vertex_cycle() -> Instance:
    net = _network(2, [(0, 1, 1, 1), (1, 0, 1, 1)])
    return Instance("two-vertex-cycle", net, (Request(1.0, 0, 1),))


def figure2() -> Instance:
    """Five-vertex example with excess at 2 and shortages at 3 and 4.

    Vertex 0 is unused so labels match the usual 1-based drawing; the dummy
    sink of the reduction becomes vertex 6.
    """
    pairs = [
        (1, 2, 2.0, 4.0),
        (2, 3, 1.5, 3.0),
        (3, 4, 2.0, 3.0),
        (4, 1, 1.0, 4.0),
        (2, 5, 1.0, 2.0),
        (5, 4, 1.5, 2.0),
    ]
    net = _network(6, _both_ways(pairs))
    demand = (
        Request(2.0, 1, 2),
        Request(1.0, 2, 4),
        Request(1.0, 3, 4),
        Request(2.0, 4, 1),
        Request(2.0, 4, 2),
    )
    return Instance("figure2", net, demand)


def tiny_tap_instances() -> list[Instance]:
    """Ten instances with at most 8 vertices, 12 edges and 3 requests."""
    out = [two_parallel_edges(), triangle()]
    out.append(Instance(
        "asymmetric-parallel",
        _network(2, [(0, 1, 1, 1), (0, 1, 2, 1)]),
        (Request(2.0, 0, 1),),
    ))
    out.append(Instance(
        "three-route",
        _network(3, [(0, 1, 1, 1), (1, 2, 1, 1), (0, 2, 2.5, 2), (0, 2, 3, 4)]),
        (Request(3.0, 0, 2),),
    ))
    out.append(Instance(
        "braess",
        _network(4, [(0, 1, 1, 1), (0, 2, 2, 4), (1, 3, 2, 4), (2, 3, 1, 1), (1, 2, 0.25, 2)]),
        (Request(2.0, 0, 3),),
    ))
    out.append(Instance(
        "shared-bottleneck",
        _network(5, [(0, 2, 1, 2), (1, 2, 1, 2), (2, 3, 1, 1.5), (2, 4, 1, 3), (4, 3, 1, 3), (0, 3, 4, 2)]),
        (Request(1.5, 0, 3), Request(1.0, 1, 3)),
    ))
    out.append(Instance(
        "diamond-two-commodities",
        _network(4, [(0, 1, 1, 1), (0, 2, 1.2, 1), (1, 3, 1.1, 1), (2, 3, 1, 1), (1, 2, 0.5, 1), (2, 1, 0.5, 1)]),
        (Request(1.0, 0, 3), Request(0.5, 1, 2)),
    ))
    out.append(Instance(
        "ring-three-requests",
        _network(4, _both_ways([(0, 1, 1, 1), (1, 2, 1.5, 1), (2, 3, 1, 2), (3, 0, 2, 1.5)])),
        (Request(1.0, 0, 2), Request(0.8, 1, 3), Request(0.6, 3, 1)),
    ))
    out.append(Instance(
        "ladder",
        _network(6, [
            (0, 1, 1, 2), (1, 2, 1, 2), (3, 4, 1.2, 2), (4, 5, 1.2, 2),
            (0, 3, 0.5, 1), (1, 4, 0.5, 1), (2, 5, 0.5, 1), (3, 1, 0.7, 1),
            (4, 2, 0.7, 1),
        ]),
        (Request(2.0, 0, 5), Request(1.0, 0, 2)),
    ))
    out.append(Instance(
        "eight-vertex-corridor",
        _network(8, [
            (0, 1, 1, 2), (1, 2, 1, 2), (2, 3, 1, 2), (3, 7, 1, 2),
            (0, 4, 1.3, 1), (4, 5, 1.3, 1), (5, 6, 1.3, 1), (6, 7, 1.3, 1),
            (1, 5, 0.4, 0.5), (5, 2, 0.4, 0.5), (2, 6, 0.4, 0.5), (6, 3, 0.4, 0.5),
        ]),
        (Request(2.5, 0, 7), Request(0.5, 1, 6)),
    ))
    return out


def balanced_circulation() -> Instance:
    """Demand that needs no rebalancing and whose destinations are all origins."""
    pairs = [(0, 1, 1.0, 2.0), (1, 2, 1.5, 2.0), (2, 3, 1.0, 2.0), (3, 0, 1.2, 2.0), (0, 2, 2.5, 1.0)]
    net = _network(4, _both_ways(pairs))
    demand = (
        Request(1.0, 0, 2),
        Request(1.0, 2, 0),
        Request(0.5, 1, 3),
        Request(0.5, 3, 1),
    )
    return Instance("balanced-circulation", net, demand)


def grid_network(
    rows: int,
    cols: int,
    seed: int = 0,
    free_flow: tuple[float, float] = (1.0, 2.0),
    capacity: tuple[float, float] = (5.0, 10.0),
    linearize_at: float | None = None,
) -> RoadNetwork:
    """Bidirectional ``rows x cols`` grid with uniformly drawn BPR parameters.

    Vertex ``r * cols + c``; edges are listed right-neighbour then
    down-neighbour for each vertex, each followed by its reverse.
    """
    rng = np.random.default_rng(seed)
    pairs = []
    for r in range(rows):
        for c in range(cols):
            v = r * cols + c
            if c + 1 < cols:
                pairs.append((v, v + 1))
            if r + 1 < rows:
                pairs.append((v, v + cols))
    edges = []
    for a, b in pairs:
        for t, h in ((a, b), (b, a)):
            phi = rng.uniform(*free_flow)
            kap = rng.uniform(*capacity)
            edges.append(Edge(t, h, Bpr(phi, kap, linearize_at=linearize_at)))
    return RoadNetwork(rows * cols, edges)


def random_requests(
    vertex_count: int, count: int, seed: int = 0, intensity: tuple[float, float] = (0.5, 1.5)
) -> tuple[Request, ...]:
    """Uniform origin-destination pairs over all vertices, distinct endpoints."""
    rng = np.random.default_rng(seed)
    o = rng.integers(0, vertex_count, size=count)
    d = rng.integers(0, vertex_count - 1, size=count)
    d = np.where(d >= o, d + 1, d)
    lam = rng.uniform(*intensity, size=count)
    return tuple(Request(float(x), int(a), int(b)) for x, a, b in zip(lam, o, d))


def unbalanced20() -> Instance:
    """20-vertex ring-with-chords network; demand flows mostly towards a few hubs."""
    rng = np.random.default_rng(20)
    pairs = []
    for v in range(20):
        pairs.append((v, (v + 1) % 20, rng.uniform(1, 3), rng.uniform(3, 6)))
    for v in range(0, 20, 3):
        pairs.append((v, (v + 7) % 20, rng.uniform(2, 4), rng.uniform(3, 6)))
    net = _network(20, _both_ways(pairs))
    hubs = (0, 7, 13)
    demand = []
    for k, o in enumerate(range(20)):
        if o in hubs:
            continue
        demand.append(Request(float(np.round(rng.uniform(0.5, 1.5), 3)), o, hubs[k % 3]))
    demand += [Request(1.0, 0, 10), Request(0.8, 7, 3), Request(0.6, 13, 18)]
    return Instance("unbalanced20", net, tuple(demand))


def congested() -> Instance:
    """6 x 6 grid with demand close to capacity, for cost-model comparisons."""
    net = grid_network(6, 6, seed=6, free_flow=(1.0, 2.0), capacity=(2.0, 4.0))
    demand = random_requests(36, 40, seed=6, intensity=(0.5, 1.5))
    return Instance("congested", net, demand)


def scalability_grid(requests: int = 10_000, seed: int = 0) -> Instance:
    """50 x 50 grid with ``requests`` uniform trips; capacities sized for moderate congestion."""
    net = grid_network(50, 50, seed=seed, free_flow=(1.0, 2.0), capacity=(20.0, 40.0), linearize_at=5.0)
    return Instance("grid50", net, random_requests(2500, requests, seed=seed + 1))
