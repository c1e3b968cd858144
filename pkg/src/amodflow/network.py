"""Directed road networks with per-edge cost functions."""
from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Iterable, Sequence

import numpy as np

from .costs import CostFunction, CostTable, nominal_capacity


class EdgeClass(str, enum.Enum):
    REAL = "real"
    DUMMY = "dummy"
    AUXILIARY = "auxiliary"


@dataclass(frozen=True)
class Edge:
    tail: int
    head: int
    cost: CostFunction
    edge_class: EdgeClass = EdgeClass.REAL


class RoadNetwork:
    """Immutable directed multigraph.

    Edge order is fixed at construction and every flow vector in the package
    is indexed by it.  Out-adjacency is kept in CSR form (``indptr`` /
    ``out_edges``) with each vertex's edges in increasing index order.
    """

    def __init__(self, vertex_count: int, edges: Iterable[Edge]):
        self.vertex_count = int(vertex_count)
        if self.vertex_count < 0:
            raise ValueError("vertex_count must be nonnegative")
        self.edges: tuple[Edge, ...] = tuple(edges)
        n = self.vertex_count
        tails = np.fromiter((e.tail for e in self.edges), dtype=np.int64, count=len(self.edges))
        heads = np.fromiter((e.head for e in self.edges), dtype=np.int64, count=len(self.edges))
        bad = (tails < 0) | (tails >= n) | (heads < 0) | (heads >= n)
        if bad.any():
            e = int(np.flatnonzero(bad)[0])
            raise ValueError(f"edge {e} has an endpoint outside [0, {n})")
        order = np.argsort(tails, kind="stable")
        self.tails = tails
        self.heads = heads
        self.out_edges = order.astype(np.int64)
        self.indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(tails, minlength=n), out=self.indptr[1:])
        self.csr_heads = heads[order]
        for arr in (self.tails, self.heads, self.out_edges, self.indptr, self.csr_heads):
            arr.setflags(write=False)

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def __len__(self) -> int:
        return len(self.edges)

    def __repr__(self) -> str:
        return f"RoadNetwork(vertex_count={self.vertex_count}, edges={self.edge_count})"

    def out_of(self, vertex: int) -> Sequence[int]:
        return self.out_edges[self.indptr[vertex] : self.indptr[vertex + 1]]

    @cached_property
    def adjacency(self) -> tuple[tuple[int, ...], ...]:
        return tuple(tuple(int(e) for e in self.out_of(v)) for v in range(self.vertex_count))

    @cached_property
    def costs(self) -> CostTable:
        return CostTable([e.cost for e in self.edges])

    @cached_property
    def edge_classes(self) -> np.ndarray:
        return np.array([e.edge_class.value for e in self.edges], dtype=object)

    def mask(self, edge_class: EdgeClass) -> np.ndarray:
        return self.edge_classes == EdgeClass(edge_class).value

    def free_flow_times(self) -> np.ndarray:
        return self.costs.travel_time(np.zeros(self.edge_count))

    def with_costs(self, transform: Callable[[Edge], CostFunction]) -> "RoadNetwork":
        """Copy with each edge's cost replaced by ``transform(edge)``."""
        return RoadNetwork(
            self.vertex_count,
            (Edge(e.tail, e.head, transform(e), e.edge_class) for e in self.edges),
        )

    def divergence(self, flow: np.ndarray) -> np.ndarray:
        """Per-vertex outflow minus inflow."""
        flow = np.asarray(flow, dtype=float)
        out = np.bincount(self.tails, weights=flow, minlength=self.vertex_count)
        inn = np.bincount(self.heads, weights=flow, minlength=self.vertex_count)
        return out - inn


@dataclass(frozen=True)
class ExogenousLoad:
    """Background traffic, either a uniform fraction of capacity or explicit flows."""

    gamma: float | None = None
    flows: tuple[float, ...] | None = None

    def __post_init__(self):
        if (self.gamma is None) == (self.flows is None):
            raise ValueError("give exactly one of gamma or flows")
        if self.gamma is not None and self.gamma < 0:
            raise ValueError("gamma must be nonnegative")
        if self.flows is not None and any(f < 0 for f in self.flows):
            raise ValueError("exogenous flows must be nonnegative")

    def per_edge(self, network: RoadNetwork) -> np.ndarray:
        """Expand to one value per edge; only Real edges ever carry exogenous flow."""
        real = network.mask(EdgeClass.REAL)
        if self.gamma is not None:
            caps = np.array([nominal_capacity(e.cost) for e in network.edges])
            return np.where(real, self.gamma * caps, 0.0)
        flows = np.asarray(self.flows, dtype=float)
        if flows.shape != (network.edge_count,):
            raise ValueError("explicit exogenous flows must match the edge count")
        return np.where(real, flows, 0.0)
