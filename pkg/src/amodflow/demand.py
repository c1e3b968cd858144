"""Origin-destination demand and the rebalancing imbalance it induces."""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


class InvalidRequest(ValueError):
    pass


@dataclass(frozen=True)
class Request:
    intensity: float
    origin: int
    destination: int


@dataclass(frozen=True)
class ImbalanceProfile:
    """Net vehicle surplus per vertex.

    ``r[i] > 0`` means more vehicles arrive at ``i`` than depart (excess),
    ``r[i] < 0`` means a shortage that rebalancers must cover.
    """

    r: np.ndarray
    total: float

    @property
    def shortage_vertices(self) -> tuple[int, ...]:
        return tuple(int(i) for i in np.flatnonzero(self.r < 0))

    @property
    def excess_vertices(self) -> tuple[int, ...]:
        return tuple(int(i) for i in np.flatnonzero(self.r > 0))


def _check(vertex_count: int, m: int, req: Request) -> list[str]:
    errors = []
    if not req.intensity > 0:
        errors.append(f"request {m}: nonpositive intensity {req.intensity!r}")
    for name, v in (("origin", req.origin), ("destination", req.destination)):
        if not 0 <= v < vertex_count:
            errors.append(f"request {m}: {name} {v} out of range")
    if req.origin == req.destination:
        errors.append(f"request {m}: origin equals destination")
    return errors


def compute_imbalance(vertex_count: int, requests: Iterable[Request]) -> ImbalanceProfile:
    parts: dict[int, list[float]] = defaultdict(list)
    for m, req in enumerate(requests):
        errors = _check(vertex_count, m, req)
        if errors:
            raise InvalidRequest("; ".join(errors))
        parts[req.destination].append(req.intensity)
        parts[req.origin].append(-req.intensity)
    r = np.zeros(vertex_count)
    for v, terms in parts.items():
        r[v] = math.fsum(terms)
    total = math.fsum(r[r > 0])
    return ImbalanceProfile(r, total)


def validate_demand(network, requests: Sequence[Request]) -> list[str]:
    """Every problem with ``requests`` on ``network``; empty when the demand is usable."""
    from .paths import reachable

    errors: list[str] = []
    routable = []
    for m, req in enumerate(requests):
        found = _check(network.vertex_count, m, req)
        errors.extend(found)
        if not found:
            routable.append(m)
    if routable:
        ok = reachable(
            network,
            np.array([requests[m].origin for m in routable]),
            np.array([requests[m].destination for m in routable]),
        )
        for m, fine in zip(routable, ok):
            if not fine:
                req = requests[m]
                errors.append(f"request {m}: destination {req.destination} unreachable from {req.origin}")
    return errors
